#include "llmap/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <unordered_map>

#include "llmap/rng.hpp"

namespace llmap::oracle {

namespace {

constexpr double kSumTol = 1e-12;

std::size_t state_index(const SyntheticModel& m, std::span<const int> hist) {
  const std::size_t a = m.tokens.size();
  std::size_t offset = 0;
  std::size_t block = 1;
  for (std::size_t len = 0; len < hist.size(); ++len) {
    offset += block;
    block *= a;
  }
  std::size_t idx = 0;
  for (int t : hist) idx = idx * a + static_cast<std::size_t>(t);
  return offset + idx;
}

// Push a token onto a history capped at m.history entries.
void push_history(const SyntheticModel& m, std::vector<int>& hist, int tok) {
  hist.push_back(tok);
  if (hist.size() > static_cast<std::size_t>(m.history)) {
    hist.erase(hist.begin());
  }
}

int token_index(const SyntheticModel& m, char c) {
  auto pos = m.tokens.find(c);
  if (pos == std::string::npos) {
    throw ValidationError(std::string("token '") + c +
                          "' is not in the oracle alphabet");
  }
  return static_cast<int>(pos);
}

// Log-probability of a stop-terminated response under one state table.
double walk_log_prob(const SyntheticModel& m,
                     const std::vector<std::vector<double>>& table,
                     const std::string& response) {
  if (response.empty()) {
    throw ValidationError("empty response cannot be scored");
  }
  if (response.back() != m.stop) {
    throw ValidationError("response '" + response +
                          "' does not end with the stop token");
  }
  const std::size_t body_len = response.size() - 1;
  if (body_len > static_cast<std::size_t>(m.max_len)) {
    throw ValidationError("response '" + response +
                          "' exceeds the enumeration horizon");
  }
  const std::size_t stop_idx = m.tokens.size();
  std::vector<int> hist;
  double log_p = 0.0;
  for (std::size_t t = 0; t < body_len; ++t) {
    if (response[t] == m.stop || response[t] == m.overflow_marker) {
      throw ValidationError("response '" + response +
                            "' contains a reserved character mid-string");
    }
    int tok = token_index(m, response[t]);
    log_p += std::log(table[state_index(m, hist)][tok]);
    push_history(m, hist, tok);
  }
  log_p += std::log(table[state_index(m, hist)][stop_idx]);
  return log_p;
}

double table_overflow_mass(const SyntheticModel& m,
                           const std::vector<std::vector<double>>& table) {
  const std::size_t a = m.tokens.size();
  const std::size_t stop_idx = a;
  double total = 0.0;
  // Depth-first over length-max_len prefixes; continuation mass past the
  // horizon is the overflow event.
  struct Frame {
    std::vector<int> hist;
    int depth;
    double prob;
  };
  std::vector<Frame> stack;
  stack.push_back({{}, 0, 1.0});
  while (!stack.empty()) {
    Frame f = std::move(stack.back());
    stack.pop_back();
    const std::vector<double>& dist = table[state_index(m, f.hist)];
    if (f.depth == m.max_len) {
      total += f.prob * (1.0 - dist[stop_idx]);
      continue;
    }
    for (std::size_t t = 0; t < a; ++t) {
      Frame child;
      child.hist = f.hist;
      push_history(m, child.hist, static_cast<int>(t));
      child.depth = f.depth + 1;
      child.prob = f.prob * dist[t];
      stack.push_back(std::move(child));
    }
  }
  return total;
}

void check_distribution(const SyntheticModel& m,
                        const std::vector<double>& dist, const char* where) {
  if (dist.size() != m.outcome_arity()) {
    throw ValidationError(std::string("oracle '") + m.id + "': " + where +
                          " has wrong arity");
  }
  double sum = 0.0;
  for (std::size_t i = 0; i < dist.size(); ++i) {
    if (!(dist[i] > 0.0)) {
      throw ValidationError(std::string("oracle '") + m.id + "': " + where +
                            " has a non-positive probability");
    }
    sum += dist[i];
  }
  if (std::abs(sum - 1.0) > kSumTol) {
    throw ValidationError(std::string("oracle '") + m.id + "': " + where +
                          " sums to " + std::to_string(sum));
  }
  if (dist.back() < m.p_stop_min - kSumTol) {
    throw ValidationError(std::string("oracle '") + m.id + "': " + where +
                          " stop probability below p_stop_min");
  }
}

// Random point in the feasible sub-simplex: floors on every entry plus the
// stop floor, remaining mass spread by normalized log-normal weights.
std::vector<double> draw_distribution(const SyntheticModel& m, Rng& rng,
                                      double sharpness) {
  const std::size_t arity = m.outcome_arity();
  std::vector<double> dist(arity);
  double floor_total =
      m.p_token_min * static_cast<double>(arity - 1) + m.p_stop_min;
  std::vector<double> weight(arity);
  double wsum = 0.0;
  for (std::size_t i = 0; i < arity; ++i) {
    weight[i] = std::exp(sharpness * rng.normal());
    wsum += weight[i];
  }
  for (std::size_t i = 0; i < arity; ++i) {
    double floor = (i + 1 == arity) ? m.p_stop_min : m.p_token_min;
    dist[i] = floor + (1.0 - floor_total) * (weight[i] / wsum);
  }
  return dist;
}

std::size_t draw_categorical(Rng& rng, std::span<const double> probs) {
  double u = rng.next_unit();
  double acc = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    acc += probs[i];
    if (u <= acc) return i;
  }
  return probs.size() - 1;
}

void require_shared_alphabets(const SyntheticModel& a,
                              const SyntheticModel& b) {
  if (a.prompts != b.prompts || a.tokens != b.tokens || a.stop != b.stop ||
      a.overflow_marker != b.overflow_marker || a.max_len != b.max_len) {
    throw ValidationError("oracles '" + a.id + "' and '" + b.id +
                          "' do not share alphabets");
  }
  for (std::size_t p = 0; p < a.prompt_probs.size(); ++p) {
    if (std::abs(a.prompt_probs[p] - b.prompt_probs[p]) > kSumTol) {
      throw ValidationError("oracles '" + a.id + "' and '" + b.id +
                            "' do not share the prompt distribution");
    }
  }
}

}  // namespace

std::size_t SyntheticModel::state_count() const {
  const std::size_t a = tokens.size();
  std::size_t total = 0;
  std::size_t block = 1;
  for (int len = 0; len <= history; ++len) {
    total += block;
    block *= a;
  }
  return total;
}

void check_model(const SyntheticModel& m) {
  if (m.prompts.empty()) throw ValidationError("oracle has no prompts");
  if (m.tokens.empty()) throw ValidationError("oracle has no tokens");
  if (m.prompts.size() != m.prompt_probs.size()) {
    throw ValidationError("oracle prompt/probability length mismatch");
  }
  if (m.tokens.find(m.stop) != std::string::npos ||
      m.tokens.find(m.overflow_marker) != std::string::npos ||
      m.stop == m.overflow_marker) {
    throw ValidationError("oracle stop/overflow characters collide with tokens");
  }
  if (m.history < 0 || m.max_len < 0) {
    throw ValidationError("oracle history and max_len must be non-negative");
  }
  double psum = 0.0;
  for (double p : m.prompt_probs) {
    if (!(p > 0.0)) throw ValidationError("oracle prompt probability <= 0");
    psum += p;
  }
  if (std::abs(psum - 1.0) > kSumTol) {
    throw ValidationError("oracle prompt probabilities sum to " +
                          std::to_string(psum));
  }
  const std::size_t states = m.state_count();
  if (m.cond.size() != m.prompts.size()) {
    throw ValidationError("oracle conditional table has wrong prompt count");
  }
  for (std::size_t p = 0; p < m.cond.size(); ++p) {
    if (m.cond[p].size() != states) {
      throw ValidationError("oracle conditional table has wrong state count");
    }
    for (std::size_t s = 0; s < states; ++s) {
      check_distribution(m, m.cond[p][s], "conditional state");
    }
  }
  if (m.empty_prompt_cond.size() != states) {
    throw ValidationError("oracle empty-prompt table has wrong state count");
  }
  for (std::size_t s = 0; s < states; ++s) {
    check_distribution(m, m.empty_prompt_cond[s], "empty-prompt state");
  }
}

SyntheticModel random_model(const ModelSpec& spec, std::uint64_t seed) {
  if (spec.prompts == 0 || spec.tokens == 0) {
    throw ValidationError("oracle spec needs at least one prompt and token");
  }
  if (spec.tokens > 20) {
    throw ValidationError("oracle spec supports at most 20 tokens");
  }
  SyntheticModel m;
  m.id = "oracle";
  m.history = spec.history;
  m.max_len = spec.max_len;
  m.p_stop_min = spec.p_stop_min;
  m.p_token_min = spec.p_token_min;
  m.tokens = std::string("abcdefghijklmnopqrst").substr(0, spec.tokens);
  for (std::size_t p = 0; p < spec.prompts; ++p) {
    m.prompts.push_back("q" + std::to_string(p));
  }

  Rng rng(seed);
  m.prompt_probs.assign(spec.prompts, 1.0 / static_cast<double>(spec.prompts));
  if (!spec.uniform_prompts) {
    double floor = 0.2 / static_cast<double>(spec.prompts);
    std::vector<double> w(spec.prompts);
    double wsum = 0.0;
    for (double& x : w) {
      x = rng.exponential();
      wsum += x;
    }
    for (std::size_t p = 0; p < spec.prompts; ++p) {
      m.prompt_probs[p] = floor + 0.8 * (w[p] / wsum);
    }
  }

  const std::size_t states = m.state_count();
  if (spec.prompt_independent) {
    std::vector<std::vector<double>> shared(states);
    for (std::size_t s = 0; s < states; ++s) {
      shared[s] = draw_distribution(m, rng, spec.sharpness);
    }
    m.cond.assign(spec.prompts, shared);
    m.empty_prompt_cond = shared;
  } else {
    m.cond.resize(spec.prompts);
    for (std::size_t p = 0; p < spec.prompts; ++p) {
      m.cond[p].resize(states);
      for (std::size_t s = 0; s < states; ++s) {
        m.cond[p][s] = draw_distribution(m, rng, spec.sharpness);
      }
    }
    m.empty_prompt_cond.resize(states);
    for (std::size_t s = 0; s < states; ++s) {
      m.empty_prompt_cond[s] = draw_distribution(m, rng, spec.sharpness);
    }
  }
  check_model(m);
  return m;
}

SyntheticModel perturb(const SyntheticModel& base, double epsilon,
                       std::uint64_t seed) {
  if (!(epsilon >= 0.0 && epsilon < 0.5)) {
    throw NumericError("perturbation epsilon must lie in [0, 0.5), got " +
                       std::to_string(epsilon));
  }
  SyntheticModel m = base;
  Rng rng(seed);
  auto nudge = [&](std::vector<double>& dist) {
    // Random feasible target, then move toward it by at most epsilon in
    // total variation. Both endpoints satisfy the floors, so the convex
    // combination does too.
    const std::size_t arity = dist.size();
    double floor_total = m.p_token_min * static_cast<double>(arity - 1) +
                         m.p_stop_min;
    std::vector<double> target(arity);
    double wsum = 0.0;
    std::vector<double> w(arity);
    for (std::size_t i = 0; i < arity; ++i) {
      w[i] = rng.exponential();
      wsum += w[i];
    }
    double tv = 0.0;
    for (std::size_t i = 0; i < arity; ++i) {
      double floor = (i + 1 == arity) ? m.p_stop_min : m.p_token_min;
      target[i] = floor + (1.0 - floor_total) * (w[i] / wsum);
      tv += std::abs(dist[i] - target[i]);
    }
    tv *= 0.5;
    double t = tv > 0.0 ? std::min(1.0, epsilon / tv) : 0.0;
    if (epsilon == 0.0) t = 0.0;
    for (std::size_t i = 0; i < arity; ++i) {
      dist[i] = (1.0 - t) * dist[i] + t * target[i];
    }
  };
  for (auto& prompt_table : m.cond) {
    for (auto& dist : prompt_table) nudge(dist);
  }
  for (auto& dist : m.empty_prompt_cond) nudge(dist);
  check_model(m);
  return m;
}

SyntheticModel mix(const SyntheticModel& a, const SyntheticModel& b,
                   double w) {
  require_shared_alphabets(a, b);
  if (!(w >= 0.0 && w <= 1.0)) {
    throw NumericError("mix weight must lie in [0, 1]");
  }
  if (a.state_count() != b.state_count()) {
    throw ValidationError("mix: history depths differ");
  }
  SyntheticModel m = a;
  auto blend = [&](std::vector<double>& dst, const std::vector<double>& src) {
    for (std::size_t i = 0; i < dst.size(); ++i) {
      dst[i] = (1.0 - w) * dst[i] + w * src[i];
    }
  };
  for (std::size_t p = 0; p < m.cond.size(); ++p) {
    for (std::size_t s = 0; s < m.cond[p].size(); ++s) {
      blend(m.cond[p][s], b.cond[p][s]);
    }
  }
  for (std::size_t s = 0; s < m.empty_prompt_cond.size(); ++s) {
    blend(m.empty_prompt_cond[s], b.empty_prompt_cond[s]);
  }
  check_model(m);
  return m;
}

std::string to_string(ScoreMode mode) {
  switch (mode) {
    case ScoreMode::conditional: return "conditional";
    case ScoreMode::marginal: return "marginal";
    case ScoreMode::empty_prompt: return "empty_prompt";
  }
  throw Error("unreachable ScoreMode");
}

double conditional_response_prob(const SyntheticModel& m,
                                 std::size_t prompt_index,
                                 const std::string& response) {
  if (prompt_index >= m.prompts.size()) {
    throw ValidationError("prompt index out of range");
  }
  if (response == std::string(1, m.overflow_marker)) {
    return overflow_mass(m, prompt_index);
  }
  return std::exp(walk_log_prob(m, m.cond[prompt_index], response));
}

double overflow_mass(const SyntheticModel& m, std::size_t prompt_index) {
  if (prompt_index >= m.prompts.size()) {
    throw ValidationError("prompt index out of range");
  }
  return table_overflow_mass(m, m.cond[prompt_index]);
}

double marginal_response_prob(const SyntheticModel& m,
                              const std::string& response) {
  double acc = 0.0;
  for (std::size_t p = 0; p < m.prompts.size(); ++p) {
    acc += m.prompt_probs[p] * conditional_response_prob(m, p, response);
  }
  return acc;
}

double marginal_overflow_mass(const SyntheticModel& m) {
  double acc = 0.0;
  for (std::size_t p = 0; p < m.prompts.size(); ++p) {
    acc += m.prompt_probs[p] * overflow_mass(m, p);
  }
  return acc;
}

ModelVector score_pairs(const SyntheticModel& m, const PairSet& pairs,
                        ScoreMode mode) {
  std::unordered_map<std::string, std::size_t> prompt_index;
  for (std::size_t p = 0; p < m.prompts.size(); ++p) {
    prompt_index.emplace(m.prompts[p], p);
  }
  // Overflow masses are response-independent; compute them once instead of
  // re-enumerating the horizon for every overflow pair.
  std::vector<double> prompt_overflow(m.prompts.size());
  for (std::size_t p = 0; p < m.prompts.size(); ++p) {
    prompt_overflow[p] = table_overflow_mass(m, m.cond[p]);
  }
  double marginal_overflow = 0.0;
  for (std::size_t p = 0; p < m.prompts.size(); ++p) {
    marginal_overflow += m.prompt_probs[p] * prompt_overflow[p];
  }
  const double empty_overflow =
      mode == ScoreMode::empty_prompt
          ? table_overflow_mass(m, m.empty_prompt_cond)
          : 0.0;
  const std::string overflow_text(1, m.overflow_marker);

  const std::size_t n = pairs.size();
  std::vector<double> values(n, 0.0);
  std::string first_error;
  const std::ptrdiff_t nn = static_cast<std::ptrdiff_t>(n);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t s = 0; s < nn; ++s) {
    try {
      const TextPair& pair = pairs[static_cast<std::size_t>(s)];
      const bool overflowed = pair.response == overflow_text;
      double v = 0.0;
      switch (mode) {
        case ScoreMode::conditional: {
          auto it = prompt_index.find(pair.prompt);
          if (it == prompt_index.end()) {
            throw ValidationError("pair '" + pair.id +
                                  "': prompt not in the oracle alphabet");
          }
          v = overflowed ? std::log(prompt_overflow[it->second])
                         : walk_log_prob(m, m.cond[it->second], pair.response);
          break;
        }
        case ScoreMode::marginal:
          if (overflowed) {
            v = std::log(marginal_overflow);
          } else {
            double acc = 0.0;
            for (std::size_t p = 0; p < m.prompts.size(); ++p) {
              acc += m.prompt_probs[p] *
                     std::exp(walk_log_prob(m, m.cond[p], pair.response));
            }
            v = std::log(acc);
          }
          break;
        case ScoreMode::empty_prompt:
          v = overflowed ? std::log(empty_overflow)
                         : walk_log_prob(m, m.empty_prompt_cond, pair.response);
          break;
      }
      values[static_cast<std::size_t>(s)] = v;
    } catch (const std::exception& e) {
#pragma omp critical(llmap_oracle_score_error)
      if (first_error.empty()) first_error = e.what();
    }
  }
  if (!first_error.empty()) throw ValidationError(first_error);
  return ModelVector{m.id, std::move(values), VectorKind::raw};
}

std::vector<std::string> enumerate_responses(const SyntheticModel& m) {
  const std::size_t a = m.tokens.size();
  std::vector<std::string> out;
  for (int len = 0; len <= m.max_len; ++len) {
    std::size_t count = 1;
    for (int i = 0; i < len; ++i) count *= a;
    for (std::size_t idx = 0; idx < count; ++idx) {
      std::string body(static_cast<std::size_t>(len), ' ');
      std::size_t rem = idx;
      for (int pos = len - 1; pos >= 0; --pos) {
        body[static_cast<std::size_t>(pos)] = m.tokens[rem % a];
        rem /= a;
      }
      out.push_back(body + std::string(1, m.stop));
    }
  }
  return out;
}

std::vector<double> outcome_table(const SyntheticModel& m) {
  std::vector<std::string> responses = enumerate_responses(m);
  const std::size_t o = responses.size();
  const std::size_t cols = o + 1;  // last column is the overflow mass
  std::vector<double> table(m.prompts.size() * cols, 0.0);
  const std::ptrdiff_t np = static_cast<std::ptrdiff_t>(m.prompts.size());
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t p = 0; p < np; ++p) {
    const std::size_t ip = static_cast<std::size_t>(p);
    for (std::size_t r = 0; r < o; ++r) {
      table[ip * cols + r] = conditional_response_prob(m, ip, responses[r]);
    }
    table[ip * cols + o] = overflow_mass(m, ip);
  }
  return table;
}

double enumerate_kl(const SyntheticModel& p_i, const SyntheticModel& p_j) {
  require_shared_alphabets(p_i, p_j);
  std::vector<double> ti = outcome_table(p_i);
  std::vector<double> tj = outcome_table(p_j);
  const std::size_t np = p_i.prompts.size();
  const std::size_t cols = ti.size() / np;
  std::vector<double> partial(np, 0.0);
  const std::ptrdiff_t nn = static_cast<std::ptrdiff_t>(np);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t p = 0; p < nn; ++p) {
    const std::size_t ip = static_cast<std::size_t>(p);
    double acc = 0.0;
    for (std::size_t o = 0; o < cols; ++o) {
      double a = ti[ip * cols + o];
      double b = tj[ip * cols + o];
      acc += a * std::log(a / b);
    }
    partial[ip] = p_i.prompt_probs[ip] * acc;
  }
  double kl = 0.0;
  for (double v : partial) kl += v;
  return kl;
}

double enumerate_mi(const SyntheticModel& m) {
  std::vector<double> t = outcome_table(m);
  const std::size_t np = m.prompts.size();
  const std::size_t cols = t.size() / np;
  std::vector<double> marginal(cols, 0.0);
  for (std::size_t p = 0; p < np; ++p) {
    for (std::size_t o = 0; o < cols; ++o) {
      marginal[o] += m.prompt_probs[p] * t[p * cols + o];
    }
  }
  double mi = 0.0;
  for (std::size_t p = 0; p < np; ++p) {
    double acc = 0.0;
    for (std::size_t o = 0; o < cols; ++o) {
      double v = t[p * cols + o];
      acc += v * std::log(v / marginal[o]);
    }
    mi += m.prompt_probs[p] * acc;
  }
  return mi;
}

double prompt_entropy(const SyntheticModel& m) {
  double h = 0.0;
  for (double p : m.prompt_probs) h -= p * std::log(p);
  return h;
}

double marginal_response_entropy(const SyntheticModel& m) {
  std::vector<double> t = outcome_table(m);
  const std::size_t np = m.prompts.size();
  const std::size_t cols = t.size() / np;
  double h = 0.0;
  for (std::size_t o = 0; o < cols; ++o) {
    double marg = 0.0;
    for (std::size_t p = 0; p < np; ++p) marg += m.prompt_probs[p] * t[p * cols + o];
    h -= marg * std::log(marg);
  }
  return h;
}

PairSet sample_pairs(const SyntheticModel& m, std::size_t n,
                     std::uint64_t seed) {
  if (n < 1) throw NumericError("sample_pairs needs N >= 1");
  Rng rng(seed);
  const std::size_t stop_idx = m.tokens.size();
  std::vector<TextPair> out;
  out.reserve(n);
  char idbuf[32];
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t p = draw_categorical(rng, m.prompt_probs);
    std::string body;
    std::vector<int> hist;
    std::string response;
    for (;;) {
      const std::vector<double>& dist = m.cond[p][state_index(m, hist)];
      std::size_t o = draw_categorical(rng, dist);
      if (o == stop_idx) {
        response = body + std::string(1, m.stop);
        break;
      }
      if (body.size() == static_cast<std::size_t>(m.max_len)) {
        response = std::string(1, m.overflow_marker);
        break;
      }
      body.push_back(m.tokens[o]);
      push_history(m, hist, static_cast<int>(o));
    }
    std::snprintf(idbuf, sizeof(idbuf), "s%06zu", i);
    out.push_back({idbuf, m.prompts[p], std::move(response)});
  }
  return PairSet(std::move(out));
}

nlohmann::json model_to_json(const SyntheticModel& m) {
  return nlohmann::json{
      {"type", "synthetic_model"},
      {"id", m.id},
      {"prompts", m.prompts},
      {"prompt_probs", m.prompt_probs},
      {"tokens", m.tokens},
      {"stop", std::string(1, m.stop)},
      {"overflow", std::string(1, m.overflow_marker)},
      {"history", m.history},
      {"max_len", m.max_len},
      {"p_stop_min", m.p_stop_min},
      {"p_token_min", m.p_token_min},
      {"cond", m.cond},
      {"empty_prompt_cond", m.empty_prompt_cond},
  };
}

SyntheticModel model_from_json(const nlohmann::json& j) {
  SyntheticModel m;
  try {
    m.id = j.at("id").get<std::string>();
    m.prompts = j.at("prompts").get<std::vector<std::string>>();
    m.prompt_probs = j.at("prompt_probs").get<std::vector<double>>();
    m.tokens = j.at("tokens").get<std::string>();
    m.stop = j.at("stop").get<std::string>().at(0);
    m.overflow_marker = j.at("overflow").get<std::string>().at(0);
    m.history = j.at("history").get<int>();
    m.max_len = j.at("max_len").get<int>();
    m.p_stop_min = j.at("p_stop_min").get<double>();
    m.p_token_min = j.at("p_token_min").get<double>();
    m.cond = j.at("cond").get<std::vector<std::vector<std::vector<double>>>>();
    m.empty_prompt_cond =
        j.at("empty_prompt_cond").get<std::vector<std::vector<double>>>();
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("malformed synthetic model record: ") +
                          e.what());
  }
  check_model(m);
  return m;
}

}  // namespace llmap::oracle
