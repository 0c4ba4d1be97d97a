#include "llmap/divergence.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "llmap/rng.hpp"

namespace llmap {

std::string to_string(DistanceKind kind) {
  switch (kind) {
    case DistanceKind::kl_vector: return "kl_vector";
    case DistanceKind::kl_mc: return "kl_mc";
    case DistanceKind::kl_mc_symmetric: return "kl_mc_symmetric";
    case DistanceKind::semdist: return "semdist";
  }
  throw Error("unreachable DistanceKind");
}

DistanceKind distance_kind_from_string(const std::string& s) {
  if (s == "kl_vector") return DistanceKind::kl_vector;
  if (s == "kl_mc") return DistanceKind::kl_mc;
  if (s == "kl_mc_symmetric") return DistanceKind::kl_mc_symmetric;
  if (s == "semdist") return DistanceKind::semdist;
  throw ValidationError("unknown distance kind '" + s + "'");
}

EmbeddingSet::EmbeddingSet(std::string model_id,
                           std::vector<std::string> pair_ids,
                           std::size_t per_prompt, std::size_t dim,
                           std::vector<double> data)
    : model_id_(std::move(model_id)),
      pair_ids_(std::move(pair_ids)),
      per_prompt_(per_prompt),
      dim_(dim),
      data_(std::move(data)) {
  if (per_prompt_ == 0 || dim_ == 0) {
    throw ValidationError("embedding set needs per_prompt >= 1 and dim >= 1");
  }
  if (data_.size() != pair_ids_.size() * per_prompt_ * dim_) {
    throw ValidationError("embedding set shape mismatch for model '" +
                          model_id_ + "'");
  }
  for (std::size_t s = 0; s < pair_ids_.size(); ++s) {
    for (std::size_t a = 0; a < per_prompt_; ++a) {
      auto v = vec(s, a);
      double norm = std::sqrt(
          std::inner_product(v.begin(), v.end(), v.begin(), 0.0));
      if (std::abs(norm - 1.0) > 1e-6) {
        throw ValidationError("embedding " + std::to_string(a) +
                              " of prompt '" + pair_ids_[s] + "' in model '" +
                              model_id_ + "' is not unit-norm (|v| = " +
                              std::to_string(norm) + ")");
      }
    }
  }
}

std::span<const double> SampledLogLiks::scores(
    const std::string& scorer_id) const {
  for (std::size_t i = 0; i < scorer_ids.size(); ++i) {
    if (scorer_ids[i] == scorer_id) {
      return {values.data() + i * pair_ids.size(), pair_ids.size()};
    }
  }
  throw ValidationError("generator '" + generator_id +
                        "' has no scores by model '" + scorer_id + "'");
}

namespace {

bool is_centered_kind(VectorKind k) {
  return k == VectorKind::centered || k == VectorKind::centered_pmi;
}

double sq_dist(std::span<const double> a, std::span<const double> b) {
  double acc = 0.0;
  for (std::size_t s = 0; s < a.size(); ++s) {
    double d = a[s] - b[s];
    acc += d * d;
  }
  return acc;
}

}  // namespace

double kl_from_vectors(const ModelVector& a, const ModelVector& b) {
  if (!is_centered_kind(a.kind) || !is_centered_kind(b.kind)) {
    throw ValidationError("kl_from_vectors expects centered vectors, got " +
                          to_string(a.kind) + " and " + to_string(b.kind));
  }
  if (a.values.size() != b.values.size()) {
    throw ValidationError("kl_from_vectors length mismatch: " +
                          std::to_string(a.values.size()) + " vs " +
                          std::to_string(b.values.size()));
  }
  if (a.values.size() < 2) throw NumericError("kl_from_vectors needs N >= 2");
  return sq_dist(a.values, b.values) /
         (2.0 * static_cast<double>(a.values.size()));
}

PairwiseDistanceMatrix pairwise_kl(const LogLikMatrix& m, KlSpace space) {
  if (m.models() < 2) throw NumericError("pairwise_kl needs K >= 2 models");
  if (m.pairs() < 2) throw NumericError("pairwise_kl needs N >= 2 pairs");
  require_valid(m);

  const std::size_t k = m.models();
  const std::size_t n = m.pairs();
  std::vector<double> rows(m.values());
  if (space == KlSpace::centered && !m.centered()) {
    const std::ptrdiff_t kk = static_cast<std::ptrdiff_t>(k);
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t i = 0; i < kk; ++i) {
      double* row = rows.data() + static_cast<std::size_t>(i) * n;
      double mean =
          std::accumulate(row, row + n, 0.0) / static_cast<double>(n);
      for (std::size_t s = 0; s < n; ++s) row[s] -= mean;
    }
  }

  PairwiseDistanceMatrix out;
  out.model_ids = m.model_ids();
  out.kind = DistanceKind::kl_vector;
  out.values.assign(k * k, 0.0);

  // Upper triangle, mirrored; entries are independent.
  const std::ptrdiff_t kk = static_cast<std::ptrdiff_t>(k);
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t i = 0; i < kk; ++i) {
    std::span<const double> ri{rows.data() + static_cast<std::size_t>(i) * n, n};
    for (std::size_t j = static_cast<std::size_t>(i) + 1; j < k; ++j) {
      std::span<const double> rj{rows.data() + j * n, n};
      double v = sq_dist(ri, rj) / (2.0 * static_cast<double>(n));
      out.values[static_cast<std::size_t>(i) * k + j] = v;
      out.values[j * k + static_cast<std::size_t>(i)] = v;
    }
  }
  return out;
}

double mc_kl(std::span<const double> gen_scored_by_i,
             std::span<const double> gen_scored_by_j) {
  if (gen_scored_by_i.size() != gen_scored_by_j.size()) {
    throw ValidationError("mc_kl score length mismatch");
  }
  if (gen_scored_by_i.empty()) throw NumericError("mc_kl needs N >= 1");
  double acc = 0.0;
  for (std::size_t s = 0; s < gen_scored_by_i.size(); ++s) {
    acc += gen_scored_by_i[s] - gen_scored_by_j[s];
  }
  return acc / static_cast<double>(gen_scored_by_i.size());
}

double mc_kl(const SampledLogLiks& s, const std::string& scorer_i,
             const std::string& scorer_j) {
  return mc_kl(s.scores(scorer_i), s.scores(scorer_j));
}

PairwiseDistanceMatrix pairwise_mc_kl(
    std::span<const SampledLogLiks> samples) {
  if (samples.size() < 2) throw NumericError("pairwise_mc_kl needs >= 2 generators");
  PairwiseDistanceMatrix out;
  out.kind = DistanceKind::kl_mc;
  out.sampled_inputs = true;
  for (const SampledLogLiks& s : samples) out.model_ids.push_back(s.generator_id);
  const std::size_t k = out.model_ids.size();
  out.values.assign(k * k, 0.0);
  for (std::size_t i = 0; i < k; ++i) {
    for (std::size_t j = 0; j < k; ++j) {
      out.values[i * k + j] =
          mc_kl(samples[i], out.model_ids[i], out.model_ids[j]);
    }
  }
  return out;
}

PairwiseDistanceMatrix symmetrize(const PairwiseDistanceMatrix& directed) {
  PairwiseDistanceMatrix out;
  out.model_ids = directed.model_ids;
  out.kind = directed.kind == DistanceKind::kl_mc
                 ? DistanceKind::kl_mc_symmetric
                 : directed.kind;
  out.sampled_inputs = directed.sampled_inputs;
  const std::size_t k = directed.models();
  out.values.assign(k * k, 0.0);
  for (std::size_t i = 0; i < k; ++i) {
    for (std::size_t j = i + 1; j < k; ++j) {
      double v = symmetrize_kl(directed.at(i, j), directed.at(j, i));
      out.values[i * k + j] = v;
      out.values[j * k + i] = v;
    }
  }
  return out;
}

double symmetrize_kl(double kl_ij, double kl_ji) {
  return 0.5 * (kl_ij + kl_ji);
}

double mi_mean_pmi(const ModelVector& pmi) {
  if (pmi.kind != VectorKind::pmi) {
    throw ValidationError("mi_mean_pmi expects a pmi vector, got " +
                          to_string(pmi.kind));
  }
  if (pmi.values.empty()) throw NumericError("mi_mean_pmi of empty vector");
  return std::accumulate(pmi.values.begin(), pmi.values.end(), 0.0) /
         static_cast<double>(pmi.values.size());
}

double mi_norm(const ModelVector& eta) {
  if (eta.kind != VectorKind::centered_pmi) {
    throw ValidationError("mi_norm expects a centered_pmi vector, got " +
                          to_string(eta.kind));
  }
  if (eta.values.size() < 2) throw NumericError("mi_norm needs N >= 2");
  double acc = std::inner_product(eta.values.begin(), eta.values.end(),
                                  eta.values.begin(), 0.0);
  return acc / (2.0 * static_cast<double>(eta.values.size()));
}

double semdist(const EmbeddingSet& a, const EmbeddingSet& b) {
  if (a.prompts() != b.prompts() || a.per_prompt() != b.per_prompt() ||
      a.dim() != b.dim()) {
    throw ValidationError(
        "semdist shape mismatch between '" + a.model_id() + "' and '" +
        b.model_id() + "'");
  }
  if (a.pair_ids() != b.pair_ids()) {
    throw ValidationError("semdist: prompt ids differ or are ordered "
                          "differently between '" + a.model_id() + "' and '" +
                          b.model_id() + "'");
  }
  if (a.prompts() == 0) throw NumericError("semdist needs N >= 1 prompts");
  const std::size_t d = a.dim();
  const double inv_np = 1.0 / static_cast<double>(a.per_prompt());
  double acc = 0.0;
  std::vector<double> va(d), vb(d);
  for (std::size_t s = 0; s < a.prompts(); ++s) {
    std::fill(va.begin(), va.end(), 0.0);
    std::fill(vb.begin(), vb.end(), 0.0);
    for (std::size_t m = 0; m < a.per_prompt(); ++m) {
      auto ea = a.vec(s, m);
      auto eb = b.vec(s, m);
      for (std::size_t t = 0; t < d; ++t) {
        va[t] += ea[t];
        vb[t] += eb[t];
      }
    }
    double dot = 0.0;
    for (std::size_t t = 0; t < d; ++t) dot += va[t] * inv_np * vb[t] * inv_np;
    acc += 1.0 - dot;
  }
  return acc / static_cast<double>(a.prompts());
}

double pearson(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw ValidationError("pearson length mismatch");
  if (x.size() < 2) throw NumericError("pearson needs length >= 2");
  const double n = static_cast<double>(x.size());
  double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t s = 0; s < x.size(); ++s) {
    double dx = x[s] - mx;
    double dy = y[s] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx == 0.0 || syy == 0.0) {
    throw NumericError("pearson undefined: zero variance input");
  }
  return sxy / std::sqrt(sxx * syy);
}

std::vector<double> average_ranks(std::span<const double> x) {
  const std::size_t n = x.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
  std::vector<double> ranks(n, 0.0);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && x[order[j + 1]] == x[order[i]]) ++j;
    // 1-based positions i+1 .. j+1 share the average rank.
    double avg = static_cast<double>(i + j + 2) / 2.0;
    for (std::size_t t = i; t <= j; ++t) ranks[order[t]] = avg;
    i = j + 1;
  }
  return ranks;
}

double spearman(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw ValidationError("spearman length mismatch");
  std::vector<double> rx = average_ranks(x);
  std::vector<double> ry = average_ranks(y);
  return pearson(rx, ry);
}

namespace {

// Linear-interpolation empirical quantile on a sorted sample.
double sorted_quantile(const std::vector<double>& sorted, double q) {
  if (sorted.size() == 1) return sorted[0];
  double h = q * static_cast<double>(sorted.size() - 1);
  std::size_t lo = static_cast<std::size_t>(std::floor(h));
  if (lo + 1 >= sorted.size()) return sorted.back();
  double frac = h - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[lo + 1] - sorted[lo]);
}

}  // namespace

BootstrapResult bootstrap_ci(
    const std::function<double(std::span<const std::size_t>)>& statistic,
    std::size_t n, std::size_t resamples, std::uint64_t seed, double level) {
  if (resamples < 100) {
    throw NumericError("bootstrap needs at least 100 resamples, got " +
                       std::to_string(resamples));
  }
  if (!(level > 0.0 && level < 1.0)) {
    throw NumericError("bootstrap level must lie in (0, 1)");
  }
  if (n == 0) throw NumericError("bootstrap over an empty index set");

  std::vector<std::size_t> identity(n);
  std::iota(identity.begin(), identity.end(), 0);
  BootstrapResult result;
  result.point = statistic(identity);

  std::vector<double> stats(resamples, 0.0);
  std::string first_error;
  const std::ptrdiff_t b = static_cast<std::ptrdiff_t>(resamples);
#pragma omp parallel
  {
    std::vector<std::size_t> indices(n);
#pragma omp for schedule(static)
    for (std::ptrdiff_t r = 0; r < b; ++r) {
      Rng rng(derive_seed(seed, static_cast<std::uint64_t>(r)));
      for (std::size_t s = 0; s < n; ++s) indices[s] = rng.uniform_index(n);
      try {
        stats[static_cast<std::size_t>(r)] = statistic(indices);
      } catch (const std::exception& e) {
#pragma omp critical(llmap_bootstrap_error)
        if (first_error.empty()) {
          first_error = "bootstrap resample " + std::to_string(r) +
                        " failed: " + e.what();
        }
      }
    }
  }
  if (!first_error.empty()) throw Error(first_error);

  std::sort(stats.begin(), stats.end());
  double alpha = (1.0 - level) / 2.0;
  result.lower = sorted_quantile(stats, alpha);
  result.upper = sorted_quantile(stats, 1.0 - alpha);
  return result;
}

}  // namespace llmap
