#include "llmap/scorer_client.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <mutex>
#include <thread>
#include <unordered_map>
#include <vector>

#include <httplib.h>
#include <json.hpp>

namespace llmap {

namespace {

using nlohmann::json;

std::string build_request_body(const std::string& model_id, LikMode mode,
                               const PairSet& pairs, std::size_t lo,
                               std::size_t hi) {
  json body;
  body["model_id"] = model_id;
  body["mode"] = to_string(mode);
  json arr = json::array();
  for (std::size_t s = lo; s < hi; ++s) {
    const TextPair& p = pairs[s];
    arr.push_back({{"id", p.id}, {"prompt", p.prompt}, {"response", p.response}});
  }
  body["pairs"] = std::move(arr);
  return body.dump();
}

// Fill result slots [lo, hi) from a scorer response; throws ScorerError on
// any contract violation.
void apply_response(const std::string& body, const PairSet& pairs,
                    std::size_t lo, std::size_t hi,
                    std::vector<double>& results) {
  json j;
  try {
    j = json::parse(body);
  } catch (const json::exception& e) {
    throw ScorerError(std::string("scorer returned malformed JSON: ") +
                      e.what());
  }
  std::unordered_map<std::string, double> by_id;
  try {
    for (const json& rec : j.at("logliks")) {
      std::string id = rec.at("id").get<std::string>();
      const json& value = rec.at("value");
      // Strict JSON cannot carry NaN/inf as numbers; scorers signal them as
      // null (or strings), which counts as a non-finite score here.
      if (!value.is_number()) {
        throw ScorerError("scorer returned a non-finite score for pair '" +
                          id + "'");
      }
      by_id[id] = value.get<double>();
    }
  } catch (const json::exception& e) {
    throw ScorerError(std::string("scorer response missing fields: ") +
                      e.what());
  }
  for (std::size_t s = lo; s < hi; ++s) {
    auto it = by_id.find(pairs[s].id);
    if (it == by_id.end()) {
      throw ScorerError("scorer response missing pair '" + pairs[s].id + "'");
    }
    if (!std::isfinite(it->second)) {
      throw ScorerError("scorer returned a non-finite score for pair '" +
                        pairs[s].id + "'");
    }
    results[s] = it->second;
  }
}

}  // namespace

ModelVector fetch_scores(const std::string& endpoint,
                         const std::string& model_id, const PairSet& pairs,
                         LikMode mode, const ScorerOptions& options) {
  if (mode == LikMode::pmi) {
    throw ValidationError("fetch_scores mode must be conditional or "
                          "unconditional");
  }
  if (options.batch_size < 1) throw ValidationError("batch_size must be >= 1");
  if (options.retries < 0) throw ValidationError("retries must be >= 0");
  if (pairs.size() == 0) throw ValidationError("fetch_scores with no pairs");

  const std::size_t n = pairs.size();
  const std::size_t batches = (n + options.batch_size - 1) / options.batch_size;
  std::vector<double> results(n, 0.0);

  std::atomic<std::size_t> next_batch{0};
  std::mutex error_mutex;
  std::string first_error;
  auto record_error = [&](const std::string& message) {
    std::lock_guard<std::mutex> lock(error_mutex);
    if (first_error.empty()) first_error = message;
  };
  auto has_error = [&]() {
    std::lock_guard<std::mutex> lock(error_mutex);
    return !first_error.empty();
  };

  auto worker = [&]() {
    httplib::Client client(endpoint);
    client.set_connection_timeout(std::chrono::duration<double>(options.timeout_s));
    client.set_read_timeout(std::chrono::duration<double>(options.timeout_s));
    for (;;) {
      std::size_t b = next_batch.fetch_add(1);
      if (b >= batches || has_error()) return;
      const std::size_t lo = b * options.batch_size;
      const std::size_t hi = std::min(n, lo + options.batch_size);
      const std::string body = build_request_body(model_id, mode, pairs, lo, hi);

      for (int attempt = 0;; ++attempt) {
        httplib::Result res =
            client.Post("/score", body, "application/json");
        if (res && res->status == 200) {
          try {
            apply_response(res->body, pairs, lo, hi, results);
          } catch (const std::exception& e) {
            record_error(e.what());
          }
          break;
        }
        bool transient = !res || res->status >= 500;
        if (!transient) {
          record_error("scorer rejected batch " + std::to_string(b) +
                       " with status " + std::to_string(res->status));
          break;
        }
        if (attempt >= options.retries) {
          record_error("scorer batch " + std::to_string(b) +
                       " failed after " + std::to_string(attempt + 1) +
                       " attempts (" +
                       (res ? "status " + std::to_string(res->status)
                            : "connection error") +
                       ")");
          break;
        }
        double delay = options.backoff_base_s *
                       std::pow(options.backoff_factor, attempt);
        std::this_thread::sleep_for(std::chrono::duration<double>(delay));
      }
    }
  };

  const std::size_t workers =
      std::min<std::size_t>(std::max(1, options.concurrency), batches);
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(worker);
  for (std::thread& t : pool) t.join();

  if (!first_error.empty()) throw ScorerError(first_error);
  return ModelVector{model_id, std::move(results), VectorKind::raw};
}

}  // namespace llmap
