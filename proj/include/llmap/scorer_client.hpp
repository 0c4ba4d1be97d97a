#pragma once

#include <cstddef>
#include <string>

#include "llmap/types.hpp"

namespace llmap {

// Remote scorer wire contract: POST <endpoint>/score with
//   {"model_id": ..., "mode": "conditional"|"unconditional",
//    "pairs": [{"id","prompt","response"}, ...]}
// and a response
//   {"model_id": ..., "logliks": [{"id", "value"}, ...]}
// carrying exactly one finite value per requested id. Unconditional requests
// keep the prompt field but the scorer is instructed to ignore it.
struct ScorerOptions {
  std::size_t batch_size = 64;
  int retries = 3;             // retry budget per batch beyond the first try
  double backoff_base_s = 1.0; // delay before retry k is base * factor^(k-1)
  double backoff_factor = 2.0;
  int concurrency = 4;         // concurrent in-flight batches
  double timeout_s = 60.0;
};

// Scores all pairs in order, batching requests. Results are reassembled in
// pair order regardless of batching or retry interleaving; partial results
// are never returned. Transient failures (connect errors, 5xx) are retried
// with exponential backoff; non-finite or missing scores raise ScorerError
// naming the pair id.
ModelVector fetch_scores(const std::string& endpoint,
                         const std::string& model_id, const PairSet& pairs,
                         LikMode mode, const ScorerOptions& options = {});

}  // namespace llmap
