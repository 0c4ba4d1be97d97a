#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "llmap/types.hpp"

namespace llmap {

struct PcaResult {
  std::size_t points = 0;  // K
  std::size_t input_dim = 0;  // N
  std::size_t dims = 0;
  std::vector<double> coords;     // K x dims
  std::vector<double> variances;  // sample-covariance eigenvalues, length dims
  std::vector<double> explained;  // fractions of total variance, length dims
  std::vector<double> loadings;   // dims x N, orthonormal rows
};

// PCA of K row-points in R^N. Rows are mean-centered internally; the
// eigendecomposition runs on the K x K Gram matrix or the N x N covariance,
// whichever is smaller. Components are ordered by decreasing variance and
// sign-fixed so each component's largest-magnitude loading is positive.
// Requesting more dims than the effective rank is an error naming the rank.
PcaResult pca(std::span<const double> matrix, std::size_t k, std::size_t n,
              std::size_t dims);

struct TsneParams {
  // 0 means auto: min(30, (K-1)/3). Explicit values above (K-1)/3 are
  // infeasible and rejected.
  double perplexity = 0.0;
  std::size_t iterations = 1000;
  double learning_rate = 200.0;
  double early_exaggeration = 12.0;
  std::size_t exaggeration_iters = 250;
  std::uint64_t seed = 0;
};

struct TsneResult {
  std::vector<double> coords;  // K x 2
  // (iteration, KL objective) sampled every 50 iterations plus the last.
  std::vector<std::pair<std::size_t, double>> objective;
  double perplexity_used = 0.0;
};

// Exact O(K^2) t-SNE to 2-D. Deterministic given the seed: initial
// coordinates come from per-model-id derived seeds and every reduction runs
// in model-id order, so permuting input rows permutes the output rows
// bit-identically and the result does not depend on thread count.
TsneResult tsne(std::span<const double> matrix, std::size_t k, std::size_t n,
                std::span<const std::string> model_ids,
                const TsneParams& params = {});

// Row-normalized conditional similarities with binary-searched per-point
// bandwidths (the high-dimensional side of t-SNE), returned in input row
// order with the bandwidths in *betas when given. Exposed for diagnostics.
std::vector<double> tsne_conditionals(std::span<const double> matrix,
                                      std::size_t k, std::size_t n,
                                      double perplexity,
                                      std::vector<double>* betas = nullptr);

enum class MapMethod { pca, tsne };

std::string to_string(MapMethod m);
MapMethod map_method_from_string(const std::string& s);

struct MapEmbedding {
  std::vector<std::string> model_ids;
  std::vector<double> coords;  // K x 2
  MapMethod method = MapMethod::pca;
  nlohmann::json params;  // method parameter record
  // Per-model metadata joined for coloring; missing models stay absent and
  // export as null.
  std::map<std::string, nlohmann::json> metadata;
};

MapEmbedding build_map(const LogLikMatrix& m, MapMethod method,
                       const TsneParams& tsne_params = {});

}  // namespace llmap
