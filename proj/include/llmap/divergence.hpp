#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "llmap/types.hpp"

namespace llmap {

enum class DistanceKind { kl_vector, kl_mc, kl_mc_symmetric, semdist };

std::string to_string(DistanceKind kind);
DistanceKind distance_kind_from_string(const std::string& s);

// K x K model distance matrix. Symmetric with zero diagonal for every kind
// except kl_mc, which is directed and may carry sampling noise on the
// diagonal when its inputs are sampled.
struct PairwiseDistanceMatrix {
  std::vector<std::string> model_ids;
  std::vector<double> values;  // K*K row-major
  DistanceKind kind = DistanceKind::kl_vector;
  bool sampled_inputs = false;

  std::size_t models() const { return model_ids.size(); }
  double at(std::size_t i, std::size_t j) const {
    return values[i * model_ids.size() + j];
  }
};

// Per-prompt response embeddings for one model: n_prompts blocks of
// per_prompt unit-norm vectors of dimension dim. Unit norms are checked on
// construction (within 1e-6).
class EmbeddingSet {
 public:
  EmbeddingSet(std::string model_id, std::vector<std::string> pair_ids,
               std::size_t per_prompt, std::size_t dim,
               std::vector<double> data);

  const std::string& model_id() const { return model_id_; }
  const std::vector<std::string>& pair_ids() const { return pair_ids_; }
  std::size_t prompts() const { return pair_ids_.size(); }
  std::size_t per_prompt() const { return per_prompt_; }
  std::size_t dim() const { return dim_; }
  const std::vector<double>& data() const { return data_; }

  std::span<const double> vec(std::size_t s, std::size_t a) const {
    return {data_.data() + (s * per_prompt_ + a) * dim_, dim_};
  }

 private:
  std::string model_id_;
  std::vector<std::string> pair_ids_;
  std::size_t per_prompt_;
  std::size_t dim_;
  std::vector<double> data_;
};

// log p_j(y_s^i | x_s) for responses y_s^i sampled from one generator model,
// scored by several models (scorer-major K x N block).
struct SampledLogLiks {
  std::string generator_id;
  std::vector<std::string> pair_ids;
  std::vector<std::string> scorer_ids;
  std::vector<double> values;

  std::span<const double> scores(const std::string& scorer_id) const;
};

// Eq-7-style estimate: ||xi_i - xi_j||^2 / (2N). Arguments must be centered
// (kind centered or centered_pmi) and of equal length.
double kl_from_vectors(const ModelVector& a, const ModelVector& b);

enum class KlSpace { centered, raw };

// All-pairs vector KL. Rows are centered internally for KlSpace::centered;
// KlSpace::raw reports the uncentered squared distance / 2N for parity with
// the maps, which visualize uncentered vectors.
PairwiseDistanceMatrix pairwise_kl(const LogLikMatrix& m,
                                   KlSpace space = KlSpace::centered);

// Monte Carlo KL from per-prompt log-likelihood pairs of generator-i
// responses: mean of log p_i - log p_j. May be negative at finite N;
// unbiasedness, not positivity, is the contract.
double mc_kl(std::span<const double> gen_scored_by_i,
             std::span<const double> gen_scored_by_j);
double mc_kl(const SampledLogLiks& s, const std::string& scorer_i,
             const std::string& scorer_j);

// Directed MC-KL between every ordered pair of generators. samples[i] must
// carry scores by every generator's model id.
PairwiseDistanceMatrix pairwise_mc_kl(std::span<const SampledLogLiks> samples);
PairwiseDistanceMatrix symmetrize(const PairwiseDistanceMatrix& directed);

double symmetrize_kl(double kl_ij, double kl_ji);

// Eq. 10: MI(p_i) ~ mean of the PMI vector.
double mi_mean_pmi(const ModelVector& pmi);

// Eq. 11 heuristic: MI(p_i) ~ ||eta_i||^2 / (2N) on the centered PMI vector.
double mi_norm(const ModelVector& centered_pmi);

// Mean over prompts of 1 - <v_bar_s^a, v_bar_s^b> on per-prompt mean
// embeddings. Mean vectors are not re-normalized.
double semdist(const EmbeddingSet& a, const EmbeddingSet& b);

double pearson(std::span<const double> x, std::span<const double> y);
// Pearson correlation of ranks; ties get average ranks.
double spearman(std::span<const double> x, std::span<const double> y);
// Average ranks (1-based) with ties averaged; exposed for tests.
std::vector<double> average_ranks(std::span<const double> x);

struct BootstrapResult {
  double lower = 0.0;
  double upper = 0.0;
  double point = 0.0;
};

// Percentile bootstrap over prompt indices. The statistic receives a
// multiset of indices in [0, n). Resamples use seeds derived from the master
// seed, so results are deterministic and resamples are independent.
BootstrapResult bootstrap_ci(
    const std::function<double(std::span<const std::size_t>)>& statistic,
    std::size_t n, std::size_t resamples, std::uint64_t seed,
    double level = 0.95);

}  // namespace llmap
