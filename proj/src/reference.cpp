#include "llmap/reference.hpp"

#include <numeric>

namespace llmap::ref {

std::vector<double> pairwise_sq_dists(std::span<const double> matrix,
                                      std::size_t k, std::size_t n) {
  std::vector<double> out(k * k, 0.0);
  for (std::size_t i = 0; i < k; ++i) {
    for (std::size_t j = i + 1; j < k; ++j) {
      double acc = 0.0;
      for (std::size_t t = 0; t < n; ++t) {
        double d = matrix[i * n + t] - matrix[j * n + t];
        acc += d * d;
      }
      out[i * k + j] = acc;
      out[j * k + i] = acc;
    }
  }
  return out;
}

PairwiseDistanceMatrix pairwise_kl(const LogLikMatrix& m, KlSpace space) {
  if (m.models() < 2) throw NumericError("pairwise_kl needs K >= 2 models");
  if (m.pairs() < 2) throw NumericError("pairwise_kl needs N >= 2 pairs");
  require_valid(m);
  const std::size_t k = m.models();
  const std::size_t n = m.pairs();
  std::vector<double> rows(m.values());
  if (space == KlSpace::centered && !m.centered()) {
    for (std::size_t i = 0; i < k; ++i) {
      double* row = rows.data() + i * n;
      double mean = std::accumulate(row, row + n, 0.0) / static_cast<double>(n);
      for (std::size_t s = 0; s < n; ++s) row[s] -= mean;
    }
  }
  PairwiseDistanceMatrix out;
  out.model_ids = m.model_ids();
  out.kind = DistanceKind::kl_vector;
  out.values.assign(k * k, 0.0);
  for (std::size_t i = 0; i < k; ++i) {
    for (std::size_t j = i + 1; j < k; ++j) {
      double acc = 0.0;
      for (std::size_t t = 0; t < n; ++t) {
        double d = rows[i * n + t] - rows[j * n + t];
        acc += d * d;
      }
      double v = acc / (2.0 * static_cast<double>(n));
      out.values[i * k + j] = v;
      out.values[j * k + i] = v;
    }
  }
  return out;
}

std::vector<double> centered_gram(std::span<const double> matrix,
                                  std::size_t k, std::size_t n) {
  std::vector<double> xc(matrix.begin(), matrix.end());
  std::vector<double> mean(n, 0.0);
  for (std::size_t i = 0; i < k; ++i) {
    for (std::size_t t = 0; t < n; ++t) mean[t] += xc[i * n + t];
  }
  for (double& m : mean) m /= static_cast<double>(k);
  for (std::size_t i = 0; i < k; ++i) {
    for (std::size_t t = 0; t < n; ++t) xc[i * n + t] -= mean[t];
  }
  std::vector<double> gram(k * k, 0.0);
  for (std::size_t i = 0; i < k; ++i) {
    for (std::size_t j = i; j < k; ++j) {
      double acc = 0.0;
      for (std::size_t t = 0; t < n; ++t) acc += xc[i * n + t] * xc[j * n + t];
      gram[i * k + j] = acc;
      gram[j * k + i] = acc;
    }
  }
  return gram;
}

LogLikMatrix pmi_matrix(const LogLikMatrix& cond, const LogLikMatrix& uncond) {
  if (cond.model_ids() != uncond.model_ids() ||
      cond.pair_ids() != uncond.pair_ids()) {
    throw ValidationError("pmi_matrix: matrices are not aligned");
  }
  std::vector<double> values(cond.values().size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    values[i] = cond.values()[i] - uncond.values()[i];
  }
  return LogLikMatrix(cond.model_ids(), cond.pair_ids(), std::move(values),
                      LikMode::pmi);
}

}  // namespace llmap::ref
