#include "llmap/matrix_ops.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace llmap {

namespace {

double mean_of(std::span<const double> v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

}  // namespace

double clip_threshold(std::span<const double> values, double percentile) {
  if (!(percentile > 0.0 && percentile < 1.0)) {
    throw NumericError("clip percentile must lie in (0, 1), got " +
                       std::to_string(percentile));
  }
  if (values.empty()) throw NumericError("clip threshold of empty value set");
  std::vector<double> sorted(values.begin(), values.end());
  std::size_t index = static_cast<std::size_t>(
      std::floor(percentile * static_cast<double>(sorted.size() - 1)));
  std::nth_element(sorted.begin(), sorted.begin() + index, sorted.end());
  return sorted[index];
}

double joint_clip_threshold(std::span<const LogLikMatrix* const> ms,
                            double percentile) {
  std::vector<double> all;
  std::size_t total = 0;
  for (const LogLikMatrix* m : ms) total += m->values().size();
  all.reserve(total);
  for (const LogLikMatrix* m : ms) {
    all.insert(all.end(), m->values().begin(), m->values().end());
  }
  return clip_threshold(all, percentile);
}

LogLikMatrix clip_matrix_with_threshold(const LogLikMatrix& m,
                                        double percentile, double threshold) {
  std::vector<double> values = m.values();
  const std::ptrdiff_t total = static_cast<std::ptrdiff_t>(values.size());
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < total; ++i) {
    if (values[i] < threshold) values[i] = threshold;
  }
  return LogLikMatrix(m.model_ids(), m.pair_ids(), std::move(values), m.mode(),
                      ClipInfo{percentile, threshold}, m.centered());
}

LogLikMatrix clip_matrix(const LogLikMatrix& m, double percentile) {
  require_valid(m);
  double t = clip_threshold(m.values(), percentile);
  return clip_matrix_with_threshold(m, percentile, t);
}

ModelVector center(const ModelVector& v) {
  if (v.values.size() < 2) {
    throw NumericError("centering needs at least 2 entries, got " +
                       std::to_string(v.values.size()));
  }
  VectorKind out_kind;
  switch (v.kind) {
    case VectorKind::raw: out_kind = VectorKind::centered; break;
    case VectorKind::pmi: out_kind = VectorKind::centered_pmi; break;
    default:
      throw ValidationError("center() expects a raw or pmi vector, got " +
                            to_string(v.kind));
  }
  double mean = mean_of(v.values);
  ModelVector out{v.model_id, v.values, out_kind};
  for (double& x : out.values) x -= mean;
  return out;
}

double mean_loglik(const ModelVector& v) {
  if (v.values.empty()) throw NumericError("mean of empty vector");
  if (v.kind != VectorKind::raw) {
    throw ValidationError("mean_loglik expects a raw vector, got " +
                          to_string(v.kind));
  }
  return mean_of(v.values);
}

LogLikMatrix pmi_matrix(const LogLikMatrix& cond, const LogLikMatrix& uncond) {
  if (cond.mode() != LikMode::conditional ||
      uncond.mode() != LikMode::unconditional) {
    throw ValidationError("pmi_matrix expects a conditional and an "
                          "unconditional matrix, got " +
                          to_string(cond.mode()) + " and " +
                          to_string(uncond.mode()));
  }
  if (cond.model_ids() != uncond.model_ids()) {
    throw ValidationError(
        "pmi_matrix: model ids differ or are ordered differently; align "
        "matrices explicitly before subtracting");
  }
  if (cond.pair_ids() != uncond.pair_ids()) {
    throw ValidationError(
        "pmi_matrix: pair ids differ or are ordered differently; align "
        "matrices explicitly before subtracting");
  }
  std::vector<double> values(cond.values().size());
  const std::ptrdiff_t total = static_cast<std::ptrdiff_t>(values.size());
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < total; ++i) {
    values[i] = cond.values()[i] - uncond.values()[i];
  }
  return LogLikMatrix(cond.model_ids(), cond.pair_ids(), std::move(values),
                      LikMode::pmi);
}

LogLikMatrix center_matrix(const LogLikMatrix& m) {
  if (m.pairs() < 2) throw NumericError("centering needs at least 2 columns");
  std::vector<double> values = m.values();
  const std::ptrdiff_t k = static_cast<std::ptrdiff_t>(m.models());
  const std::size_t n = m.pairs();
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < k; ++i) {
    double* row = values.data() + static_cast<std::size_t>(i) * n;
    double mean = std::accumulate(row, row + n, 0.0) / static_cast<double>(n);
    for (std::size_t s = 0; s < n; ++s) row[s] -= mean;
  }
  return LogLikMatrix(m.model_ids(), m.pair_ids(), std::move(values), m.mode(),
                      std::nullopt, /*centered=*/true);
}

}  // namespace llmap
