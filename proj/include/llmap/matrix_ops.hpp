#pragma once

#include <span>
#include <vector>

#include "llmap/types.hpp"

namespace llmap {

// Nearest-rank lower quantile over a flat value set: sort ascending and take
// index floor(percentile * (M - 1)). Deterministic, interpolation-free.
double clip_threshold(std::span<const double> values, double percentile);

// Threshold over the union of several matrices' entries, for callers that
// want one shared threshold across settings.
double joint_clip_threshold(std::span<const LogLikMatrix* const> ms,
                            double percentile);

// Replace every entry below the matrix's own nearest-rank threshold and
// record the clip metadata. Conditional and unconditional matrices are
// clipped independently by construction: each call sees one matrix.
LogLikMatrix clip_matrix(const LogLikMatrix& m, double percentile = 0.02);

// Same, but with an externally computed threshold (shared-threshold mode).
LogLikMatrix clip_matrix_with_threshold(const LogLikMatrix& m,
                                        double percentile, double threshold);

// Subtract the vector's own mean. raw -> centered, pmi -> centered_pmi.
ModelVector center(const ModelVector& v);

// Mean log-likelihood of a raw vector (the map coloring statistic).
double mean_loglik(const ModelVector& v);

// Entrywise cond - uncond. Model and pair ids must match in identical order;
// mismatches are errors, never reordered.
LogLikMatrix pmi_matrix(const LogLikMatrix& cond, const LogLikMatrix& uncond);

// Center every row of a matrix (used by the `center` CLI command).
LogLikMatrix center_matrix(const LogLikMatrix& m);

}  // namespace llmap
