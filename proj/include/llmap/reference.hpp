#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "llmap/divergence.hpp"
#include "llmap/types.hpp"

// Serial reference implementations of the data-parallel kernels. These stay
// deliberately simple (plain loops, no OpenMP) and are used by the tests to
// cross-check the parallel paths and by the benchmark to measure speedups.
namespace llmap::ref {

// K x K matrix of squared Euclidean distances between rows.
std::vector<double> pairwise_sq_dists(std::span<const double> matrix,
                                      std::size_t k, std::size_t n);

PairwiseDistanceMatrix pairwise_kl(const LogLikMatrix& m,
                                   KlSpace space = KlSpace::centered);

// Gram matrix X * X^T of the row-centered matrix, as used by PCA.
std::vector<double> centered_gram(std::span<const double> matrix,
                                  std::size_t k, std::size_t n);

LogLikMatrix pmi_matrix(const LogLikMatrix& cond, const LogLikMatrix& uncond);

}  // namespace llmap::ref
