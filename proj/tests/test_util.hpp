#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "llmap/rng.hpp"
#include "llmap/types.hpp"

namespace llmap::test {

inline std::vector<std::string> id_seq(const char* prefix, std::size_t n) {
  std::vector<std::string> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.push_back(prefix + std::to_string(i));
  return out;
}

inline LogLikMatrix random_matrix(std::size_t k, std::size_t n,
                                  std::uint64_t seed,
                                  LikMode mode = LikMode::conditional,
                                  double offset = -5.0) {
  Rng rng(seed);
  std::vector<double> values(k * n);
  for (double& v : values) v = offset + rng.normal();
  return LogLikMatrix(id_seq("m", k), id_seq("p", n), std::move(values), mode);
}

inline double rel_diff(double a, double b) {
  double denom = std::max(std::abs(a), std::abs(b));
  return denom == 0.0 ? 0.0 : std::abs(a - b) / denom;
}

}  // namespace llmap::test
