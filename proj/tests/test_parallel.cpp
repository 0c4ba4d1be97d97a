#include <doctest.h>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "llmap/divergence.hpp"
#include "llmap/matrix_ops.hpp"
#include "llmap/oracle.hpp"
#include "llmap/reference.hpp"
#include "test_util.hpp"

using namespace llmap;

// The OpenMP kernels must agree with the serial reference implementations
// bit for bit: every parallel entry is computed with the same arithmetic in
// the same order as the serial loop.

TEST_CASE("pairwise_kl equals the serial reference exactly") {
  for (auto space : {KlSpace::centered, KlSpace::raw}) {
    LogLikMatrix m = test::random_matrix(17, 257, 42);
    PairwiseDistanceMatrix par = pairwise_kl(m, space);
    PairwiseDistanceMatrix ser = ref::pairwise_kl(m, space);
    CHECK(par.values == ser.values);
    CHECK(par.model_ids == ser.model_ids);
  }
}

TEST_CASE("pmi_matrix equals the serial reference exactly") {
  LogLikMatrix cond = test::random_matrix(9, 64, 7, LikMode::conditional);
  LogLikMatrix uncond = test::random_matrix(9, 64, 8, LikMode::unconditional);
  LogLikMatrix par = pmi_matrix(cond, uncond);
  LogLikMatrix ser = ref::pmi_matrix(cond, uncond);
  CHECK(par.values() == ser.values());
}

TEST_CASE("reference distance matrix is consistent with pairwise_kl") {
  LogLikMatrix m = test::random_matrix(7, 33, 3);
  std::vector<double> dd =
      ref::pairwise_sq_dists(m.values(), m.models(), m.pairs());
  PairwiseDistanceMatrix kl = pairwise_kl(m, KlSpace::raw);
  for (std::size_t i = 0; i < m.models(); ++i) {
    for (std::size_t j = 0; j < m.models(); ++j) {
      CHECK(kl.at(i, j) == doctest::Approx(dd[i * m.models() + j] /
                                           (2.0 * m.pairs()))
                               .epsilon(1e-15));
    }
  }
}

#ifdef _OPENMP
TEST_CASE("thread count does not change results") {
  LogLikMatrix m = test::random_matrix(13, 101, 9);
  oracle::ModelSpec spec;
  spec.prompts = 8;
  spec.tokens = 3;
  oracle::SyntheticModel om = oracle::random_model(spec, 4);
  PairSet pairs = oracle::sample_pairs(om, 5000, 5);

  int saved = omp_get_max_threads();
  omp_set_num_threads(1);
  PairwiseDistanceMatrix kl1 = pairwise_kl(m);
  ModelVector s1 = oracle::score_pairs(om, pairs, oracle::ScoreMode::conditional);
  double e1 = oracle::enumerate_kl(om, oracle::perturb(om, 0.1, 1));
  auto stat = [&](std::span<const std::size_t> idx) {
    double acc = 0.0;
    for (std::size_t s : idx) acc += s1.values[s];
    return acc / static_cast<double>(idx.size());
  };
  BootstrapResult b1 = bootstrap_ci(stat, pairs.size(), 300, 17);
  omp_set_num_threads(saved);

  PairwiseDistanceMatrix kl2 = pairwise_kl(m);
  ModelVector s2 = oracle::score_pairs(om, pairs, oracle::ScoreMode::conditional);
  double e2 = oracle::enumerate_kl(om, oracle::perturb(om, 0.1, 1));
  BootstrapResult b2 = bootstrap_ci(stat, pairs.size(), 300, 17);

  CHECK(kl1.values == kl2.values);
  CHECK(s1.values == s2.values);
  CHECK(e1 == e2);
  CHECK(b1.lower == b2.lower);
  CHECK(b1.upper == b2.upper);
}
#endif
