#include <doctest.h>

#include <cmath>
#include <numeric>

#include "llmap/divergence.hpp"
#include "llmap/matrix_ops.hpp"
#include "llmap/oracle.hpp"
#include "llmap/rng.hpp"
#include "test_util.hpp"

using namespace llmap;

TEST_CASE("kl_from_vectors formula and contracts") {
  ModelVector zero{"j", {0, 0, 0}, VectorKind::centered};
  ModelVector xi{"i", {1, -1, 0}, VectorKind::centered};
  CHECK(kl_from_vectors(xi, zero) == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
  CHECK(kl_from_vectors(zero, zero) == 0.0);
  CHECK(kl_from_vectors(xi, zero) == kl_from_vectors(zero, xi));

  CHECK_THROWS_AS(kl_from_vectors(xi, ModelVector{"j", {1, 2}, VectorKind::centered}),
                  ValidationError);
  CHECK_THROWS_AS(
      kl_from_vectors(ModelVector{"i", {1, 2, 3}, VectorKind::raw}, zero),
      ValidationError);
}

TEST_CASE("kl is zero iff the centered vectors coincide") {
  Rng rng(3);
  std::vector<double> v(16);
  for (double& x : v) x = rng.normal();
  ModelVector a{"a", v, VectorKind::raw};
  ModelVector ca = center(a);
  CHECK(kl_from_vectors(ca, ca) == 0.0);
  std::vector<double> w = v;
  w[3] += 0.5;
  ModelVector cb = center(ModelVector{"b", w, VectorKind::raw});
  CHECK(kl_from_vectors(ca, cb) > 0.0);
}

TEST_CASE("centering absorbs additive constants") {
  Rng rng(17);
  std::vector<double> a(64), b(64);
  for (std::size_t s = 0; s < a.size(); ++s) {
    a[s] = -8.0 + rng.normal();
    b[s] = -8.5 + rng.normal();
  }
  ModelVector ca = center(ModelVector{"a", a, VectorKind::raw});
  ModelVector cb = center(ModelVector{"b", b, VectorKind::raw});
  double base_kl = kl_from_vectors(ca, cb);

  std::vector<double> a2 = a, b2 = b;
  for (double& x : a2) x += 123.5;
  for (double& x : b2) x += -77.25;
  ModelVector ca2 = center(ModelVector{"a", a2, VectorKind::raw});
  ModelVector cb2 = center(ModelVector{"b", b2, VectorKind::raw});
  CHECK(test::rel_diff(base_kl, kl_from_vectors(ca2, cb2)) < 1e-12);
}

TEST_CASE("pairwise_kl matches per-pair calls and is symmetric") {
  LogLikMatrix m = test::random_matrix(3, 24, 5);
  PairwiseDistanceMatrix d = pairwise_kl(m);
  CHECK(d.kind == DistanceKind::kl_vector);
  for (std::size_t i = 0; i < 3; ++i) CHECK(d.at(i, i) == 0.0);
  for (std::size_t i = 0; i < 3; ++i) {
    for (std::size_t j = i + 1; j < 3; ++j) {
      CHECK(d.at(i, j) == d.at(j, i));
      ModelVector ci = center(matrix_row(m, i));
      ModelVector cj = center(matrix_row(m, j));
      CHECK(d.at(i, j) ==
            doctest::Approx(kl_from_vectors(ci, cj)).epsilon(1e-12));
    }
  }

  // Identical rows give an exactly zero matrix.
  std::vector<double> row(10, -2.0);
  std::vector<double> values;
  values.insert(values.end(), row.begin(), row.end());
  values.insert(values.end(), row.begin(), row.end());
  LogLikMatrix same({"a", "b"}, test::id_seq("p", 10), values,
                    LikMode::conditional);
  PairwiseDistanceMatrix z = pairwise_kl(same);
  for (double v : z.values) CHECK(v == 0.0);
}

TEST_CASE("vector KL tracks exact KL for small perturbations") {
  oracle::ModelSpec spec;
  spec.prompts = 6;
  spec.tokens = 3;
  spec.history = 1;
  spec.max_len = 3;
  oracle::SyntheticModel base = oracle::random_model(spec, 101);
  oracle::SyntheticModel pi = oracle::perturb(base, 0.03, 1);
  oracle::SyntheticModel pj = oracle::perturb(base, 0.03, 2);
  pi.id = "pi";
  pj.id = "pj";

  PairSet pairs = oracle::sample_pairs(base, 8000, 55);
  ModelVector si = oracle::score_pairs(pi, pairs, oracle::ScoreMode::conditional);
  ModelVector sj = oracle::score_pairs(pj, pairs, oracle::ScoreMode::conditional);
  double est = kl_from_vectors(center(si), center(sj));
  double exact = oracle::enumerate_kl(pi, pj);
  CHECK(test::rel_diff(est, exact) < 0.20);
}

TEST_CASE("mc_kl is the mean log-ratio") {
  std::vector<double> si{-1.0, -1.0};
  std::vector<double> sj{-1.2, -1.4};
  CHECK(mc_kl(si, sj) == doctest::Approx(0.3).epsilon(1e-15));
  CHECK(mc_kl(si, si) == 0.0);
  CHECK_THROWS_AS(mc_kl(si, std::vector<double>{1.0}), ValidationError);
}

TEST_CASE("mc_kl agrees with enumeration within sampling error") {
  oracle::ModelSpec spec;
  spec.prompts = 4;
  spec.tokens = 3;
  spec.history = 1;
  spec.max_len = 3;
  oracle::SyntheticModel pi = oracle::random_model(spec, 7);
  oracle::SyntheticModel pj = oracle::perturb(pi, 0.15, 9);
  pi.id = "pi";
  pj.id = "pj";
  double exact = oracle::enumerate_kl(pi, pj);

  const std::size_t n = 20000;
  PairSet gen = oracle::sample_pairs(pi, n, 77);
  ModelVector by_i = oracle::score_pairs(pi, gen, oracle::ScoreMode::conditional);
  ModelVector by_j = oracle::score_pairs(pj, gen, oracle::ScoreMode::conditional);
  double est = mc_kl(by_i.values, by_j.values);

  // Standard error from the per-sample log-ratios.
  double mean = est;
  double var = 0.0;
  for (std::size_t s = 0; s < n; ++s) {
    double d = (by_i.values[s] - by_j.values[s]) - mean;
    var += d * d;
  }
  var /= static_cast<double>(n - 1);
  double se = std::sqrt(var / static_cast<double>(n));
  CHECK(std::abs(est - exact) <= 3.0 * se);
}

TEST_CASE("symmetrize_kl averages the directed values") {
  CHECK(symmetrize_kl(0, 0) == 0.0);
  CHECK(symmetrize_kl(1, 3) == 2.0);
  oracle::SyntheticModel a = oracle::random_model({}, 1);
  oracle::SyntheticModel b = oracle::perturb(a, 0.1, 2);
  double ij = oracle::enumerate_kl(a, b);
  double ji = oracle::enumerate_kl(b, a);
  CHECK(symmetrize_kl(ij, ji) == doctest::Approx(0.5 * (ij + ji)).epsilon(1e-15));
}

TEST_CASE("pairwise_mc_kl has an exactly zero diagonal on shared scores") {
  SampledLogLiks s1{"a", {"p0", "p1"}, {"a", "b"}, {-1.0, -2.0, -1.5, -2.5}};
  SampledLogLiks s2{"b", {"p0", "p1"}, {"a", "b"}, {-1.1, -2.2, -1.0, -2.0}};
  std::vector<SampledLogLiks> samples{s1, s2};
  PairwiseDistanceMatrix d = pairwise_mc_kl(samples);
  CHECK(d.kind == DistanceKind::kl_mc);
  CHECK(d.sampled_inputs);
  CHECK(d.at(0, 0) == 0.0);
  CHECK(d.at(1, 1) == 0.0);
  CHECK(d.at(0, 1) == doctest::Approx(0.5).epsilon(1e-12));
  PairwiseDistanceMatrix sym = symmetrize(d);
  CHECK(sym.kind == DistanceKind::kl_mc_symmetric);
  CHECK(sym.at(0, 1) == sym.at(1, 0));
}

TEST_CASE("mi estimators on fixtures") {
  CHECK(mi_mean_pmi({"m", {2, 4}, VectorKind::pmi}) == 3.0);
  CHECK(mi_mean_pmi({"m", {0, 0, 0}, VectorKind::pmi}) == 0.0);
  CHECK_THROWS_AS(mi_mean_pmi({"m", {1, 2}, VectorKind::raw}), ValidationError);

  CHECK(mi_norm({"m", {-1, 1}, VectorKind::centered_pmi}) == 0.5);
  CHECK(mi_norm({"m", {0, 0, 0}, VectorKind::centered_pmi}) == 0.0);
  CHECK_THROWS_AS(mi_norm({"m", {1, 2}, VectorKind::pmi}), ValidationError);
}

TEST_CASE("mean-PMI estimator approaches exact MI on self-sampled pairs") {
  oracle::ModelSpec spec;
  spec.prompts = 5;
  spec.tokens = 3;
  spec.history = 1;
  spec.max_len = 3;
  spec.sharpness = 2.0;
  oracle::SyntheticModel m = oracle::random_model(spec, 23);
  double exact = oracle::enumerate_mi(m);
  REQUIRE(exact > 0.05);

  PairSet pairs = oracle::sample_pairs(m, 10000, 6);
  ModelVector c = oracle::score_pairs(m, pairs, oracle::ScoreMode::conditional);
  ModelVector u = oracle::score_pairs(m, pairs, oracle::ScoreMode::marginal);
  ModelVector delta{"m", {}, VectorKind::pmi};
  delta.values.resize(c.values.size());
  for (std::size_t s = 0; s < c.values.size(); ++s) {
    delta.values[s] = c.values[s] - u.values[s];
  }
  CHECK(test::rel_diff(mi_mean_pmi(delta), exact) < 0.10);
}

TEST_CASE("semdist fixtures") {
  // Identical single embeddings per prompt: distance 0.
  std::vector<double> e1{1, 0};
  EmbeddingSet a("a", {"p0"}, 1, 2, e1);
  EmbeddingSet b("b", {"p0"}, 1, 2, e1);
  CHECK(semdist(a, b) == 0.0);

  // Orthogonal mean vectors: distance 1.
  EmbeddingSet c("c", {"p0"}, 1, 2, {0, 1});
  CHECK(semdist(a, c) == 1.0);

  // Hand example: means (0.5, 0.5) and (1, 0) give 1 - 0.5 = 0.5.
  EmbeddingSet d("d", {"p0"}, 2, 2, {1, 0, 0, 1});
  EmbeddingSet e("e", {"p0"}, 2, 2, {1, 0, 1, 0});
  CHECK(semdist(d, e) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(semdist(d, e) == semdist(e, d));

  CHECK_THROWS_AS(semdist(a, EmbeddingSet("f", {"p0"}, 1, 3, {1, 0, 0})),
                  ValidationError);
  CHECK_THROWS_AS(EmbeddingSet("g", {"p0"}, 1, 2, {0.5, 0.5}),
                  ValidationError);  // not unit norm
}

TEST_CASE("pearson fixtures and degenerate input") {
  std::vector<double> x{1, 2, 3};
  std::vector<double> y_lin{3, 5, 7};  // y = 2x + 1
  CHECK(pearson(x, y_lin) == doctest::Approx(1.0).epsilon(1e-12));
  std::vector<double> y_neg{-1, -2, -3};
  CHECK(pearson(x, y_neg) == doctest::Approx(-1.0).epsilon(1e-12));
  std::vector<double> y{1, 3, 2};
  CHECK(pearson(x, y) == doctest::Approx(0.5).epsilon(1e-12));
  std::vector<double> flat{2, 2, 2};
  CHECK_THROWS_AS(pearson(x, flat), NumericError);
}

TEST_CASE("spearman uses average ranks and is monotone-invariant") {
  std::vector<double> x{1, 2, 2, 3};
  std::vector<double> rx = average_ranks(x);
  CHECK(rx == std::vector<double>{1.0, 2.5, 2.5, 4.0});
  std::vector<double> y{10, 20, 20, 30};
  CHECK(spearman(x, y) == doctest::Approx(1.0).epsilon(1e-12));

  Rng rng(9);
  std::vector<double> a(50);
  for (double& v : a) v = rng.normal();
  std::vector<double> b(a.size());
  std::vector<double> c(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    b[i] = std::exp(a[i]);          // strictly monotone transform
    c[i] = -a[i];                   // strictly decreasing
  }
  std::vector<double> other(a.size());
  for (double& v : other) v = rng.normal();
  CHECK(spearman(a, b) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(spearman(a, c) == doctest::Approx(-1.0).epsilon(1e-12));
  CHECK(spearman(a, other) ==
        doctest::Approx(spearman(b, other)).epsilon(1e-12));
}

TEST_CASE("bootstrap determinism and degenerate statistic") {
  auto constant = [](std::span<const std::size_t>) { return 4.25; };
  BootstrapResult r = bootstrap_ci(constant, 10, 200, 3);
  CHECK(r.lower == 4.25);
  CHECK(r.upper == 4.25);
  CHECK(r.point == 4.25);

  Rng rng(44);
  std::vector<double> data(80);
  for (double& v : data) v = rng.normal();
  auto mean_stat = [&](std::span<const std::size_t> idx) {
    double acc = 0.0;
    for (std::size_t s : idx) acc += data[s];
    return acc / static_cast<double>(idx.size());
  };
  BootstrapResult r1 = bootstrap_ci(mean_stat, data.size(), 500, 11);
  BootstrapResult r2 = bootstrap_ci(mean_stat, data.size(), 500, 11);
  CHECK(r1.lower == r2.lower);
  CHECK(r1.upper == r2.upper);
  CHECK(r1.point == r2.point);
  CHECK(r1.lower < r1.point);
  CHECK(r1.point < r1.upper);

  CHECK_THROWS_AS(bootstrap_ci(mean_stat, data.size(), 50, 1), NumericError);
  CHECK_THROWS_AS(bootstrap_ci(mean_stat, data.size(), 200, 1, 1.5),
                  NumericError);
}

TEST_CASE("bootstrap propagates statistic failures with the resample index") {
  // Fails whenever a resample repeats an index, so the identity (point)
  // evaluation succeeds but essentially every resample raises.
  auto failing = [](std::span<const std::size_t> idx) -> double {
    std::vector<std::size_t> sorted(idx.begin(), idx.end());
    std::sort(sorted.begin(), sorted.end());
    if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) {
      throw std::runtime_error("boom");
    }
    return 0.0;
  };
  try {
    bootstrap_ci(failing, 16, 100, 1);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("resample") != std::string::npos);
  }
}
