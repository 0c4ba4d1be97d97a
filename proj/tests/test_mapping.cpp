#include <doctest.h>

#include <cmath>
#include <numeric>

#ifdef LLMAP_HAVE_EIGEN
#include <Eigen/Dense>
#endif
#ifdef _OPENMP
#include <omp.h>
#endif

#include "llmap/mapping.hpp"
#include "llmap/rng.hpp"
#include "test_util.hpp"

using namespace llmap;

namespace {

// Labeled three-cluster point cloud: 20 points per cluster, centers much
// farther apart than the within-cluster scale.
struct Clusters {
  std::vector<double> points;  // 60 x dims
  std::vector<int> labels;
  std::size_t dims = 5;
};

Clusters three_clusters(std::uint64_t seed) {
  Clusters c;
  Rng rng(seed);
  const double centers[3][5] = {{0, 0, 0, 0, 0},
                                {40, 0, 0, 0, 0},
                                {0, 40, 0, 0, 0}};
  for (int g = 0; g < 3; ++g) {
    for (int i = 0; i < 20; ++i) {
      for (std::size_t d = 0; d < c.dims; ++d) {
        c.points.push_back(centers[g][d] + rng.normal());
      }
      c.labels.push_back(g);
    }
  }
  return c;
}

double purity(const std::vector<double>& coords,
              const std::vector<int>& labels) {
  double centroid[3][2] = {{0, 0}, {0, 0}, {0, 0}};
  int count[3] = {0, 0, 0};
  for (std::size_t i = 0; i < labels.size(); ++i) {
    centroid[labels[i]][0] += coords[i * 2];
    centroid[labels[i]][1] += coords[i * 2 + 1];
    count[labels[i]] += 1;
  }
  for (int g = 0; g < 3; ++g) {
    centroid[g][0] /= count[g];
    centroid[g][1] /= count[g];
  }
  std::size_t correct = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    double best = 1e300;
    int arg = -1;
    for (int g = 0; g < 3; ++g) {
      double dx = coords[i * 2] - centroid[g][0];
      double dy = coords[i * 2 + 1] - centroid[g][1];
      double d = dx * dx + dy * dy;
      if (d < best) {
        best = d;
        arg = g;
      }
    }
    correct += arg == labels[i];
  }
  return static_cast<double>(correct) / static_cast<double>(labels.size());
}

}  // namespace

TEST_CASE("pca reconstructs planar data exactly") {
  Rng rng(4);
  const std::size_t k = 12, n = 6;
  // Points in a 2-D affine plane of R^6.
  std::vector<double> u(n), v(n), origin(n);
  for (std::size_t t = 0; t < n; ++t) {
    u[t] = rng.normal();
    v[t] = rng.normal();
    origin[t] = rng.normal();
  }
  std::vector<double> x(k * n, 0.0);
  for (std::size_t i = 0; i < k; ++i) {
    double a = rng.normal(), b = rng.normal();
    for (std::size_t t = 0; t < n; ++t) {
      x[i * n + t] = origin[t] + a * u[t] + b * v[t];
    }
  }
  PcaResult r = pca(x, k, n, 2);
  // Mean + coords * loadings reproduces the input.
  std::vector<double> mean(n, 0.0);
  for (std::size_t i = 0; i < k; ++i) {
    for (std::size_t t = 0; t < n; ++t) mean[t] += x[i * n + t];
  }
  for (double& m : mean) m /= static_cast<double>(k);
  for (std::size_t i = 0; i < k; ++i) {
    for (std::size_t t = 0; t < n; ++t) {
      double rec = mean[t] + r.coords[i * 2] * r.loadings[t] +
                   r.coords[i * 2 + 1] * r.loadings[n + t];
      CHECK(std::abs(rec - x[i * n + t]) < 1e-9);
    }
  }
  CHECK(r.explained[0] + r.explained[1] == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("pca on collinear points explains everything in one component") {
  // Three collinear points in R^3.
  std::vector<double> x{0, 0, 0, 1, 2, -1, 2, 4, -2};
  PcaResult r = pca(x, 3, 3, 1);
  CHECK(r.explained[0] == doctest::Approx(1.0).epsilon(1e-12));
  // Asking for a second component exceeds the effective rank.
  try {
    pca(x, 3, 3, 2);
    FAIL("expected a rank error");
  } catch (const NumericError& e) {
    CHECK(std::string(e.what()).find("rank is 1") != std::string::npos);
  }
}

#ifdef LLMAP_HAVE_EIGEN
TEST_CASE("pca variances match an independent eigensolver") {
  for (std::uint64_t seed : {1ull, 2ull, 3ull}) {
    const std::size_t k = 20, n = 5;
    LogLikMatrix m = test::random_matrix(k, n, seed);
    PcaResult r = pca(m.values(), k, n, n);

    Eigen::MatrixXd x(k, n);
    for (std::size_t i = 0; i < k; ++i) {
      for (std::size_t t = 0; t < n; ++t) x(i, t) = m.at(i, t);
    }
    Eigen::RowVectorXd mean = x.colwise().mean();
    x.rowwise() -= mean;
    Eigen::MatrixXd cov = x.transpose() * x / static_cast<double>(k - 1);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
    std::vector<double> expected(eig.eigenvalues().data(),
                                 eig.eigenvalues().data() + n);
    std::sort(expected.rbegin(), expected.rend());
    for (std::size_t c = 0; c < n; ++c) {
      CHECK(test::rel_diff(r.variances[c], expected[c]) < 1e-8);
    }
  }
}
#endif

TEST_CASE("pca loadings are orthonormal and variance is non-increasing") {
  const std::size_t k = 15, n = 7;
  LogLikMatrix m = test::random_matrix(k, n, 31);
  PcaResult r = pca(m.values(), k, n, 5);
  for (std::size_t a = 0; a < r.dims; ++a) {
    for (std::size_t b = 0; b < r.dims; ++b) {
      double dot = 0.0;
      for (std::size_t t = 0; t < n; ++t) {
        dot += r.loadings[a * n + t] * r.loadings[b * n + t];
      }
      CHECK(std::abs(dot - (a == b ? 1.0 : 0.0)) < 1e-9);
    }
    if (a > 0) CHECK(r.variances[a] <= r.variances[a - 1] + 1e-15);
  }
  double frac_sum = std::accumulate(r.explained.begin(), r.explained.end(), 0.0);
  CHECK(frac_sum <= 1.0 + 1e-12);
}

TEST_CASE("pca is translation invariant and sign-fixed") {
  const std::size_t k = 10, n = 4;
  LogLikMatrix m = test::random_matrix(k, n, 8);
  PcaResult r1 = pca(m.values(), k, n, 2);
  std::vector<double> shifted = m.values();
  for (std::size_t i = 0; i < k; ++i) {
    for (std::size_t t = 0; t < n; ++t) shifted[i * n + t] += 3.5 * (t + 1);
  }
  PcaResult r2 = pca(shifted, k, n, 2);
  for (std::size_t i = 0; i < k * 2; ++i) {
    CHECK(std::abs(r1.coords[i] - r2.coords[i]) < 1e-9);
  }
  for (std::size_t c = 0; c < 2; ++c) {
    std::size_t arg = 0;
    double best = 0.0;
    for (std::size_t t = 0; t < n; ++t) {
      double mag = std::abs(r1.loadings[c * n + t]);
      if (mag > best) {
        best = mag;
        arg = t;
      }
    }
    CHECK(r1.loadings[c * n + arg] > 0.0);
  }
}

TEST_CASE("pca validates dims") {
  LogLikMatrix m = test::random_matrix(5, 3, 2);
  CHECK_THROWS_AS(pca(m.values(), 5, 3, 0), NumericError);
  CHECK_THROWS_AS(pca(m.values(), 5, 3, 4), NumericError);
  CHECK_THROWS_AS(pca(m.values(), 1, 3, 1), NumericError);
}

TEST_CASE("tsne is deterministic and permutation-equivariant") {
  Clusters c = three_clusters(10);
  auto ids = test::id_seq("m", 60);
  TsneParams params;
  params.iterations = 300;
  params.seed = 7;

  TsneResult r1 = tsne(c.points, 60, c.dims, ids, params);
  TsneResult r2 = tsne(c.points, 60, c.dims, ids, params);
  CHECK(r1.coords == r2.coords);  // bit-identical

  // Reverse the rows (with their ids): outputs permute identically.
  std::vector<double> reversed(c.points.size());
  std::vector<std::string> rev_ids(ids.rbegin(), ids.rend());
  for (std::size_t i = 0; i < 60; ++i) {
    std::copy(c.points.begin() + (59 - i) * c.dims,
              c.points.begin() + (60 - i) * c.dims,
              reversed.begin() + i * c.dims);
  }
  TsneResult r3 = tsne(reversed, 60, c.dims, rev_ids, params);
  for (std::size_t i = 0; i < 60; ++i) {
    CHECK(r3.coords[i * 2] == r1.coords[(59 - i) * 2]);
    CHECK(r3.coords[i * 2 + 1] == r1.coords[(59 - i) * 2 + 1]);
  }
}

TEST_CASE("tsne separates well-separated clusters") {
  Clusters c = three_clusters(20);
  auto ids = test::id_seq("m", 60);
  TsneParams params;
  params.seed = 3;
  TsneResult r = tsne(c.points, 60, c.dims, ids, params);
  CHECK(purity(r.coords, c.labels) == 1.0);

  // The KL objective settles: the last evaluation is no worse than the one
  // 100 iterations earlier (plus slack).
  REQUIRE(r.objective.size() >= 3);
  double at_900 = 0.0, at_1000 = 0.0;
  for (auto& [iter, value] : r.objective) {
    if (iter == 900) at_900 = value;
    if (iter == 1000) at_1000 = value;
    CHECK(std::isfinite(value));
  }
  CHECK(at_1000 <= at_900 + 1e-6);
}

TEST_CASE("tsne bandwidths hit the target perplexity") {
  Clusters c = three_clusters(30);
  const double perp = 12.0;
  std::vector<double> betas;
  std::vector<double> p = tsne_conditionals(c.points, 60, c.dims, perp, &betas);

  // Recompute each conditional distribution from the returned bandwidth and
  // check its entropy (in bits) against log2(perplexity).
  for (std::size_t a = 0; a < 60; ++a) {
    std::vector<double> q(60, 0.0);
    double sum = 0.0;
    for (std::size_t b = 0; b < 60; ++b) {
      if (b == a) continue;
      double d = 0.0;
      for (std::size_t t = 0; t < c.dims; ++t) {
        double diff = c.points[a * c.dims + t] - c.points[b * c.dims + t];
        d += diff * diff;
      }
      q[b] = std::exp(-betas[a] * d);
      sum += q[b];
    }
    double h_bits = 0.0;
    for (std::size_t b = 0; b < 60; ++b) {
      if (b == a || q[b] == 0.0) continue;
      double pr = q[b] / sum;
      h_bits -= pr * std::log2(pr);
    }
    CHECK(std::abs(h_bits - std::log2(perp)) < 1e-5);

    // And the returned rows are those distributions.
    for (std::size_t b = 0; b < 60; ++b) {
      if (b == a) continue;
      CHECK(p[a * 60 + b] == doctest::Approx(q[b] / sum).epsilon(1e-9));
    }
  }
}

TEST_CASE("tsne validates perplexity and point count") {
  Clusters c = three_clusters(40);
  auto ids = test::id_seq("m", 60);
  TsneParams params;
  params.perplexity = 25.0;  // > (60-1)/3
  CHECK_THROWS_AS(tsne(c.points, 60, c.dims, ids, params), NumericError);

  std::vector<double> tiny(3 * 2, 0.0);
  CHECK_THROWS_AS(tsne(tiny, 3, 2, test::id_seq("m", 3), {}), NumericError);
}

#ifdef _OPENMP
TEST_CASE("tsne and conditionals are thread-count invariant") {
  Clusters c = three_clusters(50);
  auto ids = test::id_seq("m", 60);
  TsneParams params;
  params.iterations = 200;
  params.seed = 5;
  int saved = omp_get_max_threads();
  omp_set_num_threads(1);
  TsneResult serial = tsne(c.points, 60, c.dims, ids, params);
  omp_set_num_threads(saved);
  TsneResult parallel = tsne(c.points, 60, c.dims, ids, params);
  CHECK(serial.coords == parallel.coords);
}
#endif

TEST_CASE("build_map records parameters") {
  LogLikMatrix m = test::random_matrix(8, 12, 9);
  TsneParams params;
  params.seed = 11;
  params.iterations = 120;
  MapEmbedding e = build_map(m, MapMethod::tsne, params);
  CHECK(e.coords.size() == 16);
  CHECK(e.params.at("seed").get<std::uint64_t>() == 11);
  CHECK(e.params.at("perplexity").get<double>() ==
        doctest::Approx((8.0 - 1.0) / 3.0));

  MapEmbedding p = build_map(m, MapMethod::pca, {});
  CHECK(p.coords.size() == 16);
  CHECK(p.params.contains("explained_variance"));
}
