#include <doctest.h>

#include <cmath>

#include "llmap/promptshift.hpp"
#include "llmap/rng.hpp"
#include "test_util.hpp"

using namespace llmap;

namespace {

LogLikMatrix matrix_from(const std::vector<std::string>& model_ids,
                         std::size_t n, std::vector<double> values) {
  return LogLikMatrix(model_ids, test::id_seq("p", n), std::move(values),
                      LikMode::conditional);
}

ShiftSet make_shift_set(const std::vector<std::string>& models, std::size_t n,
                        std::vector<double> base, std::vector<double> cot,
                        std::vector<double> rep, std::vector<double> rep_cot) {
  return ShiftSet(matrix_from(models, n, std::move(base)),
                  matrix_from(models, n, std::move(cot)),
                  matrix_from(models, n, std::move(rep)),
                  matrix_from(models, n, std::move(rep_cot)));
}

}  // namespace

TEST_CASE("prompt transforms are bit-exact") {
  PairSet pairs({{"1", "Hi", "resp"}});
  PromptTransform cot{TransformKind::cot};
  PairSet tc = apply_transform(pairs, cot);
  CHECK(tc[0].prompt == "Hi\nLet's think step by step.");
  CHECK(tc[0].response == "resp");
  CHECK(tc[0].id == "1#cot");

  PairSet tr = apply_transform(pairs, {TransformKind::repeat});
  CHECK(tr[0].prompt == "Hi\n\nHi");
  CHECK(tr[0].id == "1#repeat");

  PairSet trc = apply_transform(pairs, {TransformKind::repeat_cot});
  CHECK(trc[0].prompt == "Hi\n\nHi\nLet's think step by step.");
  CHECK(trc[0].id == "1#repeat+cot");

  CHECK(base_pair_id("1#repeat+cot") == "1");
  CHECK(base_pair_id("plain") == "plain");
}

TEST_CASE("transforms handle multi-line and non-ASCII prompts") {
  std::string prompt = "第一行\n第二行 🚀";
  PairSet pairs({{"u", prompt, "答え"}});
  CHECK(apply_transform(pairs, {TransformKind::cot})[0].prompt ==
        prompt + "\nLet's think step by step.");
  CHECK(apply_transform(pairs, {TransformKind::repeat})[0].prompt ==
        prompt + "\n\n" + prompt);
  CHECK(apply_transform(pairs, {TransformKind::repeat_cot})[0].prompt ==
        prompt + "\n\n" + prompt + "\nLet's think step by step.");

  PromptTransform custom{TransformKind::cot, "考えてみましょう。"};
  CHECK(apply_transform(pairs, custom)[0].prompt ==
        prompt + "\n考えてみましょう。");
  CHECK_THROWS_AS(
      apply_transform(pairs, PromptTransform{TransformKind::cot, ""}),
      ValidationError);
}

TEST_CASE("transforms preserve pair count, order, and injectivity") {
  std::vector<TextPair> raw;
  for (int i = 0; i < 20; ++i) {
    raw.push_back(
        {"id" + std::to_string(i), "prompt " + std::to_string(i), "resp"});
  }
  PairSet pairs(std::move(raw));
  PairSet t = apply_transform(pairs, {TransformKind::repeat});
  REQUIRE(t.size() == pairs.size());
  for (std::size_t s = 0; s < t.size(); ++s) {
    CHECK(base_pair_id(t[s].id) == pairs[s].id);
    for (std::size_t u = s + 1; u < t.size(); ++u) {
      CHECK(t[s].prompt != t[u].prompt);
    }
  }
}

TEST_CASE("shift vectors are differences against base") {
  auto models = std::vector<std::string>{"m0"};
  ShiftSet same =
      make_shift_set(models, 2, {-1, -2}, {-1, -2}, {-1, -2}, {-1, -2});
  ShiftVectors v0 = shift_vectors(same, "m0");
  CHECK(v0.cot == std::vector<double>{0, 0});

  ShiftSet s =
      make_shift_set(models, 2, {-1, -2}, {-0.5, -2.5}, {-1, -2}, {-1, -2});
  ShiftVectors v = shift_vectors(s, "m0");
  CHECK(v.cot == std::vector<double>{0.5, -0.5});

  CHECK_THROWS_AS(shift_vectors(s, "absent"), ValidationError);
}

TEST_CASE("constructed additive shifts recover their parts exactly") {
  Rng rng(15);
  const std::size_t n = 12;
  // Small integers so every sum below is exact in floating point.
  std::vector<double> base(n), v1(n), v2(n);
  for (std::size_t s = 0; s < n; ++s) {
    base[s] = static_cast<double>(rng.uniform_index(9)) - 8.0;
    v1[s] = static_cast<double>(rng.uniform_index(9)) - 4.0;
    v2[s] = static_cast<double>(rng.uniform_index(9)) - 4.0;
  }
  std::vector<double> cot(n), rep(n), rep_cot(n);
  for (std::size_t s = 0; s < n; ++s) {
    cot[s] = base[s] + v1[s];
    rep[s] = base[s] + v2[s];
    rep_cot[s] = base[s] + v1[s] + v2[s];
  }
  // Two models so the c_i correction exists; the second mirrors the first.
  auto dup = [](std::vector<double> v) {
    std::vector<double> out = v;
    out.insert(out.end(), v.begin(), v.end());
    return out;
  };
  ShiftSet s = make_shift_set({"m0", "m1"}, n, dup(base), dup(cot), dup(rep),
                              dup(rep_cot));
  ShiftVectors v = shift_vectors(s, "m0");
  for (std::size_t t = 0; t < n; ++t) {
    CHECK(v.rep_cot[t] == v1[t] + v2[t]);
  }
  CHECK(compositionality_error(s, "m0", ShiftSpace::raw) == 0.0);
}

TEST_CASE("hand-built K=2 fixture gives error exactly 1") {
  // base1 = (0,0), base2 = (2,2) so c_1 = (-1,-1); model 1 shifts
  // v_cot = (1,0), v_rep = (0,1), v_rep_cot = (1,2).
  ShiftSet s = make_shift_set({"m1", "m2"}, 2,
                              {0, 0, 2, 2},   // base
                              {1, 0, 2, 2},   // cot
                              {0, 1, 2, 2},   // rep
                              {1, 2, 2, 2});  // rep+cot
  CHECK(compositionality_error(s, "m1", ShiftSpace::raw) == 1.0);
}

TEST_CASE("compositionality error needs a denominator and K >= 2") {
  ShiftSet degenerate =
      make_shift_set({"m1", "m2"}, 2, {0, 0, 0, 0}, {0, 0, 0, 0}, {0, 0, 0, 0},
                     {0, 0, 0, 0});
  CHECK_THROWS_AS(compositionality_error(degenerate, "m1", ShiftSpace::raw),
                  NumericError);

  ShiftSet single(matrix_from({"m"}, 2, {0, 0}), matrix_from({"m"}, 2, {1, 0}),
                  matrix_from({"m"}, 2, {0, 1}), matrix_from({"m"}, 2, {1, 1}));
  CHECK_THROWS_AS(compositionality_error(single, "m", ShiftSpace::raw),
                  NumericError);
}

TEST_CASE("the four-matrix identity holds on random shift sets") {
  Rng rng(71);
  for (int rep_i = 0; rep_i < 100; ++rep_i) {
    const std::size_t k = 3, n = 8;
    auto rand_values = [&]() {
      std::vector<double> v(k * n);
      for (double& x : v) x = -3.0 + rng.normal();
      return v;
    };
    std::vector<double> base = rand_values(), cot = rand_values(),
                        rep = rand_values(), rep_cot = rand_values();
    ShiftSet s = make_shift_set({"a", "b", "c"}, n, base, cot, rep, rep_cot);
    for (std::size_t i = 0; i < k; ++i) {
      ShiftVectors v = shift_vectors(s, s.model_ids()[i]);
      for (std::size_t t = 0; t < n; ++t) {
        double lhs = v.rep_cot[t] - v.cot[t] - v.rep[t];
        double rhs = rep_cot[i * n + t] - cot[i * n + t] - rep[i * n + t] +
                     base[i * n + t];
        CHECK(std::abs(lhs - rhs) <= 1e-9);
      }
    }
  }
}

TEST_CASE("centered-space error ignores a global constant") {
  Rng rng(5);
  const std::size_t k = 3, n = 10;
  auto rand_values = [&]() {
    std::vector<double> v(k * n);
    for (double& x : v) x = -6.0 + 2.0 * rng.normal();
    return v;
  };
  std::vector<double> base = rand_values(), cot = rand_values(),
                      rep = rand_values(), rep_cot = rand_values();
  ShiftSet s = make_shift_set({"a", "b", "c"}, n, base, cot, rep, rep_cot);
  auto shifted = [&](std::vector<double> v) {
    for (double& x : v) x += 41.5;
    return v;
  };
  ShiftSet s2 = make_shift_set({"a", "b", "c"}, n, shifted(base), shifted(cot),
                               shifted(rep), shifted(rep_cot));
  for (const std::string& id : s.model_ids()) {
    double e1 = compositionality_error(s, id, ShiftSpace::centered);
    double e2 = compositionality_error(s2, id, ShiftSpace::centered);
    CHECK(std::abs(e1 - e2) <= 1e-9);
  }
}

TEST_CASE("summary reports median and mean per model") {
  ShiftSet s = make_shift_set({"m1", "m2"}, 2,
                              {0, 0, 2, 2}, {1, 0, 2, 2}, {0, 1, 2, 2},
                              {1, 2, 2, 2});
  CompositionalitySummary sum = compositionality_summary(s, ShiftSpace::raw);
  REQUIRE(sum.per_model.size() == 2);
  CHECK(sum.per_model[0] == 1.0);
  CHECK(sum.median == 0.5 * (sum.per_model[0] + sum.per_model[1]));
}

TEST_CASE("delta-mean additivity on additive fixtures") {
  Rng rng(33);
  const std::size_t k = 5, n = 6;
  std::vector<double> base(k * n), cot(k * n), rep(k * n), rep_cot(k * n);
  for (std::size_t i = 0; i < k; ++i) {
    double d_cot = rng.normal();
    double d_rep = rng.normal();
    for (std::size_t t = 0; t < n; ++t) {
      base[i * n + t] = -2.0 + rng.normal();
      cot[i * n + t] = base[i * n + t] + d_cot;
      rep[i * n + t] = base[i * n + t] + d_rep;
      rep_cot[i * n + t] = base[i * n + t] + d_cot + d_rep;
    }
  }
  ShiftSet s = make_shift_set(test::id_seq("m", k), n, base, cot, rep, rep_cot);
  MeanShiftDeltas d = delta_mean_additivity(s);
  CHECK(d.pearson == doctest::Approx(1.0).epsilon(1e-9));
  for (std::size_t i = 0; i < k; ++i) {
    CHECK(d.rep_cot[i] == doctest::Approx(d.cot[i] + d.rep[i]).epsilon(1e-9));
  }
}

TEST_CASE("shift sets validate alignment") {
  LogLikMatrix base = matrix_from({"a", "b"}, 2, {1, 2, 3, 4});
  LogLikMatrix other_models({"a", "c"}, test::id_seq("p", 2), {1, 2, 3, 4},
                            LikMode::conditional);
  CHECK_THROWS_AS(ShiftSet(base, other_models, base, base), ValidationError);

  LogLikMatrix other_pairs({"a", "b"}, {"x0", "x1"}, {1, 2, 3, 4},
                           LikMode::conditional);
  CHECK_THROWS_AS(ShiftSet(base, other_pairs, base, base), ValidationError);

  // Transform-suffixed pair ids align with their base ids.
  LogLikMatrix suffixed({"a", "b"}, {"p0#cot", "p1#cot"}, {1, 2, 3, 4},
                        LikMode::conditional);
  CHECK_NOTHROW(ShiftSet(base, suffixed, base, base));
}

TEST_CASE("mean-shift projection maps unit shifts onto a square") {
  const std::size_t k = 3, n = 6;
  Rng rng(2);
  std::vector<double> base(k * n), cot(k * n), rep(k * n), rep_cot(k * n);
  for (std::size_t i = 0; i < k; ++i) {
    for (std::size_t t = 0; t < n; ++t) {
      double b = -1.0 + 0.3 * rng.normal();
      base[i * n + t] = b;
      cot[i * n + t] = b + (t == 0 ? 1.0 : 0.0);  // v_cot = e1
      rep[i * n + t] = b + (t == 1 ? 1.0 : 0.0);  // v_rep = e2
      rep_cot[i * n + t] = b + (t == 0 ? 1.0 : 0.0) + (t == 1 ? 1.0 : 0.0);
    }
  }
  ShiftSet s = make_shift_set(test::id_seq("m", k), n, base, cot, rep, rep_cot);
  SubspaceProjection proj = mean_shift_subspace_projection(s);
  REQUIRE(proj.coords.size() == 4 * k * 2);

  auto dist = [&](std::size_t a, std::size_t b) {
    double dx = proj.coords[a * 2] - proj.coords[b * 2];
    double dy = proj.coords[a * 2 + 1] - proj.coords[b * 2 + 1];
    return std::sqrt(dx * dx + dy * dy);
  };
  for (std::size_t i = 0; i < k; ++i) {
    std::size_t p = i * 4;  // base, cot, repeat, repeat+cot
    CHECK(dist(p, p + 1) == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(dist(p, p + 2) == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(dist(p, p + 3) == doctest::Approx(std::sqrt(2.0)).epsilon(1e-9));
    CHECK(dist(p + 1, p + 3) == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(dist(p + 2, p + 3) == doctest::Approx(1.0).epsilon(1e-9));
  }

  // The span basis is orthonormal and re-projection is the identity on it.
  double b11 = 0, b22 = 0, b12 = 0;
  for (std::size_t t = 0; t < n; ++t) {
    b11 += proj.basis1[t] * proj.basis1[t];
    b22 += proj.basis2[t] * proj.basis2[t];
    b12 += proj.basis1[t] * proj.basis2[t];
  }
  CHECK(b11 == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(b22 == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(std::abs(b12) < 1e-12);

  Rng rng2(8);
  double c1 = rng2.normal(), c2 = rng2.normal();
  std::vector<double> point(n);
  for (std::size_t t = 0; t < n; ++t) {
    point[t] = c1 * proj.basis1[t] + c2 * proj.basis2[t];
  }
  double p1 = 0, p2 = 0;
  for (std::size_t t = 0; t < n; ++t) {
    p1 += point[t] * proj.basis1[t];
    p2 += point[t] * proj.basis2[t];
  }
  CHECK(std::abs(p1 - c1) < 1e-9);
  CHECK(std::abs(p2 - c2) < 1e-9);
}

TEST_CASE("degenerate mean shifts are rejected") {
  const std::size_t k = 2, n = 4;
  std::vector<double> base(k * n, -1.0);
  ShiftSet zero = make_shift_set({"a", "b"}, n, base, base, base, base);
  CHECK_THROWS_AS(mean_shift_subspace_projection(zero), NumericError);

  // Collinear mean shifts: v_rep parallel to v_cot.
  std::vector<double> cot(base), rep(base), rep_cot(base);
  for (std::size_t i = 0; i < k; ++i) {
    cot[i * n] += 1.0;
    rep[i * n] += 2.0;
    rep_cot[i * n] += 3.0;
  }
  ShiftSet collinear = make_shift_set({"a", "b"}, n, base, cot, rep, rep_cot);
  CHECK_THROWS_AS(mean_shift_subspace_projection(collinear), NumericError);
}
