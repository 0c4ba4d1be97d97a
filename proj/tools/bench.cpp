// Timing comparison between the OpenMP kernels and the serial reference
// implementations. Not a correctness test; see tests/ for the equivalence
// checks.

#include <chrono>
#include <cstdio>
#include <string>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "llmap/divergence.hpp"
#include "llmap/mapping.hpp"
#include "llmap/oracle.hpp"
#include "llmap/reference.hpp"
#include "llmap/rng.hpp"
#include "llmap/types.hpp"

using namespace llmap;

namespace {

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
      .count();
}

template <typename F>
double time_call(F&& f) {
  auto start = std::chrono::steady_clock::now();
  f();
  return seconds_since(start);
}

LogLikMatrix random_matrix(std::size_t k, std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<std::string> model_ids, pair_ids;
  for (std::size_t i = 0; i < k; ++i) model_ids.push_back("m" + std::to_string(i));
  for (std::size_t s = 0; s < n; ++s) pair_ids.push_back("p" + std::to_string(s));
  std::vector<double> values(k * n);
  for (double& v : values) v = -5.0 + rng.normal();
  return LogLikMatrix(std::move(model_ids), std::move(pair_ids),
                      std::move(values), LikMode::conditional);
}

void report(const char* name, double serial, double parallel) {
  std::printf("%-28s serial %8.3fs  parallel %8.3fs  speedup %5.2fx\n", name,
              serial, parallel, serial / parallel);
}

}  // namespace

int main() {
#ifdef _OPENMP
  std::printf("OpenMP enabled, max threads = %d\n", omp_get_max_threads());
#else
  std::printf("OpenMP disabled; both columns run serial code\n");
#endif

  {
    LogLikMatrix m = random_matrix(96, 20000, 7);
    PairwiseDistanceMatrix a, b;
    double ts = time_call([&] { a = ref::pairwise_kl(m); });
    double tp = time_call([&] { b = pairwise_kl(m); });
    report("pairwise_kl 96x20000", ts, tp);
  }

  {
    LogLikMatrix m = random_matrix(400, 64, 11);
    TsneParams params;
    params.iterations = 500;
    params.seed = 3;
    TsneResult r1, r2;
#ifdef _OPENMP
    int threads = omp_get_max_threads();
    omp_set_num_threads(1);
#endif
    double ts = time_call([&] {
      r1 = tsne(m.values(), m.models(), m.pairs(), m.model_ids(), params);
    });
#ifdef _OPENMP
    omp_set_num_threads(threads);
#endif
    double tp = time_call([&] {
      r2 = tsne(m.values(), m.models(), m.pairs(), m.model_ids(), params);
    });
    report("tsne 400 pts, 500 iters", ts, tp);
    bool identical = r1.coords == r2.coords;
    std::printf("  thread-count invariant: %s\n", identical ? "yes" : "NO");
  }

  {
    oracle::ModelSpec spec;
    spec.prompts = 32;
    spec.tokens = 4;
    spec.history = 2;
    spec.max_len = 5;
    oracle::SyntheticModel a = oracle::random_model(spec, 5);
    oracle::SyntheticModel b = oracle::perturb(a, 0.1, 6);
    PairSet pairs = oracle::sample_pairs(a, 200000, 9);
    ModelVector v1, v2;
#ifdef _OPENMP
    int threads = omp_get_max_threads();
    omp_set_num_threads(1);
#endif
    double ts = time_call(
        [&] { v1 = oracle::score_pairs(a, pairs, oracle::ScoreMode::conditional); });
#ifdef _OPENMP
    omp_set_num_threads(threads);
#endif
    double tp = time_call(
        [&] { v2 = oracle::score_pairs(a, pairs, oracle::ScoreMode::conditional); });
    report("oracle score 200k pairs", ts, tp);
    std::printf("  thread-count invariant: %s\n",
                v1.values == v2.values ? "yes" : "NO");
    double kl = oracle::enumerate_kl(a, b);
    std::printf("  enumerate_kl sanity: %.6f\n", kl);
  }

  {
    Rng rng(13);
    std::vector<double> data(2000);
    for (double& v : data) v = rng.normal();
    auto stat = [&](std::span<const std::size_t> idx) {
      double acc = 0.0;
      for (std::size_t s : idx) acc += data[s];
      return acc / static_cast<double>(idx.size());
    };
#ifdef _OPENMP
    int threads = omp_get_max_threads();
    omp_set_num_threads(1);
#endif
    double ts = time_call([&] { bootstrap_ci(stat, data.size(), 20000, 1); });
#ifdef _OPENMP
    omp_set_num_threads(threads);
#endif
    double tp = time_call([&] { bootstrap_ci(stat, data.size(), 20000, 1); });
    report("bootstrap 20k resamples", ts, tp);
  }

  return 0;
}
