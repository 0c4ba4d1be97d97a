#include "llmap/mapping.hpp"

#include <algorithm>
#include <cfloat>
#include <cmath>
#include <numeric>

#include "llmap/io.hpp"
#include "llmap/rng.hpp"

namespace llmap {

namespace {

// Cyclic Jacobi eigendecomposition of a symmetric matrix. Returns
// eigenvalues in descending order with matching eigenvector columns packed
// row-major (vectors[j*n + i] is component i of eigenvector j). Plenty for
// the matrix sizes here (K <= a few hundred) and numerically very stable.
void jacobi_eig(std::vector<double> a, std::size_t n,
                std::vector<double>& values, std::vector<double>& vectors) {
  std::vector<double> v(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) v[i * n + i] = 1.0;

  double scale = 0.0;
  for (std::size_t i = 0; i < n; ++i) scale = std::max(scale, std::abs(a[i * n + i]));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      scale = std::max(scale, std::abs(a[i * n + j]));
    }
  }
  if (scale == 0.0) scale = 1.0;

  const int max_sweeps = 64;
  for (int sweep = 0; sweep < max_sweeps; ++sweep) {
    double off = 0.0;
    for (std::size_t p = 0; p < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) off += a[p * n + q] * a[p * n + q];
    }
    if (off <= (1e-28 * scale * scale) * static_cast<double>(n * n)) break;

    for (std::size_t p = 0; p + 1 < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        double apq = a[p * n + q];
        if (std::abs(apq) <= 1e-300) continue;
        double theta = (a[q * n + q] - a[p * n + p]) / (2.0 * apq);
        double t = (theta >= 0.0 ? 1.0 : -1.0) /
                   (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        double c = 1.0 / std::sqrt(t * t + 1.0);
        double s = t * c;
        // A <- J^T A J for the (p, q) rotation.
        for (std::size_t i = 0; i < n; ++i) {
          double aip = a[i * n + p];
          double aiq = a[i * n + q];
          a[i * n + p] = c * aip - s * aiq;
          a[i * n + q] = s * aip + c * aiq;
        }
        for (std::size_t i = 0; i < n; ++i) {
          double api = a[p * n + i];
          double aqi = a[q * n + i];
          a[p * n + i] = c * api - s * aqi;
          a[q * n + i] = s * api + c * aqi;
        }
        for (std::size_t i = 0; i < n; ++i) {
          double vip = v[i * n + p];
          double viq = v[i * n + q];
          v[i * n + p] = c * vip - s * viq;
          v[i * n + q] = s * vip + c * viq;
        }
      }
    }
  }

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) {
    return a[x * n + x] > a[y * n + y];
  });
  values.resize(n);
  vectors.resize(n * n);
  for (std::size_t j = 0; j < n; ++j) {
    values[j] = a[order[j] * n + order[j]];
    for (std::size_t i = 0; i < n; ++i) {
      vectors[j * n + i] = v[i * n + order[j]];
    }
  }
}

// Flip a component so its largest-magnitude loading is positive; ties go to
// the first occurrence, which keeps the convention deterministic.
bool needs_flip(std::span<const double> loading) {
  std::size_t arg = 0;
  double best = std::abs(loading[0]);
  for (std::size_t i = 1; i < loading.size(); ++i) {
    double m = std::abs(loading[i]);
    if (m > best) {
      best = m;
      arg = i;
    }
  }
  return loading[arg] < 0.0;
}

}  // namespace

PcaResult pca(std::span<const double> matrix, std::size_t k, std::size_t n,
              std::size_t dims) {
  if (k < 2) throw NumericError("pca needs K >= 2 points");
  if (n < 1) throw NumericError("pca needs N >= 1 input dimensions");
  if (matrix.size() != k * n) throw ValidationError("pca shape mismatch");
  if (dims < 1 || dims > std::min(k, n)) {
    throw NumericError("pca dims must lie in [1, min(K, N)] = [1, " +
                       std::to_string(std::min(k, n)) + "], got " +
                       std::to_string(dims));
  }

  // Mean-center the point cloud.
  std::vector<double> xc(matrix.begin(), matrix.end());
  std::vector<double> mean(n, 0.0);
  for (std::size_t i = 0; i < k; ++i) {
    for (std::size_t t = 0; t < n; ++t) mean[t] += xc[i * n + t];
  }
  for (double& m : mean) m /= static_cast<double>(k);
  for (std::size_t i = 0; i < k; ++i) {
    for (std::size_t t = 0; t < n; ++t) xc[i * n + t] -= mean[t];
  }

  PcaResult out;
  out.points = k;
  out.input_dim = n;
  out.dims = dims;
  out.coords.assign(k * dims, 0.0);
  out.variances.assign(dims, 0.0);
  out.explained.assign(dims, 0.0);
  out.loadings.assign(dims * n, 0.0);

  const double denom = static_cast<double>(k - 1);
  std::vector<double> eigvals, eigvecs;

  if (k <= n) {
    // K x K Gram path: eigenvalues of Xc Xc^T equal those of Xc^T Xc.
    std::vector<double> gram(k * k, 0.0);
    const std::ptrdiff_t kk = static_cast<std::ptrdiff_t>(k);
#pragma omp parallel for schedule(dynamic)
    for (std::ptrdiff_t i = 0; i < kk; ++i) {
      for (std::size_t j = static_cast<std::size_t>(i); j < k; ++j) {
        double acc = 0.0;
        const double* ri = xc.data() + static_cast<std::size_t>(i) * n;
        const double* rj = xc.data() + j * n;
        for (std::size_t t = 0; t < n; ++t) acc += ri[t] * rj[t];
        gram[static_cast<std::size_t>(i) * k + j] = acc;
        gram[j * k + static_cast<std::size_t>(i)] = acc;
      }
    }
    double trace = 0.0;
    for (std::size_t i = 0; i < k; ++i) trace += gram[i * k + i];

    jacobi_eig(std::move(gram), k, eigvals, eigvecs);
    double lam_max = std::max(eigvals[0], 0.0);
    std::size_t rank = 0;
    for (double lam : eigvals) {
      if (lam > lam_max * 1e-12 && lam > 0.0) ++rank;
    }
    if (dims > rank) {
      throw NumericError("pca: requested " + std::to_string(dims) +
                         " components but the effective rank is " +
                         std::to_string(rank));
    }

    for (std::size_t m = 0; m < dims; ++m) {
      double lam = eigvals[m];
      double scale = std::sqrt(lam);
      // Loading u = Xc^T w / sqrt(lambda), unit norm by construction.
      std::span<const double> w{eigvecs.data() + m * k, k};
      double* u = out.loadings.data() + m * n;
      for (std::size_t i = 0; i < k; ++i) {
        double wi = w[i];
        const double* ri = xc.data() + i * n;
        for (std::size_t t = 0; t < n; ++t) u[t] += wi * ri[t];
      }
      for (std::size_t t = 0; t < n; ++t) u[t] /= scale;
      double flip = needs_flip({u, n}) ? -1.0 : 1.0;
      for (std::size_t t = 0; t < n; ++t) u[t] *= flip;
      for (std::size_t i = 0; i < k; ++i) {
        out.coords[i * dims + m] = flip * scale * w[i];
      }
      out.variances[m] = lam / denom;
      out.explained[m] = trace > 0.0 ? lam / trace : 0.0;
    }
  } else {
    // N x N covariance path (K > N).
    std::vector<double> cov(n * n, 0.0);
    for (std::size_t i = 0; i < k; ++i) {
      const double* ri = xc.data() + i * n;
      for (std::size_t t = 0; t < n; ++t) {
        for (std::size_t u = t; u < n; ++u) cov[t * n + u] += ri[t] * ri[u];
      }
    }
    for (std::size_t t = 0; t < n; ++t) {
      for (std::size_t u = 0; u < t; ++u) cov[t * n + u] = cov[u * n + t];
    }
    double trace = 0.0;
    for (std::size_t t = 0; t < n; ++t) trace += cov[t * n + t];

    jacobi_eig(std::move(cov), n, eigvals, eigvecs);
    double lam_max = std::max(eigvals[0], 0.0);
    std::size_t rank = 0;
    for (double lam : eigvals) {
      if (lam > lam_max * 1e-12 && lam > 0.0) ++rank;
    }
    if (dims > rank) {
      throw NumericError("pca: requested " + std::to_string(dims) +
                         " components but the effective rank is " +
                         std::to_string(rank));
    }

    for (std::size_t m = 0; m < dims; ++m) {
      std::span<const double> u_in{eigvecs.data() + m * n, n};
      double flip = needs_flip(u_in) ? -1.0 : 1.0;
      double* u = out.loadings.data() + m * n;
      for (std::size_t t = 0; t < n; ++t) u[t] = flip * u_in[t];
      for (std::size_t i = 0; i < k; ++i) {
        const double* ri = xc.data() + i * n;
        double acc = 0.0;
        for (std::size_t t = 0; t < n; ++t) acc += ri[t] * u[t];
        out.coords[i * dims + m] = acc;
      }
      out.variances[m] = eigvals[m] / denom;
      out.explained[m] = trace > 0.0 ? eigvals[m] / trace : 0.0;
    }
  }
  return out;
}

namespace {

struct CanonicalOrder {
  std::vector<std::size_t> to_input;  // canonical position -> input row
};

CanonicalOrder canonical_order(std::span<const std::string> ids) {
  CanonicalOrder ord;
  ord.to_input.resize(ids.size());
  std::iota(ord.to_input.begin(), ord.to_input.end(), 0);
  std::sort(ord.to_input.begin(), ord.to_input.end(),
            [&](std::size_t a, std::size_t b) { return ids[a] < ids[b]; });
  return ord;
}

// Conditional distribution bandwidth search: find beta so the Shannon
// entropy of p_{.|a} matches log(perplexity) within 1e-7 nats.
double perplexity_beta(const double* dist_row, std::size_t k, std::size_t a,
                       double log_perp, double* p_row) {
  double beta = 1.0;
  double beta_min = -DBL_MAX;
  double beta_max = DBL_MAX;
  for (int it = 0; it < 200; ++it) {
    double sum_p = 0.0;
    double sum_dp = 0.0;
    for (std::size_t b = 0; b < k; ++b) {
      if (b == a) {
        p_row[b] = 0.0;
        continue;
      }
      double p = std::exp(-beta * dist_row[b]);
      p_row[b] = p;
      sum_p += p;
      sum_dp += dist_row[b] * p;
    }
    double h = sum_p > 0.0 ? beta * (sum_dp / sum_p) + std::log(sum_p)
                           : -std::numeric_limits<double>::infinity();
    double diff = h - log_perp;
    if (std::abs(diff) < 1e-7) break;
    if (diff > 0.0) {
      beta_min = beta;
      beta = (beta_max == DBL_MAX) ? beta * 2.0 : 0.5 * (beta + beta_max);
    } else {
      beta_max = beta;
      beta = (beta_min == -DBL_MAX) ? beta / 2.0 : 0.5 * (beta + beta_min);
    }
  }
  double sum_p = 0.0;
  for (std::size_t b = 0; b < k; ++b) sum_p += p_row[b];
  if (sum_p <= 0.0) sum_p = DBL_MIN;
  for (std::size_t b = 0; b < k; ++b) p_row[b] /= sum_p;
  return beta;
}

}  // namespace

std::vector<double> tsne_conditionals(std::span<const double> matrix,
                                      std::size_t k, std::size_t n,
                                      double perplexity,
                                      std::vector<double>* betas) {
  if (matrix.size() != k * n) throw ValidationError("tsne shape mismatch");
  if (perplexity <= 1.0 || perplexity > static_cast<double>(k - 1)) {
    throw NumericError("perplexity " + std::to_string(perplexity) +
                       " infeasible for K = " + std::to_string(k));
  }
  std::vector<double> dd(k * k, 0.0);
  for (std::size_t a = 0; a < k; ++a) {
    for (std::size_t b = a + 1; b < k; ++b) {
      double acc = 0.0;
      for (std::size_t t = 0; t < n; ++t) {
        double d = matrix[a * n + t] - matrix[b * n + t];
        acc += d * d;
      }
      dd[a * k + b] = acc;
      dd[b * k + a] = acc;
    }
  }
  std::vector<double> p(k * k, 0.0);
  if (betas) betas->assign(k, 0.0);
  const double log_perp = std::log(perplexity);
  const std::ptrdiff_t kk = static_cast<std::ptrdiff_t>(k);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t a = 0; a < kk; ++a) {
    double beta = perplexity_beta(dd.data() + static_cast<std::size_t>(a) * k,
                                  k, static_cast<std::size_t>(a), log_perp,
                                  p.data() + static_cast<std::size_t>(a) * k);
    if (betas) (*betas)[static_cast<std::size_t>(a)] = beta;
  }
  return p;
}

TsneResult tsne(std::span<const double> matrix, std::size_t k, std::size_t n,
                std::span<const std::string> model_ids,
                const TsneParams& params) {
  if (k < 4) throw NumericError("tsne needs K >= 4 points");
  if (matrix.size() != k * n) throw ValidationError("tsne shape mismatch");
  if (model_ids.size() != k) throw ValidationError("tsne needs one id per row");

  const double max_perp = static_cast<double>(k - 1) / 3.0;
  double perp = params.perplexity;
  if (perp == 0.0) {
    perp = std::min(30.0, max_perp);
  } else if (perp > max_perp) {
    throw NumericError("perplexity " + std::to_string(perp) +
                       " infeasible for K = " + std::to_string(k) +
                       " (max " + std::to_string(max_perp) + ")");
  }
  if (perp <= 1.0) throw NumericError("perplexity must exceed 1");

  // Work in canonical (model-id-sorted) order so every reduction runs in an
  // order independent of the input row order; results are scattered back at
  // the end. This is what makes row permutation equivariance bit-exact.
  CanonicalOrder ord = canonical_order(model_ids);
  std::vector<double> x(k * n);
  for (std::size_t a = 0; a < k; ++a) {
    const double* src = matrix.data() + ord.to_input[a] * n;
    std::copy(src, src + n, x.begin() + a * n);
  }

  const std::ptrdiff_t kk = static_cast<std::ptrdiff_t>(k);

  // Squared Euclidean distances.
  std::vector<double> dd(k * k, 0.0);
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t a = 0; a < kk; ++a) {
    const double* ra = x.data() + static_cast<std::size_t>(a) * n;
    for (std::size_t b = static_cast<std::size_t>(a) + 1; b < k; ++b) {
      const double* rb = x.data() + b * n;
      double acc = 0.0;
      for (std::size_t t = 0; t < n; ++t) {
        double d = ra[t] - rb[t];
        acc += d * d;
      }
      dd[static_cast<std::size_t>(a) * k + b] = acc;
      dd[b * k + static_cast<std::size_t>(a)] = acc;
    }
  }

  // Conditional distributions with per-point bandwidths.
  std::vector<double> pcond(k * k, 0.0);
  const double log_perp = std::log(perp);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t a = 0; a < kk; ++a) {
    perplexity_beta(dd.data() + static_cast<std::size_t>(a) * k, k,
                    static_cast<std::size_t>(a), log_perp,
                    pcond.data() + static_cast<std::size_t>(a) * k);
  }

  // Symmetrize and normalize to joint similarities.
  std::vector<double> p(k * k, 0.0);
  double sum_p = 0.0;
  for (std::size_t a = 0; a < k; ++a) {
    for (std::size_t b = 0; b < k; ++b) {
      p[a * k + b] = pcond[a * k + b] + pcond[b * k + a];
      sum_p += p[a * k + b];
    }
  }
  for (double& v : p) v /= sum_p;

  // Seed initial coordinates per model id so a row permutation permutes the
  // start configuration with it.
  std::vector<double> y(k * 2);
  for (std::size_t a = 0; a < k; ++a) {
    Rng rng(derive_seed(params.seed, fnv1a64(model_ids[ord.to_input[a]])));
    y[a * 2] = rng.normal() * 1e-4;
    y[a * 2 + 1] = rng.normal() * 1e-4;
  }

  std::vector<double> grad(k * 2, 0.0);
  std::vector<double> velocity(k * 2, 0.0);
  std::vector<double> gains(k * 2, 1.0);
  std::vector<double> w(k * k, 0.0);
  std::vector<double> wsum(k, 0.0);

  TsneResult result;
  result.perplexity_used = perp;
  double momentum = 0.5;

  auto low_dim_weights = [&]() {
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t a = 0; a < kk; ++a) {
      const std::size_t ia = static_cast<std::size_t>(a);
      double acc = 0.0;
      for (std::size_t b = 0; b < k; ++b) {
        if (b == ia) {
          w[ia * k + b] = 0.0;
          continue;
        }
        double dx = y[ia * 2] - y[b * 2];
        double dy = y[ia * 2 + 1] - y[b * 2 + 1];
        double q = 1.0 / (1.0 + dx * dx + dy * dy);
        w[ia * k + b] = q;
        acc += q;
      }
      wsum[ia] = acc;
    }
    double total = 0.0;
    for (std::size_t a = 0; a < k; ++a) total += wsum[a];
    return total;
  };

  auto objective = [&](double sum_q) {
    std::vector<double> partial(k, 0.0);
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t a = 0; a < kk; ++a) {
      const std::size_t ia = static_cast<std::size_t>(a);
      double acc = 0.0;
      for (std::size_t b = 0; b < k; ++b) {
        double pv = p[ia * k + b];
        if (pv > 0.0 && b != ia) {
          acc += pv * std::log(pv / (w[ia * k + b] / sum_q));
        }
      }
      partial[ia] = acc;
    }
    double c = 0.0;
    for (std::size_t a = 0; a < k; ++a) c += partial[a];
    return c;
  };

  for (std::size_t iter = 0; iter < params.iterations; ++iter) {
    if (iter == params.exaggeration_iters) momentum = 0.8;
    const double exag =
        iter < params.exaggeration_iters ? params.early_exaggeration : 1.0;

    double sum_q = low_dim_weights();

#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t a = 0; a < kk; ++a) {
      const std::size_t ia = static_cast<std::size_t>(a);
      double gx = 0.0, gy = 0.0;
      for (std::size_t b = 0; b < k; ++b) {
        if (b == ia) continue;
        double q = w[ia * k + b];
        double mult = (exag * p[ia * k + b] - q / sum_q) * q;
        gx += mult * (y[ia * 2] - y[b * 2]);
        gy += mult * (y[ia * 2 + 1] - y[b * 2 + 1]);
      }
      grad[ia * 2] = gx;
      grad[ia * 2 + 1] = gy;
    }

    for (std::size_t c = 0; c < k * 2; ++c) {
      bool opposite = (grad[c] > 0.0) != (velocity[c] > 0.0);
      gains[c] = std::max(0.01, opposite ? gains[c] + 0.2 : gains[c] * 0.8);
      velocity[c] = momentum * velocity[c] -
                    params.learning_rate * gains[c] * grad[c];
      y[c] += velocity[c];
    }

    double mx = 0.0, my = 0.0;
    for (std::size_t a = 0; a < k; ++a) {
      mx += y[a * 2];
      my += y[a * 2 + 1];
    }
    mx /= static_cast<double>(k);
    my /= static_cast<double>(k);
    for (std::size_t a = 0; a < k; ++a) {
      y[a * 2] -= mx;
      y[a * 2 + 1] -= my;
    }

    if ((iter + 1) % 50 == 0 || iter + 1 == params.iterations) {
      double sq = low_dim_weights();
      result.objective.emplace_back(iter + 1, objective(sq));
    }
  }

  result.coords.assign(k * 2, 0.0);
  for (std::size_t a = 0; a < k; ++a) {
    result.coords[ord.to_input[a] * 2] = y[a * 2];
    result.coords[ord.to_input[a] * 2 + 1] = y[a * 2 + 1];
  }
  return result;
}

std::string to_string(MapMethod m) {
  return m == MapMethod::pca ? "pca" : "tsne";
}

MapMethod map_method_from_string(const std::string& s) {
  if (s == "pca") return MapMethod::pca;
  if (s == "tsne") return MapMethod::tsne;
  throw ValidationError("unknown map method '" + s + "' (expected pca|tsne)");
}

MapEmbedding build_map(const LogLikMatrix& m, MapMethod method,
                       const TsneParams& tsne_params) {
  require_valid(m);
  MapEmbedding out;
  out.model_ids = m.model_ids();
  out.method = method;
  if (method == MapMethod::pca) {
    PcaResult r = pca(m.values(), m.models(), m.pairs(), 2);
    out.coords = std::move(r.coords);
    out.params = nlohmann::json::object();
    out.params["explained_variance"] = r.explained;
  } else {
    TsneResult r = tsne(m.values(), m.models(), m.pairs(), m.model_ids(),
                        tsne_params);
    out.coords = std::move(r.coords);
    out.params = {
        {"perplexity", r.perplexity_used},
        {"iterations", tsne_params.iterations},
        {"learning_rate", tsne_params.learning_rate},
        {"early_exaggeration", tsne_params.early_exaggeration},
        {"exaggeration_iters", tsne_params.exaggeration_iters},
        {"seed", tsne_params.seed},
        {"final_kl", r.objective.empty() ? 0.0 : r.objective.back().second},
    };
  }
  return out;
}

}  // namespace llmap
