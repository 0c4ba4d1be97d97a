#include "llmap/promptshift.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "llmap/divergence.hpp"
#include "llmap/mapping.hpp"
#include "llmap/matrix_ops.hpp"

namespace llmap {

std::string to_string(TransformKind kind) {
  switch (kind) {
    case TransformKind::cot: return "cot";
    case TransformKind::repeat: return "repeat";
    case TransformKind::repeat_cot: return "repeat+cot";
  }
  throw Error("unreachable TransformKind");
}

TransformKind transform_kind_from_string(const std::string& s) {
  if (s == "cot") return TransformKind::cot;
  if (s == "repeat") return TransformKind::repeat;
  if (s == "repeat+cot" || s == "repeat_cot") return TransformKind::repeat_cot;
  throw ValidationError("unknown transform kind '" + s + "'");
}

PairSet apply_transform(const PairSet& pairs, const PromptTransform& t) {
  bool uses_cot =
      t.kind == TransformKind::cot || t.kind == TransformKind::repeat_cot;
  if (uses_cot && t.cot_phrase.empty()) {
    throw ValidationError("cot transform needs a non-empty phrase");
  }
  std::vector<TextPair> out;
  out.reserve(pairs.size());
  std::string suffix = "#" + to_string(t.kind);
  for (const TextPair& p : pairs.pairs()) {
    std::string prompt;
    switch (t.kind) {
      case TransformKind::cot:
        prompt = p.prompt + "\n" + t.cot_phrase;
        break;
      case TransformKind::repeat:
        prompt = p.prompt + "\n\n" + p.prompt;
        break;
      case TransformKind::repeat_cot:
        prompt = p.prompt + "\n\n" + p.prompt + "\n" + t.cot_phrase;
        break;
    }
    out.push_back({p.id + suffix, std::move(prompt), p.response});
  }
  return PairSet(std::move(out));
}

std::string base_pair_id(const std::string& id) {
  auto pos = id.rfind('#');
  if (pos == std::string::npos) return id;
  return id.substr(0, pos);
}

namespace {

void require_aligned(const LogLikMatrix& base, const LogLikMatrix& other,
                     const char* name) {
  if (other.model_ids() != base.model_ids()) {
    throw ValidationError(std::string("shift set: ") + name +
                          " matrix has different model ids or order");
  }
  if (other.pairs() != base.pairs()) {
    throw ValidationError(std::string("shift set: ") + name +
                          " matrix has a different pair count");
  }
  for (std::size_t s = 0; s < base.pairs(); ++s) {
    if (base_pair_id(other.pair_ids()[s]) != base_pair_id(base.pair_ids()[s])) {
      throw ValidationError(std::string("shift set: ") + name +
                            " pair ids misaligned at column " +
                            std::to_string(s));
    }
  }
}

std::vector<double> row_minus_row(std::span<const double> a,
                                  std::span<const double> b) {
  std::vector<double> out(a.size());
  for (std::size_t s = 0; s < a.size(); ++s) out[s] = a[s] - b[s];
  return out;
}

double norm(std::span<const double> v) {
  return std::sqrt(std::inner_product(v.begin(), v.end(), v.begin(), 0.0));
}

// Rows of the matrix, centered per model when requested.
std::vector<double> rows_in_space(const LogLikMatrix& m, ShiftSpace space) {
  std::vector<double> rows = m.values();
  if (space == ShiftSpace::centered) {
    const std::size_t n = m.pairs();
    for (std::size_t i = 0; i < m.models(); ++i) {
      double* row = rows.data() + i * n;
      double mean = std::accumulate(row, row + n, 0.0) / static_cast<double>(n);
      for (std::size_t s = 0; s < n; ++s) row[s] -= mean;
    }
  }
  return rows;
}

}  // namespace

ShiftSet::ShiftSet(LogLikMatrix base, LogLikMatrix cot, LogLikMatrix rep,
                   LogLikMatrix rep_cot)
    : base_(std::move(base)),
      cot_(std::move(cot)),
      rep_(std::move(rep)),
      rep_cot_(std::move(rep_cot)) {
  require_valid(base_);
  require_valid(cot_);
  require_valid(rep_);
  require_valid(rep_cot_);
  require_aligned(base_, cot_, "cot");
  require_aligned(base_, rep_, "repeat");
  require_aligned(base_, rep_cot_, "repeat+cot");
}

ShiftVectors shift_vectors(const ShiftSet& s, const std::string& model_id) {
  std::size_t i = s.base().model_index(model_id);
  ShiftVectors out;
  out.cot = row_minus_row(s.cot().row(i), s.base().row(i));
  out.rep = row_minus_row(s.rep().row(i), s.base().row(i));
  out.rep_cot = row_minus_row(s.rep_cot().row(i), s.base().row(i));
  return out;
}

std::string to_string(ShiftSpace space) {
  return space == ShiftSpace::raw ? "raw" : "centered";
}

ShiftSpace shift_space_from_string(const std::string& s) {
  if (s == "raw") return ShiftSpace::raw;
  if (s == "centered") return ShiftSpace::centered;
  throw ValidationError("unknown space '" + s + "' (expected raw|centered)");
}

double compositionality_error(const ShiftSet& s, const std::string& model_id,
                              ShiftSpace space) {
  if (s.models() < 2) {
    throw NumericError(
        "compositionality error needs K >= 2 models for the c_i correction");
  }
  const std::size_t n = s.pairs();
  const std::size_t k = s.models();
  const std::size_t idx = s.base().model_index(model_id);

  std::vector<double> base_rows = rows_in_space(s.base(), space);
  std::vector<double> cot_rows = rows_in_space(s.cot(), space);
  std::vector<double> rep_rows = rows_in_space(s.rep(), space);
  std::vector<double> rep_cot_rows = rows_in_space(s.rep_cot(), space);

  // c_i = base_i - mean over models of base vectors (in the chosen space).
  std::vector<double> mean_base(n, 0.0);
  for (std::size_t i = 0; i < k; ++i) {
    for (std::size_t t = 0; t < n; ++t) mean_base[t] += base_rows[i * n + t];
  }
  for (double& x : mean_base) x /= static_cast<double>(k);

  double num_acc = 0.0, den_acc = 0.0;
  for (std::size_t t = 0; t < n; ++t) {
    double b = base_rows[idx * n + t];
    double v_cot = cot_rows[idx * n + t] - b;
    double v_rep = rep_rows[idx * n + t] - b;
    double v_rc = rep_cot_rows[idx * n + t] - b;
    double c = b - mean_base[t];
    double num = v_cot + v_rep - v_rc;
    double den = v_rc + c;
    num_acc += num * num;
    den_acc += den * den;
  }
  double den = std::sqrt(den_acc);
  if (den < 1e-12) {
    throw NumericError("compositionality error denominator is degenerate for "
                       "model '" + model_id + "'");
  }
  return std::sqrt(num_acc) / den;
}

CompositionalitySummary compositionality_summary(const ShiftSet& s,
                                                 ShiftSpace space) {
  CompositionalitySummary out;
  out.per_model.reserve(s.models());
  for (const std::string& id : s.model_ids()) {
    out.per_model.push_back(compositionality_error(s, id, space));
  }
  out.mean = std::accumulate(out.per_model.begin(), out.per_model.end(), 0.0) /
             static_cast<double>(out.per_model.size());
  std::vector<double> sorted = out.per_model;
  std::sort(sorted.begin(), sorted.end());
  std::size_t k = sorted.size();
  out.median = (k % 2 == 1) ? sorted[k / 2]
                            : 0.5 * (sorted[k / 2 - 1] + sorted[k / 2]);
  return out;
}

MeanShiftDeltas delta_mean_additivity(const ShiftSet& s) {
  if (s.models() < 2) {
    throw NumericError("delta_mean_additivity needs K >= 2 models");
  }
  MeanShiftDeltas out;
  const std::size_t k = s.models();
  out.cot.resize(k);
  out.rep.resize(k);
  out.rep_cot.resize(k);
  auto row_mean = [&](const LogLikMatrix& m, std::size_t i) {
    auto r = m.row(i);
    return std::accumulate(r.begin(), r.end(), 0.0) /
           static_cast<double>(r.size());
  };
  std::vector<double> sum(k);
  for (std::size_t i = 0; i < k; ++i) {
    double base = row_mean(s.base(), i);
    out.cot[i] = row_mean(s.cot(), i) - base;
    out.rep[i] = row_mean(s.rep(), i) - base;
    out.rep_cot[i] = row_mean(s.rep_cot(), i) - base;
    sum[i] = out.cot[i] + out.rep[i];
  }
  out.pearson = pearson(out.rep_cot, sum);
  return out;
}

SubspaceProjection mean_shift_subspace_projection(const ShiftSet& s,
                                                  double angle_tol) {
  const std::size_t n = s.pairs();
  const std::size_t k = s.models();

  // Cross-model mean shift vectors in the raw (uncentered) space.
  std::vector<double> v_cot(n, 0.0), v_rep(n, 0.0);
  for (std::size_t i = 0; i < k; ++i) {
    auto base = s.base().row(i);
    auto cot = s.cot().row(i);
    auto rep = s.rep().row(i);
    for (std::size_t t = 0; t < n; ++t) {
      v_cot[t] += cot[t] - base[t];
      v_rep[t] += rep[t] - base[t];
    }
  }
  for (double& x : v_cot) x /= static_cast<double>(k);
  for (double& x : v_rep) x /= static_cast<double>(k);

  double n_cot = norm(v_cot);
  double n_rep = norm(v_rep);
  if (n_cot < 1e-12 || n_rep < 1e-12) {
    throw NumericError("mean shift vectors are degenerate (zero norm)");
  }
  double cosang = std::inner_product(v_cot.begin(), v_cot.end(),
                                     v_rep.begin(), 0.0) /
                  (n_cot * n_rep);
  double angle = std::acos(std::min(1.0, std::abs(cosang)));
  if (!(angle > angle_tol)) {
    throw NumericError(
        "mean shift vectors are near-collinear (angle " +
        std::to_string(angle) + " rad <= tolerance " +
        std::to_string(angle_tol) + ")");
  }

  SubspaceProjection out;
  out.model_ids = s.model_ids();
  // Gram-Schmidt: v_cot direction first, then the orthogonalized v_rep.
  out.basis1 = v_cot;
  for (double& x : out.basis1) x /= n_cot;
  double proj = std::inner_product(v_rep.begin(), v_rep.end(),
                                   out.basis1.begin(), 0.0);
  out.basis2 = v_rep;
  for (std::size_t t = 0; t < n; ++t) out.basis2[t] -= proj * out.basis1[t];
  double n_b2 = norm(out.basis2);
  for (double& x : out.basis2) x /= n_b2;

  // In-plane coordinates of all 4K vectors, model-major in setting order.
  const std::array<const LogLikMatrix*, 4> mats = {&s.base(), &s.cot(),
                                                   &s.rep(), &s.rep_cot()};
  std::vector<double> plane(4 * k * 2);
  const std::ptrdiff_t kk = static_cast<std::ptrdiff_t>(k);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < kk; ++i) {
    for (std::size_t t = 0; t < 4; ++t) {
      auto row = mats[t]->row(static_cast<std::size_t>(i));
      double c1 = std::inner_product(row.begin(), row.end(),
                                     out.basis1.begin(), 0.0);
      double c2 = std::inner_product(row.begin(), row.end(),
                                     out.basis2.begin(), 0.0);
      std::size_t p = static_cast<std::size_t>(i) * 4 + t;
      plane[p * 2] = c1;
      plane[p * 2 + 1] = c2;
    }
  }

  // PCA over all 4K projected points jointly; inside the plane this is an
  // isometry, it only fixes the axes.
  try {
    PcaResult rot = pca(plane, 4 * k, 2, 2);
    out.coords = std::move(rot.coords);
  } catch (const NumericError&) {
    // In-plane points may still be collinear; keep the one informative axis.
    PcaResult rot = pca(plane, 4 * k, 2, 1);
    out.coords.assign(4 * k * 2, 0.0);
    for (std::size_t p = 0; p < 4 * k; ++p) out.coords[p * 2] = rot.coords[p];
  }
  return out;
}

}  // namespace llmap
