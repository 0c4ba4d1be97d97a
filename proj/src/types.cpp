#include "llmap/types.hpp"

#include <cmath>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

namespace llmap {

PairSet::PairSet(std::vector<TextPair> pairs) : pairs_(std::move(pairs)) {
  std::unordered_set<std::string> seen;
  seen.reserve(pairs_.size());
  for (std::size_t s = 0; s < pairs_.size(); ++s) {
    const TextPair& p = pairs_[s];
    if (p.response.empty()) {
      throw ValidationError("pair '" + p.id + "' (index " + std::to_string(s) +
                            ") has an empty response");
    }
    if (!seen.insert(p.id).second) {
      throw ValidationError("duplicate pair id '" + p.id + "'");
    }
  }
}

std::vector<std::string> PairSet::ids() const {
  std::vector<std::string> out;
  out.reserve(pairs_.size());
  for (const TextPair& p : pairs_) out.push_back(p.id);
  return out;
}

std::string to_string(LikMode mode) {
  switch (mode) {
    case LikMode::conditional: return "conditional";
    case LikMode::unconditional: return "unconditional";
    case LikMode::pmi: return "pmi";
  }
  throw Error("unreachable LikMode");
}

LikMode lik_mode_from_string(const std::string& s) {
  if (s == "conditional") return LikMode::conditional;
  if (s == "unconditional") return LikMode::unconditional;
  if (s == "pmi") return LikMode::pmi;
  throw ValidationError("unknown matrix mode '" + s + "'");
}

LogLikMatrix::LogLikMatrix(std::vector<std::string> model_ids,
                           std::vector<std::string> pair_ids,
                           std::vector<double> values, LikMode mode,
                           std::optional<ClipInfo> clipped, bool centered)
    : model_ids_(std::move(model_ids)),
      pair_ids_(std::move(pair_ids)),
      values_(std::move(values)),
      mode_(mode),
      clipped_(std::move(clipped)),
      centered_(centered) {
  if (values_.size() != model_ids_.size() * pair_ids_.size()) {
    throw ValidationError(
        "matrix shape mismatch: " + std::to_string(model_ids_.size()) + " x " +
        std::to_string(pair_ids_.size()) + " ids but " +
        std::to_string(values_.size()) + " values");
  }
}

std::size_t LogLikMatrix::model_index(const std::string& model_id) const {
  for (std::size_t i = 0; i < model_ids_.size(); ++i) {
    if (model_ids_[i] == model_id) return i;
  }
  throw ValidationError("model '" + model_id + "' not present in matrix");
}

std::string to_string(VectorKind kind) {
  switch (kind) {
    case VectorKind::raw: return "raw";
    case VectorKind::centered: return "centered";
    case VectorKind::pmi: return "pmi";
    case VectorKind::centered_pmi: return "centered_pmi";
  }
  throw Error("unreachable VectorKind");
}

ModelVector matrix_row(const LogLikMatrix& m, std::size_t i) {
  auto r = m.row(i);
  VectorKind kind = m.mode() == LikMode::pmi ? VectorKind::pmi : VectorKind::raw;
  if (m.centered()) {
    kind = m.mode() == LikMode::pmi ? VectorKind::centered_pmi
                                    : VectorKind::centered;
  }
  return ModelVector{m.model_ids()[i], {r.begin(), r.end()}, kind};
}

ModelVector matrix_row(const LogLikMatrix& m, const std::string& model_id) {
  return matrix_row(m, m.model_index(model_id));
}

std::string ValidationReport::to_string() const {
  std::ostringstream os;
  for (const Violation& v : violations) {
    os << v.message;
    if (v.row >= 0) os << " [row " << v.row;
    if (v.col >= 0) os << ", col " << v.col;
    if (v.row >= 0) os << "]";
    os << "\n";
  }
  return os.str();
}

ValidationReport validate_matrix(const LogLikMatrix& m) {
  ValidationReport report;
  const std::size_t n = m.pairs();

  std::unordered_map<std::string, std::size_t> seen_models;
  for (std::size_t i = 0; i < m.models(); ++i) {
    auto [it, inserted] = seen_models.emplace(m.model_ids()[i], i);
    if (!inserted) {
      report.violations.push_back(
          {Violation::Kind::duplicate_model_id, static_cast<std::ptrdiff_t>(i),
           -1,
           "duplicate model_id '" + m.model_ids()[i] + "' (rows " +
               std::to_string(it->second) + " and " + std::to_string(i) + ")"});
    }
  }
  std::unordered_map<std::string, std::size_t> seen_pairs;
  for (std::size_t s = 0; s < n; ++s) {
    auto [it, inserted] = seen_pairs.emplace(m.pair_ids()[s], s);
    if (!inserted) {
      report.violations.push_back(
          {Violation::Kind::duplicate_pair_id, -1,
           static_cast<std::ptrdiff_t>(s),
           "duplicate pair_id '" + m.pair_ids()[s] + "' (cols " +
               std::to_string(it->second) + " and " + std::to_string(s) + ")"});
    }
  }
  for (std::size_t i = 0; i < m.models(); ++i) {
    for (std::size_t s = 0; s < n; ++s) {
      double v = m.at(i, s);
      if (!std::isfinite(v)) {
        report.violations.push_back({Violation::Kind::nonfinite,
                                     static_cast<std::ptrdiff_t>(i),
                                     static_cast<std::ptrdiff_t>(s),
                                     "non-finite value for model '" +
                                         m.model_ids()[i] + "', pair '" +
                                         m.pair_ids()[s] + "'"});
      } else if (m.clipped() && v < m.clipped()->threshold) {
        report.violations.push_back(
            {Violation::Kind::clip_threshold, static_cast<std::ptrdiff_t>(i),
             static_cast<std::ptrdiff_t>(s),
             "value below recorded clip threshold for model '" +
                 m.model_ids()[i] + "'"});
      }
    }
  }
  return report;
}

void require_valid(const LogLikMatrix& m) {
  ValidationReport report = validate_matrix(m);
  if (!report.clean()) {
    throw ValidationError("matrix validation failed:\n" + report.to_string());
  }
}

}  // namespace llmap
