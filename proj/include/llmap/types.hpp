#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace llmap {

// Error taxonomy. The CLI maps each class to a distinct exit status.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};
// Violated data contract: duplicate ids, non-finite entries, shape or
// alignment mismatches, malformed records.
struct ValidationError : Error {
  using Error::Error;
};
// Degenerate numeric input: zero variance, collinear bases, infeasible
// perplexity, vanishing denominators.
struct NumericError : Error {
  using Error::Error;
};
struct IoError : Error {
  using Error::Error;
};
struct ScorerError : Error {
  using Error::Error;
};

// One prompt-response pair (x_s, y_s).
struct TextPair {
  std::string id;
  std::string prompt;
  std::string response;
};

// Ordered pair set; column s of every matrix corresponds to pairs()[s].
// Ids are unique and responses non-empty; both are enforced on construction.
class PairSet {
 public:
  PairSet() = default;
  explicit PairSet(std::vector<TextPair> pairs);

  std::size_t size() const { return pairs_.size(); }
  const TextPair& operator[](std::size_t s) const { return pairs_[s]; }
  const std::vector<TextPair>& pairs() const { return pairs_; }
  std::vector<std::string> ids() const;

 private:
  std::vector<TextPair> pairs_;
};

enum class LikMode { conditional, unconditional, pmi };

std::string to_string(LikMode mode);
LikMode lik_mode_from_string(const std::string& s);

struct ClipInfo {
  double percentile = 0.0;
  double threshold = 0.0;
};

// K x N matrix of log-likelihoods, row-major. Rows are models, columns are
// pairs. Shape consistency is a construction invariant; id uniqueness and
// finiteness are checked by validate_matrix().
class LogLikMatrix {
 public:
  LogLikMatrix(std::vector<std::string> model_ids,
               std::vector<std::string> pair_ids, std::vector<double> values,
               LikMode mode, std::optional<ClipInfo> clipped = std::nullopt,
               bool centered = false);

  std::size_t models() const { return model_ids_.size(); }
  std::size_t pairs() const { return pair_ids_.size(); }

  const std::vector<std::string>& model_ids() const { return model_ids_; }
  const std::vector<std::string>& pair_ids() const { return pair_ids_; }
  const std::vector<double>& values() const { return values_; }
  LikMode mode() const { return mode_; }
  const std::optional<ClipInfo>& clipped() const { return clipped_; }
  bool centered() const { return centered_; }

  double at(std::size_t i, std::size_t s) const {
    return values_[i * pair_ids_.size() + s];
  }
  std::span<const double> row(std::size_t i) const {
    return {values_.data() + i * pair_ids_.size(), pair_ids_.size()};
  }
  // Index of a model id, or ValidationError if absent.
  std::size_t model_index(const std::string& model_id) const;

 private:
  std::vector<std::string> model_ids_;
  std::vector<std::string> pair_ids_;
  std::vector<double> values_;
  LikMode mode_;
  std::optional<ClipInfo> clipped_;
  bool centered_ = false;
};

enum class VectorKind { raw, centered, pmi, centered_pmi };

std::string to_string(VectorKind kind);

// One model's length-N vector in raw (l), centered (xi), pmi (delta-l) or
// centered-pmi (eta) form.
struct ModelVector {
  std::string model_id;
  std::vector<double> values;
  VectorKind kind = VectorKind::raw;
};

// Row i of a matrix as a ModelVector; kind follows the matrix mode
// (conditional/unconditional -> raw, pmi -> pmi).
ModelVector matrix_row(const LogLikMatrix& m, std::size_t i);
ModelVector matrix_row(const LogLikMatrix& m, const std::string& model_id);

struct Violation {
  enum class Kind {
    nonfinite,
    duplicate_model_id,
    duplicate_pair_id,
    clip_threshold,
  };
  Kind kind;
  // Row/column of the offending entry; -1 when not applicable.
  std::ptrdiff_t row = -1;
  std::ptrdiff_t col = -1;
  std::string message;
};

struct ValidationReport {
  std::vector<Violation> violations;
  bool clean() const { return violations.empty(); }
  std::string to_string() const;
};

ValidationReport validate_matrix(const LogLikMatrix& m);
// Throws ValidationError listing every violation.
void require_valid(const LogLikMatrix& m);

}  // namespace llmap
