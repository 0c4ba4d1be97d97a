#pragma once

#include <array>
#include <string>
#include <vector>

#include "llmap/types.hpp"

namespace llmap {

enum class TransformKind { cot, repeat, repeat_cot };

std::string to_string(TransformKind kind);
TransformKind transform_kind_from_string(const std::string& s);

inline constexpr const char* kDefaultCotPhrase = "Let's think step by step.";

struct PromptTransform {
  TransformKind kind = TransformKind::cot;
  std::string cot_phrase = kDefaultCotPhrase;
};

// Rewrite prompts bit-exactly, leave responses untouched:
//   cot        x + "\n" + phrase
//   repeat     x + "\n\n" + x
//   repeat_cot x + "\n\n" + x + "\n" + phrase
// Pair ids get a "#<kind>" suffix so transformed sets stay distinguishable.
PairSet apply_transform(const PairSet& pairs, const PromptTransform& t);

// Strips a trailing "#<kind>" suffix, if any; identity alignment helper.
std::string base_pair_id(const std::string& id);

// The four aligned matrices of one prompt-shift experiment. Model ids must
// match exactly; pair ids must reduce to the same base ids in the same
// order. Shift vectors are always recomputed from the matrices.
class ShiftSet {
 public:
  ShiftSet(LogLikMatrix base, LogLikMatrix cot, LogLikMatrix rep,
           LogLikMatrix rep_cot);

  const LogLikMatrix& base() const { return base_; }
  const LogLikMatrix& cot() const { return cot_; }
  const LogLikMatrix& rep() const { return rep_; }
  const LogLikMatrix& rep_cot() const { return rep_cot_; }

  std::size_t models() const { return base_.models(); }
  std::size_t pairs() const { return base_.pairs(); }
  const std::vector<std::string>& model_ids() const {
    return base_.model_ids();
  }

 private:
  LogLikMatrix base_;
  LogLikMatrix cot_;
  LogLikMatrix rep_;
  LogLikMatrix rep_cot_;
};

struct ShiftVectors {
  std::vector<double> cot;
  std::vector<double> rep;
  std::vector<double> rep_cot;
};

// v_t,i = l_t,i - l_base,i for the three transforms.
ShiftVectors shift_vectors(const ShiftSet& s, const std::string& model_id);

enum class ShiftSpace { raw, centered };

std::string to_string(ShiftSpace space);
ShiftSpace shift_space_from_string(const std::string& s);

// Relative additive-compositionality error for one model:
//   ||v_cot + v_rep - v_rep_cot|| / ||v_rep_cot + c_i||
// with c_i the model's base-vector deviation from the cross-model mean base
// vector (computed on centered vectors for ShiftSpace::centered). Needs
// K >= 2 models.
double compositionality_error(const ShiftSet& s, const std::string& model_id,
                              ShiftSpace space);

struct CompositionalitySummary {
  std::vector<double> per_model;  // aligned with model_ids()
  double median = 0.0;
  double mean = 0.0;
};

CompositionalitySummary compositionality_summary(const ShiftSet& s,
                                                 ShiftSpace space);

struct MeanShiftDeltas {
  std::vector<double> cot;      // per model: mean(l_cot) - mean(l_base)
  std::vector<double> rep;
  std::vector<double> rep_cot;
  double pearson = 0.0;         // corr(delta_rep_cot, delta_cot + delta_rep)
};

MeanShiftDeltas delta_mean_additivity(const ShiftSet& s);

inline constexpr std::array<const char*, 4> kShiftSettings = {
    "base", "cot", "repeat", "repeat+cot"};

// 2-D coordinates of all 4K vectors after projecting onto the span of the
// mean shift vectors and rotating by PCA within that span. Points are
// model-major in kShiftSettings order.
struct SubspaceProjection {
  std::vector<std::string> model_ids;
  std::vector<double> basis1;  // orthonormal span basis, length N
  std::vector<double> basis2;
  std::vector<double> coords;  // 4K x 2 row-major
};

SubspaceProjection mean_shift_subspace_projection(const ShiftSet& s,
                                                  double angle_tol = 1e-6);

}  // namespace llmap
