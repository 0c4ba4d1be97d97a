#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "llmap/types.hpp"

namespace llmap::oracle {

// Enumerable conditional categorical model over tiny alphabets. Responses
// are token strings terminated by an explicit stop character, so the empty
// response renders as "$" and is never an empty string. All response mass
// beyond max_len tokens is aggregated into a single overflow outcome
// (rendered "#"), which makes every enumerated quantity exact rather than
// truncated.
//
// Conditional next-token distributions are keyed by (prompt, token history)
// with the history capped at `history` tokens. Distribution entries are kept
// strictly positive and the stop entry at or above p_stop_min, so every KL
// between models sharing alphabets is finite.
struct SyntheticModel {
  std::string id = "oracle";
  std::vector<std::string> prompts;
  std::vector<double> prompt_probs;  // p0(x), sums to 1 within 1e-12
  std::string tokens;                // non-stop token characters
  char stop = '$';
  char overflow_marker = '#';
  int history = 2;   // H
  int max_len = 4;   // L
  double p_stop_min = 0.05;
  double p_token_min = 1e-4;
  // cond[prompt][state][outcome]; outcome indices 0..tokens.size()-1 are
  // tokens, index tokens.size() is stop. States enumerate histories of
  // length 0..H in token order.
  std::vector<std::vector<std::vector<double>>> cond;
  // Same state layout, used by the empty-prompt scoring mode that mimics
  // feeding only the response to a language model.
  std::vector<std::vector<double>> empty_prompt_cond;

  std::size_t state_count() const;
  std::size_t outcome_arity() const { return tokens.size() + 1; }
};

void check_model(const SyntheticModel& m);

struct ModelSpec {
  std::size_t prompts = 4;
  std::size_t tokens = 3;
  int history = 2;
  int max_len = 4;
  double p_stop_min = 0.05;
  double p_token_min = 1e-4;
  // Spread of the log-normal weights behind each state's distribution;
  // 0 gives near-uniform states, larger values give peaked ones.
  double sharpness = 1.0;
  // All prompts share one conditional table (zero mutual information).
  bool prompt_independent = false;
  bool uniform_prompts = false;
};

SyntheticModel random_model(const ModelSpec& spec, std::uint64_t seed);

// Mix each conditional distribution of `base` with a seeded random simplex
// direction, moving it by at most `epsilon` in total variation. epsilon = 0
// returns the base model unchanged; invariants are preserved for any
// epsilon in [0, 0.5).
SyntheticModel perturb(const SyntheticModel& base, double epsilon,
                       std::uint64_t seed);

// Per-state convex combination (1-w)*a + w*b of two models with identical
// shape knobs. Used to build families with graded prompt dependence.
SyntheticModel mix(const SyntheticModel& a, const SyntheticModel& b,
                   double w);

enum class ScoreMode { conditional, marginal, empty_prompt };

std::string to_string(ScoreMode mode);

// Log-probability vector of the pairs under the model. conditional scores
// log p(y|x); marginal scores the exact marginal log sum_x p0(x) p(y|x);
// empty_prompt scores the model's dedicated empty-prompt table.
ModelVector score_pairs(const SyntheticModel& m, const PairSet& pairs,
                        ScoreMode mode);

// Every stop-terminated response of at most max_len tokens, shortest first,
// token order within a length. The overflow outcome is not included.
std::vector<std::string> enumerate_responses(const SyntheticModel& m);

// prompts x (O+1) table of outcome probabilities; the last column is the
// overflow mass. Row sums are 1 up to float error.
std::vector<double> outcome_table(const SyntheticModel& m);

double conditional_response_prob(const SyntheticModel& m,
                                 std::size_t prompt_index,
                                 const std::string& response);
double overflow_mass(const SyntheticModel& m, std::size_t prompt_index);
double marginal_response_prob(const SyntheticModel& m,
                              const std::string& response);
double marginal_overflow_mass(const SyntheticModel& m);

// Exact KL(p_i, p_j) averaged over the shared prompt distribution, by full
// enumeration of the outcome space.
double enumerate_kl(const SyntheticModel& p_i, const SyntheticModel& p_j);

// Exact mutual information between prompt and response under the model's
// joint p(y|x) p0(x).
double enumerate_mi(const SyntheticModel& m);

double prompt_entropy(const SyntheticModel& m);
double marginal_response_entropy(const SyntheticModel& m);

// N i.i.d. pairs (x, y) from the model, deterministic given the seed. Ids
// are "s<index>". Overflow walks render the overflow marker.
PairSet sample_pairs(const SyntheticModel& m, std::size_t n,
                     std::uint64_t seed);

nlohmann::json model_to_json(const SyntheticModel& m);
SyntheticModel model_from_json(const nlohmann::json& j);

}  // namespace llmap::oracle
