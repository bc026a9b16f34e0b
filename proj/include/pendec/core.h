#pragma once

#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace pendec {

using TokenId = std::uint32_t;
using TokenSequence = std::vector<TokenId>;

// Unnormalized natural-log scores, one per vocabulary entry. -inf marks a
// hard-masked token; NaN is never valid.
using Logits = std::vector<double>;

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();
inline constexpr double kNormTolerance = 1e-9;

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Invalid hyperparameters or malformed configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

class EmptySupportError : public Error {
 public:
  EmptySupportError() : Error("empty support") {}
};

// A normalized distribution over the vocabulary. Construction validates
// non-negativity and unit mass (within kNormTolerance).
class ProbVector {
 public:
  ProbVector() = default;

  static ProbVector from_values(std::vector<double> values);

  std::span<const double> values() const { return values_; }
  std::size_t size() const { return values_.size(); }
  double operator[](std::size_t i) const { return values_[i]; }

  friend bool operator==(const ProbVector&, const ProbVector&) = default;

 private:
  explicit ProbVector(std::vector<double> values) : values_(std::move(values)) {}

  std::vector<double> values_;

  friend ProbVector softmax(std::span<const double> logits);
};

// Stable softmax: exp(v_i - m) / sum_j exp(v_j - m) with m the max logit.
// -inf entries map to exactly 0. Throws EmptySupportError when every entry
// is -inf and Error on NaN.
ProbVector softmax(std::span<const double> logits);

// Index of the largest value; ties go to the lowest index.
TokenId argmax_token(std::span<const double> values);

// Sum of the k largest probabilities, for each k in `ks` (k clamped to V).
std::vector<std::pair<int, double>> topk_masses(const ProbVector& probs,
                                                std::span<const int> ks);

// Per-step record. Raw fields describe the model's unmodified distribution;
// `chosen_prob_final` is under whatever distribution the decoder actually
// sampled or maximized.
struct StepTrace {
  TokenId chosen = 0;
  double chosen_prob_raw = 0.0;
  double chosen_prob_final = 0.0;
  TokenId argmax_raw = 0;
  std::vector<std::pair<int, double>> topk_mass;  // (k, mass), ascending k
  bool is_greedy = false;

  // Returns nullptr when k was not recorded.
  const double* mass_for(int k) const;

  friend bool operator==(const StepTrace&, const StepTrace&) = default;
};

StepTrace make_trace(const ProbVector& raw, TokenId chosen, double chosen_prob_final,
                     std::span<const int> ks);

enum class Termination { Eos, MaxLength };

const char* to_string(Termination t);

struct GenerationRecord {
  TokenSequence prefix;
  TokenSequence generated;
  std::vector<StepTrace> traces;
  Termination termination = Termination::MaxLength;

  friend bool operator==(const GenerationRecord&, const GenerationRecord&) = default;
};

}  // namespace pendec
