#pragma once

#include <algorithm>
#include <cstddef>
#include <optional>
#include <span>
#include <string>

#include "pendec/core.h"

namespace pendec {

// How many trailing context tokens feed the repetition penalty. Unbounded
// means the whole context; a window of 0 disables the penalty.
class Window {
 public:
  static Window unbounded() { return Window(); }
  static Window of(std::size_t tokens) { return Window(tokens); }

  bool is_unbounded() const { return !size_; }
  std::size_t size() const { return size_.value_or(0); }

  // Number of trailing tokens of a context of `context_len` tokens covered.
  std::size_t span_for(std::size_t context_len) const {
    return size_ ? std::min(*size_, context_len) : context_len;
  }

  std::string to_string() const;
  static Window parse(const std::string& text);  // "unbounded" | "inf" | integer

  friend bool operator==(const Window&, const Window&) = default;

 private:
  Window() = default;
  explicit Window(std::size_t n) : size_(n) {}

  std::optional<std::size_t> size_;
};

enum class PenaltyMode {
  // Positive logits are divided by alpha, negative ones multiplied, so a
  // penalized token can only lose probability mass.
  SignAware,
  // Divide every penalized logit by alpha, whatever its sign.
  Literal,
};

struct PenaltyConfig {
  double alpha = 1.5;
  Window window = Window::of(100);
  // Target length L_t. Unset means "use the decoder's max_new_tokens".
  std::optional<std::size_t> target_length;
  bool length_penalty = true;
  PenaltyMode mode = PenaltyMode::SignAware;

  // Throws ConfigError unless alpha > 1 and target_length (if set) > 0.
  void validate() const;

  friend bool operator==(const PenaltyConfig&, const PenaltyConfig&) = default;
};

// Scales the logit of every distinct token among the last `window` context
// tokens by alpha, once per token regardless of how often it repeats.
// Other logits are untouched.
Logits repetition_penalty(Logits logits, std::span<const TokenId> context, double alpha,
                          Window window, PenaltyMode mode = PenaltyMode::SignAware);

// In-place variant used by the decoding loop.
void apply_repetition_penalty(std::span<double> logits, std::span<const TokenId> context,
                              double alpha, Window window, PenaltyMode mode);

// alpha * eos_logit * (target_length - current_length). When
// current_length > target_length the factor is clamped to 0 and a warning is
// logged.
double length_penalty(double eos_logit, double alpha, std::size_t target_length,
                      std::size_t current_length);

// Length penalty on the eos logit, then the windowed repetition penalty,
// then softmax. `generated_len` counts newly generated tokens only.
// cfg.target_length must be set.
ProbVector apply_penalties(Logits logits, std::span<const TokenId> context,
                           const PenaltyConfig& cfg, TokenId eos_id, std::size_t generated_len);

}  // namespace pendec
