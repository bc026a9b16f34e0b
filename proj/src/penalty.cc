#include "pendec/penalty.h"

#include <charconv>
#include <cmath>
#include <vector>

#include "pendec/log.h"

namespace pendec {

std::string Window::to_string() const {
  return size_ ? std::to_string(*size_) : std::string("unbounded");
}

Window Window::parse(const std::string& text) {
  if (text == "unbounded" || text == "inf" || text == "none") return unbounded();
  std::size_t n = 0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), n);
  if (ec != std::errc() || ptr != text.data() + text.size()) {
    throw ConfigError("window must be a non-negative integer or 'unbounded', got '" + text + "'");
  }
  return of(n);
}

void PenaltyConfig::validate() const {
  if (!(alpha > 1.0) || !std::isfinite(alpha)) {
    throw ConfigError("repetition penalty alpha must be > 1, got " + std::to_string(alpha));
  }
  if (target_length && *target_length == 0) throw ConfigError("target length must be positive");
}

void apply_repetition_penalty(std::span<double> logits, std::span<const TokenId> context,
                              double alpha, Window window, PenaltyMode mode) {
  if (!(alpha > 1.0)) throw ConfigError("repetition penalty alpha must be > 1");
  const std::size_t n = window.span_for(context.size());
  if (n == 0) return;

  std::vector<bool> seen(logits.size(), false);
  for (TokenId t : context.last(n)) {
    if (t >= logits.size()) throw Error("context token out of range for logits");
    if (seen[t]) continue;
    seen[t] = true;
    double& v = logits[t];
    if (mode == PenaltyMode::Literal || v > 0.0) {
      v /= alpha;
    } else {
      v *= alpha;
    }
  }
}

Logits repetition_penalty(Logits logits, std::span<const TokenId> context, double alpha,
                          Window window, PenaltyMode mode) {
  apply_repetition_penalty(logits, context, alpha, window, mode);
  return logits;
}

double length_penalty(double eos_logit, double alpha, std::size_t target_length,
                      std::size_t current_length) {
  if (current_length > target_length) {
    logger()->warn("length penalty: current length {} exceeds target {}; factor clamped to 0",
                   current_length, target_length);
    return 0.0;
  }
  const double factor = static_cast<double>(target_length - current_length);
  // -inf * 0 would be NaN; a zero factor zeroes the logit.
  if (factor == 0.0) return 0.0;
  return alpha * eos_logit * factor;
}

ProbVector apply_penalties(Logits logits, std::span<const TokenId> context,
                           const PenaltyConfig& cfg, TokenId eos_id, std::size_t generated_len) {
  cfg.validate();
  if (eos_id >= logits.size()) throw Error("eos id out of range for logits");
  if (cfg.length_penalty) {
    if (!cfg.target_length) throw ConfigError("length penalty needs a target length");
    if (logits[eos_id] > 0.0) {
      logger()->debug("length penalty: positive eos logit {} is amplified, not suppressed",
                      logits[eos_id]);
    }
    logits[eos_id] = length_penalty(logits[eos_id], cfg.alpha, *cfg.target_length, generated_len);
  }
  apply_repetition_penalty(logits, context, cfg.alpha, cfg.window, cfg.mode);
  return softmax(logits);
}

}  // namespace pendec
