#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "pendec/core.h"
#include "pendec/models.h"
#include "pendec/penalty.h"
#include "pendec/rng.h"

namespace pendec {

namespace strategy {

struct Greedy {
  friend bool operator==(const Greedy&, const Greedy&) = default;
};
struct Beam {
  int width = 5;
  friend bool operator==(const Beam&, const Beam&) = default;
};
struct TopK {
  int k = 7;
  friend bool operator==(const TopK&, const TopK&) = default;
};
struct TopP {
  double p = 0.95;
  friend bool operator==(const TopP&, const TopP&) = default;
};
struct Typical {
  double tau = 0.99;
  friend bool operator==(const Typical&, const Typical&) = default;
};
struct Eta {
  double epsilon = 0.0006;
  friend bool operator==(const Eta&, const Eta&) = default;
};
struct Mirostat {
  double tau = 3.0;
  double learning_rate = 0.1;
  std::optional<double> initial_mu;  // defaults to 2 * tau
  friend bool operator==(const Mirostat&, const Mirostat&) = default;
};
// Repetition penalty over the whole context; no window, no length penalty.
struct NearGreedy {
  double alpha = 1.5;
  friend bool operator==(const NearGreedy&, const NearGreedy&) = default;
};
struct Penalty {
  PenaltyConfig config;
  friend bool operator==(const Penalty&, const Penalty&) = default;
};

}  // namespace strategy

using Strategy = std::variant<strategy::Greedy, strategy::Beam, strategy::TopK, strategy::TopP,
                              strategy::Typical, strategy::Eta, strategy::Mirostat,
                              strategy::NearGreedy, strategy::Penalty>;

struct DecoderConfig {
  Strategy strategy = strategy::Greedy{};
  std::size_t max_new_tokens = 128;
  std::uint64_t seed = 0;
  // k values whose top-k raw mass is recorded in every StepTrace.
  std::vector<int> nucleus_ks = {1, 5, 10};

  // Throws ConfigError on out-of-range hyperparameters. k <= V is only
  // checked when vocab_size is given.
  void validate(std::optional<std::size_t> vocab_size = std::nullopt) const;

  bool is_stochastic() const;

  friend bool operator==(const DecoderConfig&, const DecoderConfig&) = default;
};

// Stable human-readable name, e.g. "top_p(p=0.95)". Used as the report's
// method column.
std::string label(const Strategy& s);
// Family name without hyperparameters: "greedy", "top_p", "penalty", ...
std::string family(const Strategy& s);

// --- truncation supports ---------------------------------------------------
// Each returns the kept token ids in ascending id order. Orderings by
// probability break ties toward the lower token id.

std::vector<TokenId> topk_support(const ProbVector& probs, int k);
// Smallest probability-sorted prefix with cumulative mass >= p.
std::vector<TokenId> topp_support(const ProbVector& probs, double p);
// Tokens ranked by |-ln p_i - H| (ties: higher p, then lower id); smallest
// prefix with cumulative mass >= tau.
std::vector<TokenId> typical_support(const ProbVector& probs, double tau);
// Keep p_i > min(epsilon, sqrt(epsilon) * exp(-H)); falls back to the argmax.
std::vector<TokenId> eta_support(const ProbVector& probs, double epsilon);
// Keep tokens with surprise -log2 p_i <= mu; falls back to the argmax.
std::vector<TokenId> mirostat_support(const ProbVector& probs, double mu);

double entropy_nats(const ProbVector& probs);

struct Draw {
  TokenId token = 0;
  double prob = 0.0;  // probability under the renormalized support
};

// Inverse CDF over the renormalized support walked in token-id order, so a
// single uniform draw u in [0, 1) determines the token.
Draw sample_from_support(const ProbVector& probs, std::span<const TokenId> support, double u);

TokenId step_greedy(const ProbVector& probs);
Draw step_topk(const ProbVector& probs, int k, Rng& rng);
Draw step_topp(const ProbVector& probs, double p, Rng& rng);
Draw step_typical(const ProbVector& probs, double tau, Rng& rng);
Draw step_eta(const ProbVector& probs, double epsilon, Rng& rng);

struct MirostatStep {
  Draw draw;
  double mu = 0.0;
};
// Samples from the surprise-truncated support, then moves mu by
// -learning_rate * (observed surprise in bits - tau).
MirostatStep step_mirostat(const ProbVector& probs, double mu, double tau, double learning_rate,
                           Rng& rng);

// --- whole-sequence decoders ----------------------------------------------

// Runs cfg.strategy until eos or max_new_tokens. Every trace's raw fields
// come from the model's unmodified distribution at that step.
GenerationRecord generate(const LanguageModel& model, std::span<const TokenId> prefix,
                          const DecoderConfig& cfg);

// Beam search over summed raw log probabilities, no length normalization.
// Finished beams stay in the pool and compete on total score; ties prefer the
// lexicographically smaller sequence. Traces follow the winning beam.
GenerationRecord beam_search(const LanguageModel& model, std::span<const TokenId> prefix,
                             int width, std::size_t max_new_tokens,
                             std::span<const int> nucleus_ks = {});

// Deterministic penalty decoding: raw logits -> eos length penalty ->
// windowed repetition penalty over prefix ++ generated -> softmax -> argmax.
// An unset target length resolves to max_new_tokens.
GenerationRecord penalty_decode(const LanguageModel& model, std::span<const TokenId> prefix,
                                const PenaltyConfig& cfg, std::size_t max_new_tokens,
                                std::span<const int> nucleus_ks = {});

}  // namespace pendec
