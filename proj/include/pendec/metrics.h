#pragma once

#include <map>
#include <span>
#include <vector>

#include "pendec/core.h"
#include "pendec/models.h"

namespace pendec {

// N-gram self-reinforcement ratio. For every position u whose n-gram already
// occurred, compare the summed raw probabilities of its tokens against the
// most recent prior occurrence v; the pair counts when the sum at u is
// strictly larger. Returns count / (L - n + 1). L < n gives 0 (logged).
double sr_ngram(std::span<const TokenId> tokens, std::span<const double> raw_probs, int n);
double sr_ngram(const GenerationRecord& record, int n);

// Nucleus-level self-reinforcement over a series NS(1..L):
//   (1/L) * #{t : mean(NS[1..t]) > mean(NS[1..t-1])},  t = 1 never counts.
// The comparison is evaluated as NS(t) > mean(NS[1..t-1]) + 1e-12, which is
// algebraically the same and absorbs summation round-off.
double sr_nucleus(std::span<const double> ns);
// Throws Error if some trace lacks a top-k mass for k.
double sr_nucleus(const GenerationRecord& record, int k);

// 100 * (1 - unique n-grams / total n-grams). L < n gives 0 (logged).
double rep_n(std::span<const TokenId> tokens, int n);

// prod_{n=2..4} (1 - rep_n / 100). Throws Error when fewer than 4 tokens.
double diversity(std::span<const TokenId> tokens);

// Mean natural-log probability per generated token under `scorer`.
double coherence(const LanguageModel& scorer, std::span<const TokenId> prefix,
                 std::span<const TokenId> generated);

// Fraction of steps whose token was the raw argmax. Throws on empty records.
double greedy_ratio(const GenerationRecord& record);

// Mean generated length (eos counted when emitted). Throws on an empty list.
double gen_length(std::span<const GenerationRecord> records);

struct SelfReinforcementReport {
  std::map<int, double> sr_n;     // n -> ratio
  std::map<int, double> sr_topk;  // k -> ratio
  // k -> mean NS(t) at each step t over the records that reached step t.
  std::map<int, std::vector<double>> ns_curve;

  friend bool operator==(const SelfReinforcementReport&,
                         const SelfReinforcementReport&) = default;
};

struct QualityReport {
  double diversity = 0.0;
  std::map<int, double> rep_n;  // n -> percentage, n in {2,3,4}
  double coherence = 0.0;
  double greedy_ratio = 0.0;
  double gen_length = 0.0;

  friend bool operator==(const QualityReport&, const QualityReport&) = default;
};

// Macro-averages (unweighted mean over records) of the self-reinforcement
// metrics for n in `ns` and k in `ks`.
SelfReinforcementReport self_reinforcement(std::span<const GenerationRecord> records,
                                           std::span<const int> ns, std::span<const int> ks);

}  // namespace pendec
