#include "pendec/metrics.h"

#include <cmath>
#include <set>
#include <unordered_map>

#include "pendec/log.h"

namespace pendec {

namespace {

struct SeqHash {
  std::size_t operator()(const TokenSequence& s) const {
    std::size_t h = 0xcbf29ce484222325ULL;
    for (TokenId t : s) {
      h ^= t;
      h *= 0x100000001b3ULL;
    }
    return h;
  }
};

TokenSequence ngram_at(std::span<const TokenId> tokens, std::size_t pos, int n) {
  return TokenSequence(tokens.begin() + pos, tokens.begin() + pos + n);
}

}  // namespace

double sr_ngram(std::span<const TokenId> tokens, std::span<const double> raw_probs, int n) {
  if (n < 1) throw Error("n-gram order must be >= 1");
  if (raw_probs.size() != tokens.size()) throw Error("one raw probability per token required");
  if (tokens.size() < static_cast<std::size_t>(n)) {
    logger()->debug("sr_ngram: {} tokens is shorter than n={}; ratio is 0", tokens.size(), n);
    return 0.0;
  }
  const std::size_t positions = tokens.size() - n + 1;

  std::unordered_map<TokenSequence, std::size_t, SeqHash> last_start;
  std::size_t reinforced = 0;
  for (std::size_t u = 0; u < positions; ++u) {
    auto key = ngram_at(tokens, u, n);
    auto [it, inserted] = last_start.try_emplace(std::move(key), u);
    if (!inserted) {
      const std::size_t v = it->second;
      double sum_u = 0.0;
      double sum_v = 0.0;
      for (int i = 0; i < n; ++i) {
        sum_u += raw_probs[u + i];
        sum_v += raw_probs[v + i];
      }
      if (sum_u > sum_v) ++reinforced;
      it->second = u;
    }
  }
  return static_cast<double>(reinforced) / static_cast<double>(positions);
}

double sr_ngram(const GenerationRecord& record, int n) {
  std::vector<double> probs;
  probs.reserve(record.traces.size());
  for (const auto& t : record.traces) probs.push_back(t.chosen_prob_raw);
  return sr_ngram(record.generated, probs, n);
}

double sr_nucleus(std::span<const double> ns) {
  if (ns.empty()) return 0.0;
  std::size_t count = 0;
  double prev_sum = ns[0];
  for (std::size_t t = 1; t < ns.size(); ++t) {
    const double prev_mean = prev_sum / static_cast<double>(t);
    if (ns[t] > prev_mean + 1e-12) ++count;
    prev_sum += ns[t];
  }
  return static_cast<double>(count) / static_cast<double>(ns.size());
}

double sr_nucleus(const GenerationRecord& record, int k) {
  std::vector<double> ns;
  ns.reserve(record.traces.size());
  for (const auto& t : record.traces) {
    const double* mass = t.mass_for(k);
    if (mass == nullptr) throw Error("trace has no top-k mass recorded for k=" + std::to_string(k));
    ns.push_back(*mass);
  }
  return sr_nucleus(ns);
}

double rep_n(std::span<const TokenId> tokens, int n) {
  if (n < 1) throw Error("n-gram order must be >= 1");
  if (tokens.size() < static_cast<std::size_t>(n)) {
    logger()->debug("rep_n: {} tokens is shorter than n={}; rep is 0", tokens.size(), n);
    return 0.0;
  }
  const std::size_t total = tokens.size() - n + 1;
  std::set<TokenSequence> unique;
  for (std::size_t i = 0; i < total; ++i) unique.insert(ngram_at(tokens, i, n));
  return 100.0 * (1.0 - static_cast<double>(unique.size()) / static_cast<double>(total));
}

double diversity(std::span<const TokenId> tokens) {
  if (tokens.size() < 4) {
    throw Error("diversity needs at least 4 tokens, got " + std::to_string(tokens.size()));
  }
  double d = 1.0;
  for (int n = 2; n <= 4; ++n) d *= 1.0 - rep_n(tokens, n) / 100.0;
  return d;
}

double coherence(const LanguageModel& scorer, std::span<const TokenId> prefix,
                 std::span<const TokenId> generated) {
  if (generated.empty()) throw Error("coherence needs a non-empty continuation");
  return sequence_logprob(scorer, prefix, generated) / static_cast<double>(generated.size());
}

double greedy_ratio(const GenerationRecord& record) {
  if (record.traces.empty()) throw Error("greedy ratio of an empty generation");
  std::size_t greedy = 0;
  for (const auto& t : record.traces) greedy += t.is_greedy ? 1 : 0;
  return static_cast<double>(greedy) / static_cast<double>(record.traces.size());
}

double gen_length(std::span<const GenerationRecord> records) {
  if (records.empty()) throw Error("gen_length of an empty record list");
  double total = 0.0;
  for (const auto& r : records) total += static_cast<double>(r.generated.size());
  return total / static_cast<double>(records.size());
}

SelfReinforcementReport self_reinforcement(std::span<const GenerationRecord> records,
                                           std::span<const int> ns, std::span<const int> ks) {
  SelfReinforcementReport report;
  if (records.empty()) return report;
  const double count = static_cast<double>(records.size());
  for (int n : ns) {
    double sum = 0.0;
    for (const auto& r : records) sum += sr_ngram(r, n);
    report.sr_n[n] = sum / count;
  }
  for (int k : ks) {
    double sum = 0.0;
    std::vector<double> curve_sum;
    std::vector<std::size_t> curve_count;
    for (const auto& r : records) {
      sum += sr_nucleus(r, k);
      for (std::size_t t = 0; t < r.traces.size(); ++t) {
        if (curve_sum.size() <= t) {
          curve_sum.push_back(0.0);
          curve_count.push_back(0);
        }
        curve_sum[t] += *r.traces[t].mass_for(k);
        ++curve_count[t];
      }
    }
    report.sr_topk[k] = sum / count;
    auto& curve = report.ns_curve[k];
    for (std::size_t t = 0; t < curve_sum.size(); ++t) {
      curve.push_back(curve_sum[t] / static_cast<double>(curve_count[t]));
    }
  }
  return report;
}

}  // namespace pendec
