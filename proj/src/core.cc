#include "pendec/core.h"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>

namespace pendec {

ProbVector ProbVector::from_values(std::vector<double> values) {
  if (values.empty()) throw Error("probability vector is empty");
  double sum = 0.0;
  for (double p : values) {
    if (!(p >= 0.0) || !std::isfinite(p)) throw Error("probability entries must be finite and >= 0");
    sum += p;
  }
  if (std::abs(sum - 1.0) > kNormTolerance) {
    throw Error("probabilities sum to " + std::to_string(sum) + ", expected 1");
  }
  return ProbVector(std::move(values));
}

ProbVector softmax(std::span<const double> logits) {
  double max_logit = kNegInf;
  for (double v : logits) {
    if (std::isnan(v)) throw Error("NaN logit");
    max_logit = std::max(max_logit, v);
  }
  if (max_logit == kNegInf) throw EmptySupportError();
  if (std::isinf(max_logit)) throw Error("+inf logit");

  std::vector<double> out(logits.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = logits[i] == kNegInf ? 0.0 : std::exp(logits[i] - max_logit);
    sum += out[i];
  }
  // sum >= 1 since the max entry contributes exp(0).
  for (double& p : out) p /= sum;
  return ProbVector(std::move(out));
}

TokenId argmax_token(std::span<const double> values) {
  if (values.empty()) throw Error("argmax of empty vector");
  std::size_t best = 0;
  for (std::size_t i = 1; i < values.size(); ++i) {
    if (values[i] > values[best]) best = i;
  }
  return static_cast<TokenId>(best);
}

std::vector<std::pair<int, double>> topk_masses(const ProbVector& probs,
                                                std::span<const int> ks) {
  std::vector<std::pair<int, double>> out;
  if (ks.empty()) return out;
  std::vector<int> sorted_ks(ks.begin(), ks.end());
  std::sort(sorted_ks.begin(), sorted_ks.end());
  sorted_ks.erase(std::unique(sorted_ks.begin(), sorted_ks.end()), sorted_ks.end());
  if (sorted_ks.front() < 1) throw ConfigError("nucleus k must be >= 1");

  const std::size_t max_k = std::min<std::size_t>(sorted_ks.back(), probs.size());
  std::vector<double> top(probs.values().begin(), probs.values().end());
  std::partial_sort(top.begin(), top.begin() + max_k, top.end(), std::greater<>());

  double acc = 0.0;
  std::size_t taken = 0;
  for (int k : sorted_ks) {
    const std::size_t want = std::min<std::size_t>(k, probs.size());
    while (taken < want) acc += top[taken++];
    out.emplace_back(k, std::min(acc, 1.0));
  }
  return out;
}

const double* StepTrace::mass_for(int k) const {
  for (const auto& [kk, mass] : topk_mass) {
    if (kk == k) return &mass;
  }
  return nullptr;
}

StepTrace make_trace(const ProbVector& raw, TokenId chosen, double chosen_prob_final,
                     std::span<const int> ks) {
  StepTrace t;
  t.chosen = chosen;
  t.chosen_prob_raw = raw[chosen];
  t.chosen_prob_final = chosen_prob_final;
  t.argmax_raw = argmax_token(raw.values());
  t.topk_mass = topk_masses(raw, ks);
  t.is_greedy = chosen == t.argmax_raw;
  return t;
}

const char* to_string(Termination t) {
  return t == Termination::Eos ? "eos" : "max_length";
}

}  // namespace pendec
