#include "pendec/decoders.h"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <fmt/format.h>

namespace pendec {

namespace {

// Slack on cumulative-mass thresholds so that p equal to an exact prefix sum
// is not lost to summation round-off.
constexpr double kMassSlack = 1e-12;

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

// Token ids ordered by probability, descending, ties by lower id.
std::vector<TokenId> by_probability(const ProbVector& probs) {
  std::vector<TokenId> order(probs.size());
  std::iota(order.begin(), order.end(), TokenId{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](TokenId a, TokenId b) { return probs[a] > probs[b]; });
  return order;
}

std::vector<TokenId> prefix_with_mass(const ProbVector& probs, std::span<const TokenId> ranked,
                                      double threshold) {
  std::vector<TokenId> kept;
  double cum = 0.0;
  for (TokenId t : ranked) {
    kept.push_back(t);
    cum += probs[t];
    if (cum >= threshold - kMassSlack) break;
  }
  std::sort(kept.begin(), kept.end());
  return kept;
}

}  // namespace

void DecoderConfig::validate(std::optional<std::size_t> vocab_size) const {
  std::visit(
      Overloaded{
          [](const strategy::Greedy&) {},
          [](const strategy::Beam& b) {
            if (b.width < 1) throw ConfigError("beam width must be >= 1");
          },
          [&](const strategy::TopK& s) {
            if (s.k < 1) throw ConfigError("top-k needs k >= 1");
            if (vocab_size && static_cast<std::size_t>(s.k) > *vocab_size) {
              throw ConfigError("top-k needs k <= vocabulary size");
            }
          },
          [](const strategy::TopP& s) {
            if (!(s.p > 0.0 && s.p <= 1.0)) throw ConfigError("top-p needs 0 < p <= 1");
          },
          [](const strategy::Typical& s) {
            if (!(s.tau > 0.0 && s.tau <= 1.0)) throw ConfigError("typical needs 0 < tau <= 1");
          },
          [](const strategy::Eta& s) {
            if (!(s.epsilon > 0.0) || !std::isfinite(s.epsilon)) {
              throw ConfigError("eta sampling needs epsilon > 0");
            }
          },
          [](const strategy::Mirostat& s) {
            if (!(s.tau > 0.0)) throw ConfigError("mirostat needs tau > 0");
            if (!(s.learning_rate > 0.0)) throw ConfigError("mirostat needs learning rate > 0");
          },
          [](const strategy::NearGreedy& s) {
            if (!(s.alpha > 1.0)) throw ConfigError("near-greedy needs alpha > 1");
          },
          [](const strategy::Penalty& s) { s.config.validate(); },
      },
      strategy);
  for (int k : nucleus_ks) {
    if (k < 1) throw ConfigError("nucleus k values must be >= 1");
  }
}

bool DecoderConfig::is_stochastic() const {
  return std::holds_alternative<strategy::TopK>(strategy) ||
         std::holds_alternative<strategy::TopP>(strategy) ||
         std::holds_alternative<strategy::Typical>(strategy) ||
         std::holds_alternative<strategy::Eta>(strategy) ||
         std::holds_alternative<strategy::Mirostat>(strategy);
}

std::string family(const Strategy& s) {
  return std::visit(Overloaded{
                        [](const strategy::Greedy&) { return "greedy"; },
                        [](const strategy::Beam&) { return "beam"; },
                        [](const strategy::TopK&) { return "top_k"; },
                        [](const strategy::TopP&) { return "top_p"; },
                        [](const strategy::Typical&) { return "typical"; },
                        [](const strategy::Eta&) { return "eta"; },
                        [](const strategy::Mirostat&) { return "mirostat"; },
                        [](const strategy::NearGreedy&) { return "near_greedy"; },
                        [](const strategy::Penalty&) { return "penalty"; },
                    },
                    s);
}

std::string label(const Strategy& s) {
  return std::visit(
      Overloaded{
          [](const strategy::Greedy&) { return std::string("greedy"); },
          [](const strategy::Beam& b) { return fmt::format("beam(width={})", b.width); },
          [](const strategy::TopK& x) { return fmt::format("top_k(k={})", x.k); },
          [](const strategy::TopP& x) { return fmt::format("top_p(p={})", x.p); },
          [](const strategy::Typical& x) { return fmt::format("typical(tau={})", x.tau); },
          [](const strategy::Eta& x) { return fmt::format("eta(epsilon={})", x.epsilon); },
          [](const strategy::Mirostat& x) {
            return fmt::format("mirostat(tau={},lr={})", x.tau, x.learning_rate);
          },
          [](const strategy::NearGreedy& x) { return fmt::format("near_greedy(alpha={})", x.alpha); },
          [](const strategy::Penalty& x) {
            const auto& c = x.config;
            std::string out = fmt::format("penalty(alpha={},w={}", c.alpha, c.window.to_string());
            if (c.length_penalty) {
              out += c.target_length ? fmt::format(",lt={}", *c.target_length) : ",lt=max";
            } else {
              out += ",lp=off";
            }
            if (c.mode == PenaltyMode::Literal) out += ",literal";
            return out + ")";
          },
      },
      s);
}

// ---------------------------------------------------------------------------
// Supports

std::vector<TokenId> topk_support(const ProbVector& probs, int k) {
  if (k < 1 || static_cast<std::size_t>(k) > probs.size()) {
    throw ConfigError("top-k needs 1 <= k <= V");
  }
  auto ranked = by_probability(probs);
  ranked.resize(k);
  std::sort(ranked.begin(), ranked.end());
  return ranked;
}

std::vector<TokenId> topp_support(const ProbVector& probs, double p) {
  if (!(p > 0.0 && p <= 1.0)) throw ConfigError("top-p needs 0 < p <= 1");
  const auto ranked = by_probability(probs);
  return prefix_with_mass(probs, ranked, p);
}

double entropy_nats(const ProbVector& probs) {
  double h = 0.0;
  for (double p : probs.values()) {
    if (p > 0.0) h -= p * std::log(p);
  }
  return h;
}

std::vector<TokenId> typical_support(const ProbVector& probs, double tau) {
  if (!(tau > 0.0 && tau <= 1.0)) throw ConfigError("typical needs 0 < tau <= 1");
  const double h = entropy_nats(probs);
  std::vector<double> score(probs.size());
  for (std::size_t i = 0; i < probs.size(); ++i) {
    score[i] = probs[i] > 0.0 ? std::abs(-std::log(probs[i]) - h)
                              : std::numeric_limits<double>::infinity();
  }
  std::vector<TokenId> ranked(probs.size());
  std::iota(ranked.begin(), ranked.end(), TokenId{0});
  std::stable_sort(ranked.begin(), ranked.end(), [&](TokenId a, TokenId b) {
    if (score[a] != score[b]) return score[a] < score[b];
    return probs[a] > probs[b];
  });
  return prefix_with_mass(probs, ranked, tau);
}

std::vector<TokenId> eta_support(const ProbVector& probs, double epsilon) {
  if (!(epsilon > 0.0)) throw ConfigError("eta sampling needs epsilon > 0");
  const double eta = std::min(epsilon, std::sqrt(epsilon) * std::exp(-entropy_nats(probs)));
  std::vector<TokenId> kept;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    if (probs[i] > eta) kept.push_back(static_cast<TokenId>(i));
  }
  if (kept.empty()) kept.push_back(argmax_token(probs.values()));
  return kept;
}

std::vector<TokenId> mirostat_support(const ProbVector& probs, double mu) {
  std::vector<TokenId> kept;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    if (probs[i] > 0.0 && -std::log2(probs[i]) <= mu) kept.push_back(static_cast<TokenId>(i));
  }
  if (kept.empty()) kept.push_back(argmax_token(probs.values()));
  return kept;
}

Draw sample_from_support(const ProbVector& probs, std::span<const TokenId> support, double u) {
  if (support.empty()) throw EmptySupportError();
  double total = 0.0;
  for (TokenId t : support) total += probs[t];
  if (!(total > 0.0)) throw EmptySupportError();

  const double target = u * total;
  double cum = 0.0;
  TokenId last_positive = support.front();
  for (TokenId t : support) {
    if (probs[t] <= 0.0) continue;
    last_positive = t;
    cum += probs[t];
    if (cum > target) return Draw{t, probs[t] / total};
  }
  return Draw{last_positive, probs[last_positive] / total};
}

TokenId step_greedy(const ProbVector& probs) { return argmax_token(probs.values()); }

Draw step_topk(const ProbVector& probs, int k, Rng& rng) {
  return sample_from_support(probs, topk_support(probs, k), rng.uniform());
}

Draw step_topp(const ProbVector& probs, double p, Rng& rng) {
  return sample_from_support(probs, topp_support(probs, p), rng.uniform());
}

Draw step_typical(const ProbVector& probs, double tau, Rng& rng) {
  return sample_from_support(probs, typical_support(probs, tau), rng.uniform());
}

Draw step_eta(const ProbVector& probs, double epsilon, Rng& rng) {
  return sample_from_support(probs, eta_support(probs, epsilon), rng.uniform());
}

MirostatStep step_mirostat(const ProbVector& probs, double mu, double tau, double learning_rate,
                           Rng& rng) {
  const Draw d = sample_from_support(probs, mirostat_support(probs, mu), rng.uniform());
  const double surprise = -std::log2(probs[d.token]);
  return MirostatStep{d, mu - learning_rate * (surprise - tau)};
}

// ---------------------------------------------------------------------------
// Decoding loops

namespace {

// Shared loop: `choose(raw_probs, raw_logits, context, step)` returns the
// chosen token and its probability under the final distribution.
template <class Choose>
GenerationRecord run_loop(const LanguageModel& model, std::span<const TokenId> prefix,
                          std::size_t max_new_tokens, std::span<const int> ks, Choose&& choose) {
  GenerationRecord rec;
  rec.prefix.assign(prefix.begin(), prefix.end());
  TokenSequence context = rec.prefix;
  const TokenId eos = model.info().eos_id;
  rec.termination = Termination::MaxLength;

  for (std::size_t step = 0; step < max_new_tokens; ++step) {
    Logits logits = model.next_logits(context);
    const ProbVector raw = softmax(logits);
    const Draw d = choose(raw, std::move(logits), std::span<const TokenId>(context), step);
    rec.generated.push_back(d.token);
    rec.traces.push_back(make_trace(raw, d.token, d.prob, ks));
    context.push_back(d.token);
    if (d.token == eos) {
      rec.termination = Termination::Eos;
      break;
    }
  }
  return rec;
}

}  // namespace

GenerationRecord penalty_decode(const LanguageModel& model, std::span<const TokenId> prefix,
                                const PenaltyConfig& cfg, std::size_t max_new_tokens,
                                std::span<const int> nucleus_ks) {
  PenaltyConfig resolved = cfg;
  if (!resolved.target_length) resolved.target_length = std::max<std::size_t>(max_new_tokens, 1);
  resolved.validate();
  const TokenId eos = model.info().eos_id;
  return run_loop(model, prefix, max_new_tokens, nucleus_ks,
                  [&](const ProbVector&, Logits logits, std::span<const TokenId> context,
                      std::size_t step) {
                    const ProbVector penalized =
                        apply_penalties(std::move(logits), context, resolved, eos, step);
                    const TokenId t = argmax_token(penalized.values());
                    return Draw{t, penalized[t]};
                  });
}

GenerationRecord beam_search(const LanguageModel& model, std::span<const TokenId> prefix,
                             int width, std::size_t max_new_tokens,
                             std::span<const int> nucleus_ks) {
  if (width < 1) throw ConfigError("beam width must be >= 1");
  const TokenId eos = model.info().eos_id;

  struct Hyp {
    TokenSequence tokens;
    double score = 0.0;
    bool finished = false;
  };
  auto better = [](const Hyp& a, const Hyp& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.tokens < b.tokens;
  };

  std::vector<Hyp> pool{Hyp{}};
  TokenSequence context(prefix.begin(), prefix.end());
  for (std::size_t step = 0; step < max_new_tokens; ++step) {
    if (std::all_of(pool.begin(), pool.end(), [](const Hyp& h) { return h.finished; })) break;
    std::vector<Hyp> candidates;
    for (const Hyp& h : pool) {
      if (h.finished) {
        candidates.push_back(h);
        continue;
      }
      context.resize(prefix.size());
      context.insert(context.end(), h.tokens.begin(), h.tokens.end());
      const ProbVector probs = softmax(model.next_logits(context));
      for (std::size_t t = 0; t < probs.size(); ++t) {
        if (probs[t] <= 0.0) continue;
        Hyp next{h.tokens, h.score + std::log(probs[t]), t == eos};
        next.tokens.push_back(static_cast<TokenId>(t));
        candidates.push_back(std::move(next));
      }
    }
    const std::size_t keep = std::min<std::size_t>(width, candidates.size());
    std::partial_sort(candidates.begin(), candidates.begin() + keep, candidates.end(), better);
    candidates.resize(keep);
    pool = std::move(candidates);
  }
  std::sort(pool.begin(), pool.end(), better);
  const TokenSequence best = pool.front().tokens;

  // Replay the winner to record per-step raw statistics.
  std::size_t step = 0;
  return run_loop(model, prefix, best.size(), nucleus_ks,
                  [&](const ProbVector& raw, Logits, std::span<const TokenId>, std::size_t) {
                    const TokenId t = best[step++];
                    return Draw{t, raw[t]};
                  });
}

GenerationRecord generate(const LanguageModel& model, std::span<const TokenId> prefix,
                          const DecoderConfig& cfg) {
  cfg.validate(model.info().vocab_size);
  for (TokenId t : prefix) {
    if (t >= model.info().vocab_size) throw Error("prefix token out of range");
  }
  const std::span<const int> ks = cfg.nucleus_ks;
  Rng rng(cfg.seed);

  auto sampled = [&](auto step_fn) {
    return run_loop(model, prefix, cfg.max_new_tokens, ks,
                    [&](const ProbVector& raw, Logits, std::span<const TokenId>, std::size_t) {
                      return step_fn(raw);
                    });
  };

  return std::visit(
      Overloaded{
          [&](const strategy::Greedy&) {
            return sampled([](const ProbVector& p) {
              const TokenId t = step_greedy(p);
              return Draw{t, p[t]};
            });
          },
          [&](const strategy::Beam& b) {
            return beam_search(model, prefix, b.width, cfg.max_new_tokens, ks);
          },
          [&](const strategy::TopK& s) {
            return sampled([&](const ProbVector& p) { return step_topk(p, s.k, rng); });
          },
          [&](const strategy::TopP& s) {
            return sampled([&](const ProbVector& p) { return step_topp(p, s.p, rng); });
          },
          [&](const strategy::Typical& s) {
            return sampled([&](const ProbVector& p) { return step_typical(p, s.tau, rng); });
          },
          [&](const strategy::Eta& s) {
            return sampled([&](const ProbVector& p) { return step_eta(p, s.epsilon, rng); });
          },
          [&](const strategy::Mirostat& s) {
            double mu = s.initial_mu.value_or(2.0 * s.tau);
            return sampled([&](const ProbVector& p) {
              const MirostatStep r = step_mirostat(p, mu, s.tau, s.learning_rate, rng);
              mu = r.mu;
              return r.draw;
            });
          },
          [&](const strategy::NearGreedy& s) {
            return run_loop(model, prefix, cfg.max_new_tokens, ks,
                            [&](const ProbVector&, Logits logits,
                                std::span<const TokenId> context, std::size_t) {
                              apply_repetition_penalty(logits, context, s.alpha,
                                                       Window::unbounded(),
                                                       PenaltyMode::SignAware);
                              const ProbVector p = softmax(logits);
                              const TokenId t = argmax_token(p.values());
                              return Draw{t, p[t]};
                            });
          },
          [&](const strategy::Penalty& s) {
            return penalty_decode(model, prefix, s.config, cfg.max_new_tokens, ks);
          },
      },
      cfg.strategy);
}

}  // namespace pendec
