#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "pendec/decoders.h"
#include "pendec/metrics.h"

using namespace pendec;

namespace {

// Quadratic reference: keep every occurrence, look back for the latest match.
double brute_sr(const TokenSequence& toks, const std::vector<double>& probs, int n) {
  const int len = static_cast<int>(toks.size());
  if (len < n) return 0.0;
  int count = 0;
  for (int u = 0; u + n <= len; ++u) {
    for (int v = u - 1; v >= 0; --v) {
      bool same = true;
      for (int i = 0; i < n; ++i) same = same && toks[u + i] == toks[v + i];
      if (!same) continue;
      double su = 0.0;
      double sv = 0.0;
      for (int i = 0; i < n; ++i) {
        su += probs[u + i];
        sv += probs[v + i];
      }
      count += su > sv;
      break;
    }
  }
  return static_cast<double>(count) / (len - n + 1);
}

GenerationRecord record_with_ns(const std::vector<double>& ns, int k) {
  GenerationRecord r;
  for (double m : ns) {
    StepTrace t;
    t.topk_mass = {{k, m}};
    r.generated.push_back(0);
    r.traces.push_back(t);
  }
  return r;
}

GenerationRecord record_with_greedy(const std::vector<bool>& flags) {
  GenerationRecord r;
  for (bool g : flags) {
    StepTrace t;
    t.is_greedy = g;
    r.generated.push_back(0);
    r.traces.push_back(t);
  }
  return r;
}

}  // namespace

TEST(SrNgram, HandTraces) {
  const TokenSequence abA = {0, 1, 0};
  EXPECT_NEAR(sr_ngram(abA, std::vector<double>{0.4, 0.3, 0.6}, 1), 1.0 / 3.0, 1e-15);
  EXPECT_EQ(sr_ngram(abA, std::vector<double>{0.4, 0.3, 0.4}, 1), 0.0);
  EXPECT_EQ(sr_ngram(TokenSequence{0, 1, 2, 3}, std::vector<double>{0.1, 0.2, 0.3, 0.4}, 2), 0.0);
  EXPECT_EQ(sr_ngram(TokenSequence{0}, std::vector<double>{0.5}, 2), 0.0);
}

TEST(SrNgram, ComparesAgainstMostRecentOccurrence) {
  // a at 0 (0.9), a at 2 (0.2), a at 4 (0.5): the last beats position 2 only.
  const TokenSequence t = {0, 1, 0, 1, 0};
  const std::vector<double> p = {0.9, 0.5, 0.2, 0.5, 0.5};
  EXPECT_NEAR(sr_ngram(t, p, 1), 1.0 / 5.0, 1e-15);
}

TEST(SrNgram, MatchesBruteForceReference) {
  std::mt19937_64 gen(404);
  std::uniform_int_distribution<int> len_dist(0, 64);
  std::uniform_int_distribution<TokenId> tok(0, 4);
  std::uniform_int_distribution<int> grid(1, 9);  // coarse grid forces ties
  for (int trial = 0; trial < 200; ++trial) {
    TokenSequence t(len_dist(gen));
    std::vector<double> p(t.size());
    for (auto& x : t) x = tok(gen);
    for (auto& x : p) x = grid(gen) / 10.0;
    for (int n = 1; n <= 4; ++n) {
      const double got = sr_ngram(t, p, n);
      EXPECT_EQ(got, brute_sr(t, p, n)) << "trial " << trial << " n " << n;
      EXPECT_GE(got, 0.0);
      EXPECT_LE(got, 1.0);
    }
  }
}

TEST(SrNgram, RecordOverloadUsesRawProbabilities) {
  GenerationRecord r;
  r.generated = {0, 1, 0};
  for (double raw : {0.4, 0.3, 0.6}) {
    StepTrace t;
    t.chosen_prob_raw = raw;
    t.chosen_prob_final = 1.0 - raw;  // would flip the answer if used
    r.traces.push_back(t);
  }
  EXPECT_NEAR(sr_ngram(r, 1), 1.0 / 3.0, 1e-15);
}

TEST(SrNucleus, HandTraces) {
  EXPECT_NEAR(sr_nucleus(std::vector<double>{0.5, 0.9, 0.1}), 1.0 / 3.0, 1e-15);
  EXPECT_EQ(sr_nucleus(std::vector<double>{0.3, 0.3, 0.3, 0.3}), 0.0);
  EXPECT_NEAR(sr_nucleus(std::vector<double>{0.1, 0.2, 0.3, 0.4, 0.5}), 4.0 / 5.0, 1e-15);
  EXPECT_EQ(sr_nucleus(std::vector<double>{0.7}), 0.0);
}

TEST(SrNucleus, ConstantWithRoundoffIsNotReinforced) {
  // 0.1 accumulates round-off in running sums; none of it may count.
  EXPECT_EQ(sr_nucleus(std::vector<double>(50, 0.1)), 0.0);
}

TEST(SrNucleus, RecordOverload) {
  EXPECT_NEAR(sr_nucleus(record_with_ns({0.5, 0.9, 0.1}, 5), 5), 1.0 / 3.0, 1e-15);
  EXPECT_THROW(sr_nucleus(record_with_ns({0.5, 0.9}, 5), 10), Error);
}

TEST(SrNucleus, MatchesRunningMeanDefinition) {
  std::mt19937_64 gen(8);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 500; ++trial) {
    std::vector<double> ns(1 + trial % 40);
    for (auto& x : ns) x = u(gen);
    int count = 0;
    long double sum = ns[0];
    for (std::size_t t = 1; t < ns.size(); ++t) {
      const long double prev = sum / t;
      sum += ns[t];
      count += sum / (t + 1) > prev;
    }
    const double got = sr_nucleus(ns);
    EXPECT_NEAR(got, static_cast<double>(count) / ns.size(), 1e-12);
    EXPECT_GE(got, 0.0);
    EXPECT_LE(got, 1.0);
  }
}

TEST(RepN, Examples) {
  EXPECT_NEAR(rep_n(TokenSequence{0, 0, 0, 0}, 2), 66.667, 1e-3);
  EXPECT_NEAR(rep_n(TokenSequence{0, 1, 0, 1}, 2), 33.333, 1e-3);
  EXPECT_EQ(rep_n(TokenSequence{0, 1, 2, 3}, 2), 0.0);
  EXPECT_EQ(rep_n(TokenSequence{0}, 2), 0.0);
}

TEST(Diversity, Examples) {
  EXPECT_NEAR(diversity(TokenSequence{0, 0, 0, 0}), 0.16667, 1e-4);
  EXPECT_EQ(diversity(TokenSequence{0, 1, 2, 3, 4}), 1.0);
  // A repeated token: (1/5)(1/4)(1/3). rep_n stays below 100 for any text.
  EXPECT_NEAR(diversity(TokenSequence{0, 0, 0, 0, 0, 0}), 1.0 / 60.0, 1e-12);
  EXPECT_THROW(diversity(TokenSequence{0, 1, 2}), Error);
}

TEST(Diversity, DuplicationNeverRaisesIt) {
  // Every sequence of length 4..6 over three symbols.
  for (int len = 4; len <= 6; ++len) {
    int total = 1;
    for (int i = 0; i < len; ++i) total *= 3;
    for (int code = 0; code < total; ++code) {
      TokenSequence t(len);
      int c = code;
      for (auto& x : t) {
        x = c % 3;
        c /= 3;
      }
      TokenSequence twice = t;
      twice.insert(twice.end(), t.begin(), t.end());
      const double d = diversity(t);
      EXPECT_GE(d, 0.0);
      EXPECT_LE(d, 1.0);
      EXPECT_LE(diversity(twice), d + 1e-15);
      const double prod = (1 - rep_n(t, 2) / 100) * (1 - rep_n(t, 3) / 100) * (1 - rep_n(t, 4) / 100);
      EXPECT_NEAR(d, prod, 1e-9);
    }
  }
}

TEST(Coherence, Examples) {
  TableLM::Table t;
  t[{}] = {std::exp(-1.0), 1.0 - std::exp(-1.0)};
  const TableLM one(2, 1, 0, t);
  EXPECT_NEAR(coherence(one, TokenSequence{}, TokenSequence{0}), -1.0, 1e-12);

  TableLM::Table u;
  u[{}] = {0.25, 0.25, 0.25, 0.25};
  const TableLM uniform(4, 3, 0, u);
  EXPECT_NEAR(coherence(uniform, TokenSequence{1, 2}, TokenSequence{0, 3, 3}), -std::log(4.0), 1e-12);

  TableLM::Table s;
  s[{}] = {0.5, 0.3, 0.2};
  s[{0}] = {0.1, 0.7, 0.2};
  s[{1}] = {0.6, 0.2, 0.2};
  const TableLM table(3, 2, 1, s);
  // Prefix [0]; continuation [1, 0]: log 0.7 + log 0.6.
  EXPECT_NEAR(coherence(table, TokenSequence{0}, TokenSequence{1, 0}),
              (std::log(0.7) + std::log(0.6)) / 2.0, 1e-12);
}

TEST(Coherence, ZeroProbabilityGivesMinusInfinity) {
  TableLM::Table t;
  t[{}] = {1.0, 0.0};
  const TableLM lm(2, 1, 0, t);
  EXPECT_EQ(coherence(lm, TokenSequence{}, TokenSequence{1}), -std::numeric_limits<double>::infinity());
}

TEST(GreedyRatio, Examples) {
  EXPECT_EQ(greedy_ratio(record_with_greedy({false, false})), 0.0);
  EXPECT_NEAR(greedy_ratio(record_with_greedy({true, false, true})), 0.6667, 1e-4);
  EXPECT_THROW(greedy_ratio(GenerationRecord{}), Error);
}

TEST(GreedyRatio, GreedyDecodingIsExactlyOne) {
  TableLM::Table t;
  t[{}] = {0.4, 0.35, 0.25};
  t[{0}] = {0.3, 0.5, 0.2};
  const TableLM lm(3, 2, 1, t);
  DecoderConfig cfg;
  cfg.max_new_tokens = 30;
  EXPECT_EQ(greedy_ratio(generate(lm, TokenSequence{}, cfg)), 1.0);
}

TEST(GenLength, Examples) {
  GenerationRecord a;
  a.generated.assign(7, 0);
  EXPECT_EQ(gen_length(std::vector<GenerationRecord>{a}), 7.0);
  GenerationRecord b;
  b.generated.assign(4, 0);
  GenerationRecord c;
  c.generated.assign(6, 0);
  EXPECT_EQ(gen_length(std::vector<GenerationRecord>{b, c}), 5.0);
  EXPECT_THROW(gen_length(std::vector<GenerationRecord>{}), Error);
}

TEST(SelfReinforcement, MacroAveragesRecords) {
  GenerationRecord a = record_with_ns({0.5, 0.9, 0.1}, 1);  // 1/3
  GenerationRecord b = record_with_ns({0.2, 0.2}, 1);       // 0
  a.generated = {0, 1, 0};
  for (std::size_t i = 0; i < 3; ++i) a.traces[i].chosen_prob_raw = std::vector<double>{0.4, 0.3, 0.6}[i];
  b.generated = {2, 2};
  b.traces[0].chosen_prob_raw = 0.5;
  b.traces[1].chosen_prob_raw = 0.5;
  const std::vector<GenerationRecord> recs = {a, b};
  const std::vector<int> ns = {1};
  const std::vector<int> ks = {1};
  const auto r = self_reinforcement(recs, ns, ks);
  EXPECT_NEAR(r.sr_n.at(1), (1.0 / 3.0 + 0.0) / 2.0, 1e-15);
  EXPECT_NEAR(r.sr_topk.at(1), (1.0 / 3.0 + 0.0) / 2.0, 1e-15);
  ASSERT_EQ(r.ns_curve.at(1).size(), 3u);
  EXPECT_NEAR(r.ns_curve.at(1)[0], 0.35, 1e-15);
  EXPECT_NEAR(r.ns_curve.at(1)[2], 0.1, 1e-15);
}

TEST(MetricProperty, RatiosStayInRangeOnDecodedText) {
  const auto lm = std::make_shared<const NGramLM>(train_ngram(
      std::vector<std::string>{"a b c a b c d a b", "c d a b c a a b"}, 2, 0.2, TokenizerKind::Whitespace));
  for (std::uint64_t seed = 0; seed < 40; ++seed) {
    DecoderConfig cfg;
    cfg.strategy = strategy::TopP{0.9};
    cfg.max_new_tokens = 40;
    cfg.seed = seed;
    const auto r = generate(*lm, TokenSequence{}, cfg);
    for (int n = 1; n <= 4; ++n) {
      const double s = sr_ngram(r, n);
      EXPECT_GE(s, 0.0);
      EXPECT_LE(s, 1.0);
    }
    for (int k : {1, 5, 10}) {
      const double s = sr_nucleus(r, k);
      EXPECT_GE(s, 0.0);
      EXPECT_LE(s, 1.0);
    }
    const double g = greedy_ratio(r);
    EXPECT_GE(g, 0.0);
    EXPECT_LE(g, 1.0);
  }
}
