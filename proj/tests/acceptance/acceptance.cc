// Acceptance gate: one PASS/FAIL line per criterion, pinned tolerances.
// Exit status is nonzero when any criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <iostream>
#include <random>
#include <set>
#include <string>

#include <fmt/format.h>

#include "pendec/decoders.h"
#include "pendec/harness.h"
#include "pendec/log.h"
#include "pendec/metrics.h"
#include "pendec/penalty.h"

using namespace pendec;
namespace fs = std::filesystem;

namespace {

const fs::path kData = PENDEC_DATA_DIR;

struct Outcome {
  bool pass = false;
  std::string detail;
};

int failures = 0;

void criterion(const std::string& name, double budget_s, const std::function<Outcome()>& body) {
  const auto start = std::chrono::steady_clock::now();
  Outcome o;
  try {
    o = body();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  const bool in_time = secs <= budget_s;
  const bool pass = o.pass && in_time;
  if (!pass) ++failures;
  std::cout << fmt::format("[{}] {} ({:.2f}s, budget {:.0f}s){}{}\n", pass ? "PASS" : "FAIL", name, secs,
                           budget_s, o.detail.empty() ? "" : ": ", o.detail)
            << (in_time ? "" : "       over time budget\n");
  std::cout.flush();
}

void info(const std::string& line) { std::cout << "[INFO] " << line << '\n'; }

DecoderConfig make(Strategy s, std::size_t max_new, std::uint64_t seed = 0) {
  DecoderConfig c;
  c.strategy = std::move(s);
  c.max_new_tokens = max_new;
  c.seed = seed;
  return c;
}

TableLM three_token_table() {
  TableLM::Table t;
  t[{}] = {0.5, 0.3, 0.2};
  t[{0}] = {0.45, 0.45, 0.1};
  t[{1}] = {0.6, 0.3, 0.1};
  t[{0, 0}] = {0.2, 0.5, 0.3};
  t[{0, 1}] = {0.7, 0.2, 0.1};
  t[{1, 0}] = {0.4, 0.1, 0.5};
  return TableLM(3, 2, 2, t);
}

std::shared_ptr<const LanguageModel> synthetic_model() {
  static const auto lm = load_model_source(load_spec(kData / "eval_spec.json").model);
  return lm;
}

std::vector<TokenSequence> synthetic_prefixes(std::size_t count, std::size_t len) {
  const auto lm = synthetic_model();
  std::vector<TokenSequence> out;
  for (const auto& e : ingest(kData / "synthetic_eval.jsonl").entries) {
    TokenSequence t = lm->tokenizer().encode(e.text);
    if (t.size() < len) continue;
    t.resize(len);
    out.push_back(std::move(t));
    if (out.size() == count) break;
  }
  return out;
}

Outcome greedy_ratio_exact() {
  // Every bundled corpus: a model trained on it, greedy over its entries.
  std::size_t checked = 0;
  for (const char* name : {"sample_text.jsonl", "synthetic_eval.jsonl"}) {
    std::vector<std::string> texts;
    for (const auto& e : ingest(kData / name).entries) texts.push_back(e.text);
    const NGramLM lm = train_ngram(texts, 3, 0.1, TokenizerKind::Whitespace);
    for (const auto& text : texts) {
      TokenSequence p = lm.tokenizer().encode(text);
      p.resize(std::min<std::size_t>(p.size(), 8));
      const auto r = generate(lm, p, make(strategy::Greedy{}, 64));
      if (greedy_ratio(r) != 1.0) return {false, fmt::format("ratio {} on {}", greedy_ratio(r), name)};
      ++checked;
    }
  }
  return {true, fmt::format("{} generations, all exactly 1.0", checked)};
}

Outcome equivalence_suite() {
  const auto lm = synthetic_model();
  std::size_t compared = 0;
  for (const auto& prefix : synthetic_prefixes(10, 16)) {
    const auto greedy = generate(*lm, prefix, make(strategy::Greedy{}, 64)).generated;

    PenaltyConfig w0;
    w0.window = Window::of(0);
    w0.length_penalty = false;
    if (generate(*lm, prefix, make(strategy::Penalty{w0}, 64)).generated != greedy) {
      return {false, "penalty(w=0, no length) differs from greedy"};
    }
    PenaltyConfig unb;
    unb.window = Window::unbounded();
    unb.length_penalty = false;
    if (generate(*lm, prefix, make(strategy::Penalty{unb}, 64)).generated !=
        generate(*lm, prefix, make(strategy::NearGreedy{unb.alpha}, 64)).generated) {
      return {false, "penalty(w=unbounded, no length) differs from near-greedy"};
    }
    if (generate(*lm, prefix, make(strategy::Beam{1}, 64)).generated != greedy) {
      return {false, "beam(1) differs from greedy"};
    }
    for (std::uint64_t seed = 0; seed < 25; ++seed) {
      if (generate(*lm, prefix, make(strategy::TopK{1}, 64, seed)).generated != greedy) {
        return {false, fmt::format("top-k(1) seed {} differs from greedy", seed)};
      }
    }
    compared += 28;
  }
  return {true, fmt::format("{} token-exact comparisons", compared)};
}

Outcome penalty_oracle() {
  const TableLM lm = three_token_table();
  const double alpha = 1.5;
  const std::size_t window = 2;
  const std::size_t lt = 4;
  PenaltyConfig cfg;
  cfg.alpha = alpha;
  cfg.window = Window::of(window);
  cfg.target_length = lt;
  const auto r = penalty_decode(lm, TokenSequence{}, cfg, 4);

  // Straight-line restatement of the algorithm.
  TokenSequence ctx;
  double worst = 0.0;
  for (std::size_t step = 0; step < 4; ++step) {
    const auto raw = lm.next_logits(ctx);
    double v[3] = {raw[0], raw[1], raw[2]};
    v[2] = alpha * v[2] * static_cast<double>(lt - step);
    bool seen[3] = {false, false, false};
    const std::size_t from = ctx.size() > window ? ctx.size() - window : 0;
    for (std::size_t i = from; i < ctx.size(); ++i) seen[ctx[i]] = true;
    for (int i = 0; i < 3; ++i) {
      if (seen[i]) v[i] = v[i] > 0 ? v[i] / alpha : v[i] * alpha;
    }
    const double z = std::exp(v[0]) + std::exp(v[1]) + std::exp(v[2]);
    int best = 0;
    for (int i = 1; i < 3; ++i) {
      if (v[i] > v[best]) best = i;
    }
    if (step >= r.generated.size() || r.generated[step] != static_cast<TokenId>(best)) {
      return {false, fmt::format("token mismatch at step {}", step + 1)};
    }
    worst = std::max(worst, std::abs(r.traces[step].chosen_prob_final - std::exp(v[best]) / z));
    ctx.push_back(static_cast<TokenId>(best));
    if (best == 2) break;
  }
  if (ctx.size() != r.generated.size()) return {false, "length mismatch"};
  return {worst <= 1e-9, fmt::format("{} steps, max |dp| = {:.3g} (tol 1e-9)", ctx.size(), worst)};
}

Outcome beam_oracle() {
  const TableLM lm = three_token_table();
  struct Hyp {
    TokenSequence t;
    double s;
  };
  std::vector<Hyp> done;
  std::vector<Hyp> frontier = {{{}, 0.0}};
  for (int depth = 0; depth < 4; ++depth) {
    std::vector<Hyp> next;
    for (const auto& h : frontier) {
      const auto p = softmax(lm.next_logits(h.t));
      for (TokenId tok = 0; tok < 3; ++tok) {
        Hyp n{h.t, h.s + std::log(p[tok])};
        n.t.push_back(tok);
        (tok == 2 || depth == 3 ? done : next).push_back(std::move(n));
      }
    }
    frontier = std::move(next);
  }
  const auto best = *std::min_element(done.begin(), done.end(), [](const Hyp& a, const Hyp& b) {
    return a.s != b.s ? a.s > b.s : a.t < b.t;
  });
  const auto r = beam_search(lm, TokenSequence{}, 3, 4);
  return {r.generated == best.t, fmt::format("{} complete sequences enumerated", done.size())};
}

Outcome truncation_oracles() {
  const auto s1 = topp_support(ProbVector::from_values({0.5, 0.3, 0.15, 0.05}), 0.9);
  const auto s2 = typical_support(ProbVector::from_values({0.7, 0.2, 0.1}), 0.5);
  const auto s3 = eta_support(ProbVector::from_values({0.25, 0.25, 0.25, 0.25}), 0.0006);
  const bool ok = s1 == std::vector<TokenId>{0, 1, 2} && s2 == std::vector<TokenId>{0} &&
                  s3 == std::vector<TokenId>{0, 1, 2, 3};
  return {ok, fmt::format("top-p {} / typical {} / eta {} tokens", s1.size(), s2.size(), s3.size())};
}

Outcome metric_traces() {
  const double a = sr_ngram(TokenSequence{0, 1, 0}, std::vector<double>{0.4, 0.3, 0.6}, 1);
  const double b = sr_nucleus(std::vector<double>{0.5, 0.9, 0.1});
  const double c = diversity(TokenSequence{0, 0, 0, 0});
  const bool ok = std::abs(a - 1.0 / 3.0) < 1e-12 && std::abs(b - 1.0 / 3.0) < 1e-12 &&
                  std::abs(c - 0.16667) <= 1e-4;
  return {ok, fmt::format("sr_ngram {:.6f}, sr_nucleus {:.6f}, diversity {:.6f}", a, b, c)};
}

Outcome sr_brute_force() {
  std::mt19937_64 gen(2718);
  std::uniform_int_distribution<int> len_dist(0, 64);
  std::uniform_int_distribution<TokenId> tok(0, 4);
  std::uniform_int_distribution<int> grid(1, 9);
  for (int trial = 0; trial < 200; ++trial) {
    TokenSequence t(len_dist(gen));
    std::vector<double> p(t.size());
    for (auto& x : t) x = tok(gen);
    for (auto& x : p) x = grid(gen) / 10.0;
    for (int n = 1; n <= 4; ++n) {
      // Quadratic scan over every stored occurrence.
      const int len = static_cast<int>(t.size());
      int count = 0;
      for (int u = 0; u + n <= len; ++u) {
        for (int v = u - 1; v >= 0; --v) {
          if (!std::equal(t.begin() + u, t.begin() + u + n, t.begin() + v)) continue;
          double su = 0.0;
          double sv = 0.0;
          for (int i = 0; i < n; ++i) {
            su += p[u + i];
            sv += p[v + i];
          }
          count += su > sv;
          break;
        }
      }
      const double expect = len < n ? 0.0 : static_cast<double>(count) / (len - n + 1);
      if (sr_ngram(t, p, n) != expect) return {false, fmt::format("trial {} n {}", trial, n)};
    }
  }
  return {true, "200 sequences x n=1..4, exact"};
}

Outcome table1_direction() {
  ExperimentSpec spec = load_spec(kData / "eval_spec.json");
  DecoderConfig greedy;
  DecoderConfig pen;
  PenaltyConfig pc;
  pc.alpha = 1.5;
  pc.window = Window::of(100);
  pen.strategy = strategy::Penalty{pc};
  DecoderConfig topp;
  topp.strategy = strategy::TopP{0.95};
  const std::vector<DecoderConfig> decoders = {greedy, pen, topp};

  const Workbench bench = prepare(spec);
  const auto t = run_experiment(bench, spec, decoders, SplitKind::Test).table;
  const double g = t.rows[0].sr.sr_n.at(1);
  const double p = t.rows[1].sr.sr_n.at(1);
  const double s = t.rows[2].sr.sr_n.at(1);

  // Same comparison with a recency cache in the model, which lets repeated
  // tokens gain probability the way a neural LM does.
  Workbench cached = bench;
  TrainSpec ts = std::get<TrainSpec>(spec.model);
  ts.cache_lambda = 0.3;
  cached.model = load_model_source(ts);
  const auto tc = run_experiment(cached, spec, decoders, SplitKind::Test).table;
  info(fmt::format("cache LM (lambda 0.3): SR_1 greedy {:.4f}, penalty {:.4f}, top-p {:.4f}",
                   tc.rows[0].sr.sr_n.at(1), tc.rows[1].sr.sr_n.at(1), tc.rows[2].sr.sr_n.at(1)));

  return {g >= p && g >= s, fmt::format("n-gram LM: SR_1 greedy {:.4f}, penalty {:.4f}, top-p {:.4f}", g, p, s)};
}

Outcome mirostat_tracking() {
  std::vector<double> w(50);
  double z = 0.0;
  for (int i = 0; i < 50; ++i) z += (w[i] = std::pow(i + 1.0, -1.1));
  for (auto& x : w) x /= z;
  const auto p = ProbVector::from_values(w);
  const double tau = 3.0;
  double mean = 0.0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Rng rng(seed);
    double mu = 2 * tau;
    double total = 0.0;
    for (int step = 0; step < 2000; ++step) {
      const auto r = step_mirostat(p, mu, tau, 0.1, rng);
      total += -std::log2(p[r.draw.token]);
      mu = r.mu;
    }
    mean += total / 2000.0 / 10.0;
  }
  return {std::abs(mean - tau) <= 0.25, fmt::format("mean surprise {:.4f} bits (target 3 +- 0.25)", mean)};
}

Outcome determinism() {
  const ExperimentSpec spec = load_spec(kData / "eval_spec.json");
  const auto a = run_experiment(spec);
  const auto b = run_experiment(spec);
  const bool csv = to_csv(a.table) == to_csv(b.table);
  const bool js = to_json(a.table).dump(2) == to_json(b.table).dump(2);
  for (const auto& row : a.table.rows) {
    if (row.method == "greedy" && row.quality.greedy_ratio != 1.0) {
      return {false, "greedy row ratio is not 1.0"};
    }
  }
  return {csv && js, fmt::format("{} rows x {} records, csv {}, json {}", a.table.rows.size(),
                                 a.table.rows.front().records, csv ? "identical" : "differs",
                                 js ? "identical" : "differs")};
}

Outcome penalty_property() {
  // Checked exactly as stated: every penalized token, every case. With two
  // or more distinct tokens in the window the claim can fail, so the
  // restricted forms that do hold are reported alongside.
  std::mt19937_64 gen(99991);
  std::uniform_real_distribution<double> logit(-10.0, 10.0);
  std::uniform_real_distribution<double> alpha_dist(1.0, 3.0);
  std::uniform_int_distribution<int> vocab(2, 16);
  std::uniform_int_distribution<int> len(0, 24);
  std::uniform_int_distribution<int> wdist(-1, 30);
  int violations = 0;
  int single_violations = 0;
  int single_cases = 0;
  int mass_violations = 0;
  std::string first;
  for (int trial = 0; trial < 10000; ++trial) {
    const int v = vocab(gen);
    Logits l(v);
    for (auto& x : l) x = logit(gen);
    TokenSequence ctx(len(gen));
    std::uniform_int_distribution<TokenId> tok(0, v - 1);
    for (auto& t : ctx) t = tok(gen);
    double alpha = alpha_dist(gen);
    if (alpha <= 1.0) alpha = std::nextafter(1.0, 2.0);
    const int wr = wdist(gen);
    const Window w = wr < 0 ? Window::unbounded() : Window::of(wr);
    const auto before = softmax(l);
    const auto after = softmax(repetition_penalty(l, ctx, alpha, w));
    const std::size_t n = w.span_for(ctx.size());
    const std::set<TokenId> hit(ctx.end() - n, ctx.end());
    bool bad = false;
    double mb = 0.0;
    double ma = 0.0;
    for (TokenId t : hit) {
      bad = bad || after[t] > before[t] + 1e-12;
      mb += before[t];
      ma += after[t];
    }
    if (bad && first.empty()) first = fmt::format("first at trial {} with {} penalized tokens", trial, hit.size());
    violations += bad;
    mass_violations += ma > mb + 1e-12;
    if (hit.size() == 1) {
      ++single_cases;
      single_violations += bad;
    }
  }
  info(fmt::format("single-token windows: {} violations in {} cases; penalized-set mass: {} violations "
                   "in 10000 cases",
                   single_violations, single_cases, mass_violations));
  return {violations == 0,
          violations == 0 ? "10000 cases" : fmt::format("{} of 10000 cases violate; {}", violations, first)};
}

}  // namespace

int main() {
  logger()->set_level(spdlog::level::err);

  std::cout << "[INFO] Published large-model numbers (SR and quality tables) are not "
               "reproducible at desk scale; the oracle and property checks below stand in for them.\n";
  criterion("large-model numbers stated as not reproducible", 1, [] { return Outcome{true, "stated above"}; });
  criterion("greedy_ratio == 1.0 exactly on every bundled corpus", 5, greedy_ratio_exact);
  criterion("equivalence suite (w=0, unbounded, beam 1, top-k 1)", 5, equivalence_suite);
  criterion("penalty decoding vs straight-line oracle, 4 steps, tol 1e-9", 1, penalty_oracle);
  criterion("beam(3) vs exhaustive enumeration, V=3, len<=4", 1, beam_oracle);
  criterion("truncation oracles (top-p, typical, eta)", 1, truncation_oracles);
  criterion("metric hand traces", 1, metric_traces);
  criterion("sr_ngram vs quadratic brute force, 200 sequences", 10, sr_brute_force);
  criterion("SR_1 direction: greedy >= penalty(1.5, w=100) and greedy >= top-p(0.95)", 60, table1_direction);
  criterion("mirostat surprise tracking on Zipf(1.1, V=50)", 10, mirostat_tracking);
  criterion("bundled eval spec byte-identical across two runs", 60, determinism);
  criterion("sign-aware penalty never raises penalized probability, 10k cases", 5, penalty_property);

  std::cout << fmt::format("{} criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
