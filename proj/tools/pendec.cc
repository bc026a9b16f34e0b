// pendec: train reference models, decode, and run evaluation experiments.

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <fmt/ranges.h>
#include <nlohmann/json.hpp>

#include "pendec/decoders.h"
#include "pendec/harness.h"
#include "pendec/log.h"
#include "pendec/model_io.h"
#include "pendec/models.h"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace pendec;

namespace {

constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Strategy flags

struct StrategyFlags {
  std::string strategy;
  std::optional<double> alpha;
  std::optional<std::string> window;
  std::optional<std::size_t> target_length;
  bool no_length_penalty = false;
  bool literal = false;
  std::optional<int> top_k;
  std::optional<double> top_p;
  std::optional<double> typical_tau;
  std::optional<double> eta;
  std::optional<double> mirostat_tau;
  std::optional<double> mirostat_lr;
  std::optional<int> beam_width;
  std::uint64_t seed = 0;
  std::size_t max_new_tokens = 128;

  void attach(CLI::App& app) {
    app.add_option("--strategy", strategy,
                   "greedy, beam, top_k, top_p, typical, eta, mirostat, near_greedy or penalty. "
                   "Inferred from the hyperparameter flags when omitted; greedy if none.")
        ->check(CLI::IsMember({"greedy", "beam", "top_k", "top_p", "typical", "eta", "mirostat",
                               "near_greedy", "penalty"}));
    app.add_option("--alpha", alpha, "Repetition penalty (penalty, near_greedy); > 1");
    app.add_option("--window", window, "Repetition window in tokens, or 'unbounded' (penalty)");
    app.add_option("--target-length", target_length,
                   "Length-penalty target L_t (penalty); defaults to --max-new-tokens");
    app.add_flag("--no-length-penalty", no_length_penalty, "Disable the eos length penalty");
    app.add_flag("--literal-eq3", literal,
                 "Divide every penalized logit by alpha regardless of sign");
    app.add_option("--top-k", top_k, "Top-k sampling");
    app.add_option("--top-p", top_p, "Nucleus sampling threshold");
    app.add_option("--typical-tau", typical_tau, "Locally typical sampling mass");
    app.add_option("--eta", eta, "Eta-sampling epsilon");
    app.add_option("--mirostat-tau", mirostat_tau, "Mirostat target surprise in bits");
    app.add_option("--mirostat-lr", mirostat_lr, "Mirostat learning rate");
    app.add_option("--beam-width", beam_width, "Beam search width");
    app.add_option("--seed", seed,
                   "Seed for stochastic strategies; the same seed reproduces the same output");
    app.add_option("--max-new-tokens", max_new_tokens, "Generation cap")
        ->check(CLI::PositiveNumber);
  }

  DecoderConfig resolve() const {
    std::set<std::string> implied;
    const bool penalty_only = window || target_length || no_length_penalty || literal;
    if (penalty_only) implied.insert("penalty");
    if (top_k) implied.insert("top_k");
    if (top_p) implied.insert("top_p");
    if (typical_tau) implied.insert("typical");
    if (eta) implied.insert("eta");
    if (mirostat_tau || mirostat_lr) implied.insert("mirostat");
    if (beam_width) implied.insert("beam");

    std::string chosen = strategy;
    if (chosen.empty()) {
      if (implied.size() > 1) {
        throw UsageError(fmt::format("conflicting strategy flags ({})",
                                     fmt::join(implied, ", ")));
      }
      if (!implied.empty()) {
        chosen = *implied.begin();
      } else {
        chosen = alpha ? "penalty" : "greedy";
      }
    } else {
      for (const auto& f : implied) {
        if (f != chosen) {
          throw UsageError(fmt::format("flags for '{}' conflict with --strategy {}", f, chosen));
        }
      }
    }
    if (alpha && chosen != "penalty" && chosen != "near_greedy") {
      throw UsageError("--alpha only applies to penalty and near_greedy");
    }

    DecoderConfig cfg;
    cfg.seed = seed;
    cfg.max_new_tokens = max_new_tokens;
    if (chosen == "greedy") {
      cfg.strategy = strategy::Greedy{};
    } else if (chosen == "beam") {
      cfg.strategy = strategy::Beam{beam_width.value_or(strategy::Beam{}.width)};
    } else if (chosen == "top_k") {
      cfg.strategy = strategy::TopK{top_k.value_or(strategy::TopK{}.k)};
    } else if (chosen == "top_p") {
      cfg.strategy = strategy::TopP{top_p.value_or(strategy::TopP{}.p)};
    } else if (chosen == "typical") {
      cfg.strategy = strategy::Typical{typical_tau.value_or(strategy::Typical{}.tau)};
    } else if (chosen == "eta") {
      cfg.strategy = strategy::Eta{eta.value_or(strategy::Eta{}.epsilon)};
    } else if (chosen == "mirostat") {
      strategy::Mirostat m;
      m.tau = mirostat_tau.value_or(m.tau);
      m.learning_rate = mirostat_lr.value_or(m.learning_rate);
      cfg.strategy = m;
    } else if (chosen == "near_greedy") {
      cfg.strategy = strategy::NearGreedy{alpha.value_or(strategy::NearGreedy{}.alpha)};
    } else {
      PenaltyConfig c;
      c.alpha = alpha.value_or(c.alpha);
      if (window) c.window = Window::parse(*window);
      c.target_length = target_length;
      c.length_penalty = !no_length_penalty;
      c.mode = literal ? PenaltyMode::Literal : PenaltyMode::SignAware;
      cfg.strategy = strategy::Penalty{c};
    }
    return cfg;
  }
};

// ---------------------------------------------------------------------------
// Experiment options shared by eval, sr, sweep and ablate

struct ExperimentFlags {
  std::string spec_path;
  std::string model;
  std::string corpus;
  std::vector<std::string> decoders;
  std::optional<std::size_t> prefix_tokens;
  std::optional<std::size_t> max_new_tokens;
  std::vector<std::uint64_t> seeds;
  std::optional<std::size_t> jobs;
  std::string out_dir;

  void attach(CLI::App& app, bool with_decoders) {
    app.add_option("--spec", spec_path, "Experiment spec JSON")->check(CLI::ExistingFile);
    app.add_option("--model", model, "Model file (instead of --spec)");
    app.add_option("--corpus", corpus, "Corpus JSONL with id/text records (instead of --spec)");
    if (with_decoders) {
      app.add_option("--decoder", decoders,
                     "Decoder as a strategy name or JSON object, e.g. "
                     "'{\"strategy\":\"penalty\",\"alpha\":1.5,\"window\":100}'; repeatable");
    }
    app.add_option("--prefix-tokens", prefix_tokens, "Prefix length in tokens")
        ->check(CLI::PositiveNumber);
    app.add_option("--max-new-tokens", max_new_tokens, "Generation cap")
        ->check(CLI::PositiveNumber);
    app.add_option("--seeds", seeds, "Seeds; every (seed, entry) pair is one generation");
    app.add_option("--jobs", jobs, "Worker threads (default: available cores)");
    app.add_option("--out-dir", out_dir,
                   "Output directory (default: $PENDEC_OUT_DIR, else ./pendec_out)");
  }

  ExperimentSpec build() const {
    ExperimentSpec spec;
    if (!spec_path.empty()) {
      if (!model.empty() || !corpus.empty()) {
        throw UsageError("--spec cannot be combined with --model/--corpus");
      }
      spec = load_spec(spec_path);
    } else {
      if (model.empty() || corpus.empty()) {
        throw UsageError("either --spec or both --model and --corpus are required");
      }
      spec.model = fs::path(model);
      spec.corpus = fs::path(corpus);
    }
    if (!decoders.empty()) {
      spec.decoders.clear();
      for (const auto& d : decoders) {
        json j = json::parse(d, nullptr, false);
        if (j.is_discarded() || j.is_string()) j = json{{"strategy", j.is_string() ? j : json(d)}};
        spec.decoders.push_back(decoder_from_json(j));
      }
    }
    if (prefix_tokens) spec.prefix_tokens = *prefix_tokens;
    if (max_new_tokens) spec.max_new_tokens = *max_new_tokens;
    if (!seeds.empty()) spec.seeds = seeds;
    if (jobs) spec.jobs = *jobs;
    spec.validate();
    return spec;
  }

  fs::path output_dir() const {
    fs::path dir;
    if (!out_dir.empty()) {
      dir = out_dir;
    } else if (const char* env = std::getenv("PENDEC_OUT_DIR"); env != nullptr && *env) {
      dir = env;
    } else {
      dir = "pendec_out";
    }
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw Error("cannot create output directory '" + dir.string() + "': " + ec.message());
    return dir;
  }
};

void write_manifest(const fs::path& dir, const std::string& name, const RunManifest& m) {
  write_text(dir / name, to_json(m).dump(2) + "\n");
}

void write_generations(const fs::path& path, const std::vector<GeneratedText>& gens) {
  std::string out;
  for (const auto& g : gens) {
    out += json{{"method", g.method}, {"seed", g.seed}, {"id", g.entry_id}, {"text", g.text}}
               .dump() +
           "\n";
  }
  write_text(path, out);
}

void print_manifest_counts(const RunManifest& m) {
  std::cerr << fmt::format("{} split: {} entries, {} processed, {} skipped, {} malformed lines\n",
                           m.split, m.ingested, m.processed, m.skipped.size(), m.malformed_lines);
}

// ---------------------------------------------------------------------------
// Subcommands

struct TrainFlags {
  std::string corpus;
  int order = 3;
  double smoothing_k = 0.1;
  std::string tokenizer = "whitespace";
  std::string out;
  std::optional<double> cache_lambda;
  std::size_t cache_window = 200;
};

int cmd_train(const TrainFlags& f) {
  const Corpus corpus = ingest(f.corpus);
  std::vector<std::string> texts;
  for (const auto& e : corpus.entries) texts.push_back(e.text);
  auto ngram = std::make_shared<const NGramLM>(
      train_ngram(texts, f.order, f.smoothing_k, parse_tokenizer_kind(f.tokenizer)));
  const auto tokens = ngram->counts()[0].at(TokenSequence{}).total;
  std::shared_ptr<const LanguageModel> model = ngram;
  if (f.cache_lambda) model = std::make_shared<const CacheLM>(ngram, *f.cache_lambda, f.cache_window);
  save_model(*model, f.out);
  std::cout << fmt::format("vocab size: {}\ntokens: {}\ndocuments: {}\nwrote {}\n",
                           model->info().vocab_size, tokens, corpus.entries.size(), f.out);
  return 0;
}

struct GenerateFlags {
  std::string model;
  std::optional<std::string> prompt;
  std::optional<std::string> prefix_file;
  bool trace = false;
  StrategyFlags strategy;
};

int cmd_generate(const GenerateFlags& f) {
  const DecoderConfig cfg = f.strategy.resolve();
  const auto model = load_model(f.model);
  std::string text;
  if (f.prefix_file) {
    std::ifstream in(*f.prefix_file);
    if (!in) throw Error("cannot read prefix file '" + *f.prefix_file + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    text = ss.str();
    while (!text.empty() && (text.back() == '\n' || text.back() == '\r')) text.pop_back();
  } else {
    text = f.prompt.value_or("");
  }
  const TokenSequence prefix = model->tokenizer().encode(text);
  const GenerationRecord record = generate(*model, prefix, cfg);
  const auto& names = model->info().token_names;

  if (f.trace) {
    for (std::size_t i = 0; i < record.traces.size(); ++i) {
      const auto& t = record.traces[i];
      json mass = json::object();
      for (const auto& [k, m] : t.topk_mass) mass[std::to_string(k)] = m;
      std::cout << json{{"step", i + 1},
                        {"chosen", t.chosen},
                        {"token", names[t.chosen]},
                        {"chosen_prob_raw", t.chosen_prob_raw},
                        {"chosen_prob_final", t.chosen_prob_final},
                        {"argmax_raw", t.argmax_raw},
                        {"is_greedy", t.is_greedy},
                        {"topk_mass", mass}}
                       .dump()
                << '\n';
    }
    std::cout << json{{"summary", true},
                      {"method", label(cfg.strategy)},
                      {"generated_tokens", record.generated.size()},
                      {"termination", to_string(record.termination)},
                      {"text", model->tokenizer().decode(record.generated)}}
                     .dump()
              << '\n';
  } else {
    std::cout << model->tokenizer().decode(record.generated) << '\n';
  }
  return 0;
}

int cmd_eval(const ExperimentFlags& f, const std::string& format) {
  const ExperimentSpec spec = f.build();
  if (spec.decoders.empty()) throw UsageError("no decoders given (spec 'decoders' or --decoder)");
  const fs::path dir = f.output_dir();
  const Workbench bench = prepare(spec);
  const ExperimentResult result = run_experiment(bench, spec, spec.decoders, SplitKind::Test);
  if (format == "csv" || format == "both") {
    emit_report(result.table, ReportFormat::Csv, dir / "results.csv");
  }
  if (format == "json" || format == "both") {
    emit_report(result.table, ReportFormat::Json, dir / "results.json");
  }
  write_manifest(dir, "manifest.json", result.manifest);
  write_generations(dir / "generations.jsonl", result.generations);
  print_manifest_counts(result.manifest);
  std::cout << summary_table(result.table);
  return 0;
}

int cmd_sr(const ExperimentFlags& f) {
  const ExperimentSpec spec = f.build();
  if (spec.decoders.empty()) throw UsageError("no decoders given (spec 'decoders' or --decoder)");
  const fs::path dir = f.output_dir();
  const Workbench bench = prepare(spec);
  const ExperimentResult result = run_experiment(bench, spec, spec.decoders, SplitKind::Test);

  std::string csv = "method,sr_1,sr_2,sr_3,sr_4";
  for (int k : result.table.metric_ks) csv += fmt::format(",sr_topk_{}", k);
  csv += '\n';
  json curves = json::array();
  for (const auto& row : result.table.rows) {
    std::string line = row.method.find(',') == std::string::npos ? row.method
                                                                 : "\"" + row.method + "\"";
    for (int n = 1; n <= 4; ++n) line += ',' + format_metric(row.sr.sr_n.at(n));
    for (int k : result.table.metric_ks) line += ',' + format_metric(row.sr.sr_topk.at(k));
    csv += line + '\n';
    json c = json::object();
    for (const auto& [k, values] : row.sr.ns_curve) c[std::to_string(k)] = values;
    curves.push_back({{"method", row.method}, {"ns_curve", c}});
  }
  write_text(dir / "sr.csv", csv);
  write_text(dir / "ns_curves.json", curves.dump(2) + "\n");
  write_manifest(dir, "manifest.json", result.manifest);
  print_manifest_counts(result.manifest);
  std::cout << csv;
  return 0;
}

int cmd_sweep(const ExperimentFlags& f, const std::string& grid_path, const std::string& metric) {
  const ExperimentSpec spec = f.build();
  const SelectionMetric selection = parse_selection_metric(metric);
  PenaltyConfig penalty_base;
  for (const auto& d : spec.decoders) {
    if (const auto* p = std::get_if<strategy::Penalty>(&d.strategy)) {
      penalty_base = p->config;
      break;
    }
  }
  std::vector<SweepGrid> grids;
  if (grid_path.empty()) {
    grids = default_grids(penalty_base);
  } else {
    std::ifstream in(grid_path);
    if (!in) throw Error("cannot read grid file '" + grid_path + "'");
    json j = json::parse(in, nullptr, false);
    if (j.is_discarded()) throw ConfigError("'" + grid_path + "' is not valid JSON");
    grids = grids_from_json(j, penalty_base);
  }
  const fs::path dir = f.output_dir();
  const Workbench bench = prepare(spec);
  const SweepResult result = sweep(bench, spec, grids, selection);

  emit_report(result.grid, ReportFormat::Csv, dir / "sweep_grid.csv");
  emit_report(result.grid, ReportFormat::Json, dir / "sweep_grid.json");
  ResultsTable best{result.grid.metric_ks, result.best};
  emit_report(best, ReportFormat::Csv, dir / "sweep_best.csv");
  write_manifest(dir, "manifest.json", result.manifest);
  print_manifest_counts(result.manifest);
  std::cout << fmt::format("{} grid points; best by {}:\n", result.grid.rows.size(), metric);
  std::cout << summary_table(best);
  return 0;
}

int cmd_ablate(const ExperimentFlags& f, const std::string& axis_name) {
  ExperimentSpec spec = f.build();
  const bool has_penalty = std::any_of(spec.decoders.begin(), spec.decoders.end(), [](const auto& d) {
    return std::holds_alternative<strategy::Penalty>(d.strategy);
  });
  // Without a penalty decoder the default configuration is ablated.
  if (!has_penalty) {
    DecoderConfig d;
    d.strategy = strategy::Penalty{};
    spec.decoders.push_back(d);
  }
  const AblationAxis axis = parse_ablation_axis(axis_name);
  const fs::path dir = f.output_dir();
  const Workbench bench = prepare(spec);
  const ExperimentResult result = ablate(bench, spec, axis);
  const std::string stem = "ablation_" + axis_name;
  emit_report(result.table, ReportFormat::Csv, dir / (stem + ".csv"));
  emit_report(result.table, ReportFormat::Json, dir / (stem + ".json"));
  write_manifest(dir, "manifest.json", result.manifest);
  print_manifest_counts(result.manifest);
  std::cout << summary_table(result.table);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Penalty decoding engine and evaluation harness"};
  app.require_subcommand(1);
  bool verbose = false;
  bool quiet = false;
  app.add_flag("-v,--verbose", verbose, "Log per-entry progress");
  app.add_flag("-q,--quiet", quiet, "Only log errors");

  TrainFlags train;
  auto* train_cmd = app.add_subcommand("train", "Train an add-k n-gram model on a corpus");
  train_cmd->add_option("--corpus", train.corpus, "Corpus JSONL")->required();
  train_cmd->add_option("-n,--order", train.order, "N-gram order")->check(CLI::PositiveNumber);
  train_cmd->add_option("-k,--smoothing-k", train.smoothing_k, "Add-k smoothing constant")
      ->check(CLI::PositiveNumber);
  train_cmd->add_option("--tokenizer", train.tokenizer, "whitespace or char")
      ->check(CLI::IsMember({"whitespace", "char"}));
  train_cmd->add_option("--cache-lambda", train.cache_lambda,
                        "Wrap the model in a recency cache with this weight");
  train_cmd->add_option("--cache-window", train.cache_window, "Recency cache size in tokens");
  train_cmd->add_option("-o,--out", train.out, "Model output path")->required();

  GenerateFlags gen;
  auto* gen_cmd = app.add_subcommand("generate", "Decode a continuation of a prompt");
  gen_cmd->add_option("--model", gen.model, "Model file")->required();
  auto* prompt_opt = gen_cmd->add_option("--prompt", gen.prompt, "Prompt text");
  auto* prefix_opt = gen_cmd->add_option("--prefix-file", gen.prefix_file, "File holding the prompt");
  prompt_opt->excludes(prefix_opt);
  gen_cmd->add_flag("--trace", gen.trace, "Print one JSON line per decoding step and a summary");
  gen.strategy.attach(*gen_cmd);

  ExperimentFlags eval_flags;
  std::string format = "both";
  auto* eval_cmd = app.add_subcommand("eval", "Run decoders over a corpus and report metrics");
  eval_flags.attach(*eval_cmd, true);
  eval_cmd->add_option("--format", format, "csv, json or both")
      ->check(CLI::IsMember({"csv", "json", "both"}));

  ExperimentFlags sr_flags;
  auto* sr_cmd = app.add_subcommand("sr", "Report self-reinforcement metrics only");
  sr_flags.attach(*sr_cmd, true);

  ExperimentFlags sweep_flags;
  std::string grid_path;
  std::string metric = "diversity";
  auto* sweep_cmd = app.add_subcommand("sweep", "Grid-search hyperparameters on the validation split");
  sweep_flags.attach(*sweep_cmd, true);
  sweep_cmd->add_option("--grid", grid_path, "Grid JSON, e.g. {\"top_k\": [3, 5]}; default grids if omitted");
  sweep_cmd->add_option("--metric", metric, "Selection metric")
      ->check(CLI::IsMember({"diversity", "coherence", "greedy_ratio", "gen_length", "external"}));

  ExperimentFlags ablate_flags;
  std::string axis = "window";
  auto* ablate_cmd = app.add_subcommand("ablate", "Vary one penalty-decoding axis on the validation split");
  ablate_flags.attach(*ablate_cmd, true);
  ablate_cmd->add_option("--axis", axis, "alpha, window or length")
      ->check(CLI::IsMember({"alpha", "window", "length"}));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  if (verbose) logger()->set_level(spdlog::level::info);
  if (quiet) logger()->set_level(spdlog::level::err);

  try {
    if (*train_cmd) return cmd_train(train);
    if (*gen_cmd) return cmd_generate(gen);
    if (*eval_cmd) return cmd_eval(eval_flags, format);
    if (*sr_cmd) return cmd_sr(sr_flags);
    if (*sweep_cmd) return cmd_sweep(sweep_flags, grid_path, metric);
    if (*ablate_cmd) return cmd_ablate(ablate_flags, axis);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitUsage;
}
