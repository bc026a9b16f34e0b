#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "pendec/decoders.h"
#include "pendec/metrics.h"
#include "pendec/models.h"

namespace pendec {

inline constexpr const char* kEngineVersion = "pendec 0.3.0";

// ---------------------------------------------------------------------------
// Corpus

struct CorpusEntry {
  std::string id;
  std::string text;

  friend bool operator==(const CorpusEntry&, const CorpusEntry&) = default;
};

struct SkippedLine {
  std::size_t line = 0;  // 1-based
  std::string reason;
};

struct Corpus {
  std::vector<CorpusEntry> entries;
  std::vector<SkippedLine> malformed;
};

// Reads JSON lines with string fields "id" and "text". Blank lines are
// ignored; malformed lines are skipped with a warning naming the line.
// Throws Error on an unreadable file, a duplicate id, or zero valid entries.
Corpus ingest(const std::filesystem::path& path);
Corpus ingest(std::istream& in, const std::string& source_name);

void write_corpus(const std::filesystem::path& path, const std::vector<CorpusEntry>& entries);

// ---------------------------------------------------------------------------
// Experiment specification

// Trains an NGramLM in place from a corpus file.
struct TrainSpec {
  std::filesystem::path corpus;
  int order = 3;
  double smoothing_k = 0.1;
  TokenizerKind tokenizer = TokenizerKind::Whitespace;
  // When set, the trained model is wrapped in a CacheLM.
  std::optional<double> cache_lambda;
  std::size_t cache_window = 200;
};

using ModelSource = std::variant<std::filesystem::path, TrainSpec>;

struct Split {
  std::size_t offset = 0;
  std::optional<std::size_t> count;  // unset: to the end of the corpus
};

struct ExperimentSpec {
  ModelSource model;
  // Unset: an order-2, k=0.5 n-gram scorer trained on the evaluation corpus
  // over the generator's vocabulary.
  std::optional<ModelSource> scorer;
  std::filesystem::path corpus;
  std::size_t prefix_tokens = 32;
  std::size_t max_new_tokens = 128;
  std::vector<DecoderConfig> decoders;
  std::vector<int> metric_ks = {1, 5, 10};
  std::vector<std::uint64_t> seeds = {0};
  Split test_split;
  Split validation_split;
  std::optional<std::filesystem::path> external_scores;
  std::size_t jobs = 0;  // 0: hardware concurrency

  void validate() const;
};

nlohmann::json decoder_to_json(const DecoderConfig& cfg);
// Accepts {"strategy": "...", <hyperparameters>}; unknown keys are errors.
DecoderConfig decoder_from_json(const nlohmann::json& j);

// Relative paths inside the JSON resolve against base_dir.
ExperimentSpec spec_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir);
nlohmann::json spec_to_json(const ExperimentSpec& spec);
ExperimentSpec load_spec(const std::filesystem::path& path);

// Lines "id,score"; '#' comments and blank lines are ignored. An id equal to
// a row's method label sets that row's external value directly; otherwise
// ids of the form "<method>::<entry id>" are averaged over the row's entries.
std::map<std::string, double> read_external_scores(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Results

struct ResultsRow {
  std::string method;
  nlohmann::json config;
  QualityReport quality;
  SelfReinforcementReport sr;
  std::optional<double> external;
  std::size_t records = 0;

  friend bool operator==(const ResultsRow&, const ResultsRow&) = default;
};

struct ResultsTable {
  std::vector<int> metric_ks;
  std::vector<ResultsRow> rows;

  friend bool operator==(const ResultsTable&, const ResultsTable&) = default;
};

struct SkippedEntry {
  std::string id;
  std::string reason;
};

struct RunManifest {
  nlohmann::json spec;
  std::vector<std::uint64_t> seeds;
  std::string split;  // "test" | "validation"
  std::size_t ingested = 0;  // entries in the split
  std::size_t processed = 0;
  std::vector<SkippedEntry> skipped;
  std::size_t malformed_lines = 0;
  std::string engine_version = kEngineVersion;
  std::string rng = "mt19937_64/u53";
};

struct GeneratedText {
  std::string method;
  std::uint64_t seed = 0;
  std::string entry_id;
  std::string text;
};

struct ExperimentResult {
  ResultsTable table;
  RunManifest manifest;
  // Decoded continuations in row, seed, entry order.
  std::vector<GeneratedText> generations;
};

// Loaded models, corpus and external scores for a spec.
struct Workbench {
  std::shared_ptr<const LanguageModel> model;
  std::shared_ptr<const LanguageModel> scorer;
  Corpus corpus;
  std::map<std::string, double> external_scores;
};

std::shared_ptr<const LanguageModel> load_model_source(const ModelSource& source);
Workbench prepare(const ExperimentSpec& spec);

enum class SplitKind { Test, Validation };

// Generates with every decoder for every (seed, entry) in the split and
// macro-averages the per-record metrics. Row order follows `decoders`.
// Output is independent of the job count.
ExperimentResult run_experiment(const Workbench& bench, const ExperimentSpec& spec,
                                const std::vector<DecoderConfig>& decoders, SplitKind split);
ExperimentResult run_experiment(const ExperimentSpec& spec);

enum class SelectionMetric { Diversity, Coherence, GreedyRatio, GenLength, External };

SelectionMetric parse_selection_metric(const std::string& name);
const char* to_string(SelectionMetric m);
double selection_value(const ResultsRow& row, SelectionMetric m);

struct SweepGrid {
  std::string family;
  std::vector<DecoderConfig> points;
};

// Hyperparameter grids for top_k, top_p, typical, eta, mirostat, beam and
// penalty. The penalty grid varies alpha around `penalty_base`.
std::vector<SweepGrid> default_grids(const PenaltyConfig& penalty_base = {});
// {"top_k": [3, 5], "penalty": [1.1, 1.5], ...}
std::vector<SweepGrid> grids_from_json(const nlohmann::json& j,
                                       const PenaltyConfig& penalty_base = {});

struct SweepResult {
  ResultsTable grid;  // one row per grid point, grid order
  std::vector<ResultsRow> best;  // one per family, grid order
  SelectionMetric metric = SelectionMetric::Diversity;
  RunManifest manifest;
};

// Runs every grid point on the validation split and keeps, per family, the
// point with the largest selection metric (first in grid order on ties).
SweepResult sweep(const Workbench& bench, const ExperimentSpec& spec,
                  const std::vector<SweepGrid>& grids, SelectionMetric metric);

enum class AblationAxis { RepetitionPenalty, Window, LengthPenalty };

AblationAxis parse_ablation_axis(const std::string& name);

struct AblationOptions {
  std::vector<double> alphas = {1.1, 1.5, 2.0, 2.5, 3.0};
  std::vector<Window> windows = {Window::of(0),  Window::of(8),   Window::of(16),
                                 Window::of(32), Window::of(64),  Window::of(100),
                                 Window::unbounded()};
};

// Varies one axis of the spec's first penalty decoder on the validation
// split, holding everything else fixed.
ExperimentResult ablate(const Workbench& bench, const ExperimentSpec& spec, AblationAxis axis,
                        const AblationOptions& options = {});

// ---------------------------------------------------------------------------
// Reports

enum class ReportFormat { Csv, Json };

// Columns: method, diversity, coherence, greedy_ratio, gen_length,
// sr_1..sr_4, sr_topk_<k>... and `external` when any row has one.
// Floats use 4 decimals.
std::string to_csv(const ResultsTable& table);
nlohmann::json to_json(const ResultsTable& table);
ResultsTable table_from_json(const nlohmann::json& j);
nlohmann::json to_json(const RunManifest& manifest);

void emit_report(const ResultsTable& table, ReportFormat format,
                 const std::filesystem::path& path);
void write_text(const std::filesystem::path& path, const std::string& content);

// Fixed-point rendering with 4 decimals; non-finite values as nan/inf/-inf.
std::string format_metric(double v);

// Plain-text summary for terminals.
std::string summary_table(const ResultsTable& table);

}  // namespace pendec
