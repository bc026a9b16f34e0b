#include "pendec/harness.h"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <exception>
#include <fstream>
#include <set>
#include <sstream>
#include <thread>

#include <fmt/format.h>

#include "pendec/log.h"
#include "pendec/model_io.h"
#include "pendec/rng.h"

namespace pendec {

using nlohmann::json;
namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Corpus

Corpus ingest(std::istream& in, const std::string& source_name) {
  Corpus corpus;
  std::set<std::string> ids;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    auto skip = [&](std::string reason) {
      logger()->warn("{}:{}: skipped: {}", source_name, lineno, reason);
      corpus.malformed.push_back({lineno, std::move(reason)});
    };
    json j = json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object()) {
      skip("not a JSON object");
      continue;
    }
    auto id = j.find("id");
    auto text = j.find("text");
    if (id == j.end() || !id->is_string()) {
      skip("missing string field 'id'");
      continue;
    }
    if (text == j.end() || !text->is_string()) {
      skip("missing string field 'text'");
      continue;
    }
    if (text->get_ref<const std::string&>().empty()) {
      skip("empty text");
      continue;
    }
    const auto& id_str = id->get_ref<const std::string&>();
    if (!ids.insert(id_str).second) {
      throw Error(fmt::format("{}:{}: duplicate id '{}'", source_name, lineno, id_str));
    }
    corpus.entries.push_back({id_str, text->get<std::string>()});
  }
  if (in.bad()) throw Error("failed reading '" + source_name + "'");
  if (corpus.entries.empty()) {
    throw Error(fmt::format("'{}' has no valid entries ({} malformed lines)", source_name,
                            corpus.malformed.size()));
  }
  return corpus;
}

Corpus ingest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot read corpus '" + path.string() + "'");
  return ingest(in, path.string());
}

void write_corpus(const fs::path& path, const std::vector<CorpusEntry>& entries) {
  std::ostringstream out;
  for (const auto& e : entries) out << json{{"id", e.id}, {"text", e.text}}.dump() << '\n';
  write_text(path, out.str());
}

// ---------------------------------------------------------------------------
// JSON codecs

namespace {

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

void check_keys(const json& j, std::initializer_list<const char*> allowed, const std::string& what) {
  if (!j.is_object()) throw ConfigError(what + " must be a JSON object");
  for (const auto& [key, _] : j.items()) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || key == a;
    if (!ok) throw ConfigError(fmt::format("unknown key '{}' in {}", key, what));
  }
}

template <class T>
T field(const json& j, const char* key, T fallback) {
  auto it = j.find(key);
  if (it == j.end()) return fallback;
  try {
    return it->get<T>();
  } catch (const json::exception&) {
    throw ConfigError(fmt::format("field '{}' has the wrong type", key));
  }
}

std::size_t count_field(const json& j, const char* key, std::size_t fallback) {
  auto it = j.find(key);
  if (it == j.end()) return fallback;
  if (!it->is_number_integer() || it->get<long long>() < 0) {
    throw ConfigError(fmt::format("field '{}' must be a non-negative integer", key));
  }
  return it->get<std::size_t>();
}

Window window_from_json(const json& j) {
  if (j.is_number_integer()) {
    if (j.get<long long>() < 0) throw ConfigError("window must be non-negative");
    return Window::of(j.get<std::size_t>());
  }
  if (j.is_string()) return Window::parse(j.get<std::string>());
  throw ConfigError("window must be an integer or \"unbounded\"");
}

json window_to_json(const Window& w) {
  return w.is_unbounded() ? json("unbounded") : json(w.size());
}

fs::path resolve(const fs::path& p, const fs::path& base) {
  return (p.is_relative() ? base / p : p).lexically_normal();
}

ModelSource source_from_json(const json& j, const fs::path& base) {
  if (j.is_string()) return resolve(j.get<std::string>(), base);
  check_keys(j, {"train"}, "model source");
  const json& t = j.at("train");
  check_keys(t, {"corpus", "order", "smoothing_k", "tokenizer", "cache"}, "train block");
  TrainSpec spec;
  if (!t.contains("corpus")) throw ConfigError("train block needs 'corpus'");
  spec.corpus = resolve(t.at("corpus").get<std::string>(), base);
  spec.order = field(t, "order", spec.order);
  spec.smoothing_k = field(t, "smoothing_k", spec.smoothing_k);
  spec.tokenizer = parse_tokenizer_kind(field<std::string>(t, "tokenizer", "whitespace"));
  if (auto c = t.find("cache"); c != t.end()) {
    check_keys(*c, {"lambda", "window"}, "cache block");
    spec.cache_lambda = c->at("lambda").get<double>();
    spec.cache_window = count_field(*c, "window", spec.cache_window);
  }
  return spec;
}

json source_to_json(const ModelSource& source) {
  return std::visit(Overloaded{
                        [](const fs::path& p) { return json(p.generic_string()); },
                        [](const TrainSpec& t) {
                          json train = {{"corpus", t.corpus.generic_string()},
                                        {"order", t.order},
                                        {"smoothing_k", t.smoothing_k},
                                        {"tokenizer", to_string(t.tokenizer)}};
                          if (t.cache_lambda) {
                            train["cache"] = {{"lambda", *t.cache_lambda},
                                              {"window", t.cache_window}};
                          }
                          return json{{"train", std::move(train)}};
                        },
                    },
                    source);
}

Split split_from_json(const json& j) {
  check_keys(j, {"offset", "count"}, "split");
  Split s;
  s.offset = count_field(j, "offset", 0);
  if (j.contains("count")) s.count = count_field(j, "count", 0);
  return s;
}

json split_to_json(const Split& s) {
  json j = {{"offset", s.offset}};
  if (s.count) j["count"] = *s.count;
  return j;
}

}  // namespace

json decoder_to_json(const DecoderConfig& cfg) {
  json j = {{"strategy", family(cfg.strategy)}};
  std::visit(Overloaded{
                 [](const strategy::Greedy&) {},
                 [&](const strategy::Beam& s) { j["width"] = s.width; },
                 [&](const strategy::TopK& s) { j["k"] = s.k; },
                 [&](const strategy::TopP& s) { j["p"] = s.p; },
                 [&](const strategy::Typical& s) { j["tau"] = s.tau; },
                 [&](const strategy::Eta& s) { j["epsilon"] = s.epsilon; },
                 [&](const strategy::Mirostat& s) {
                   j["tau"] = s.tau;
                   j["learning_rate"] = s.learning_rate;
                   if (s.initial_mu) j["initial_mu"] = *s.initial_mu;
                 },
                 [&](const strategy::NearGreedy& s) { j["alpha"] = s.alpha; },
                 [&](const strategy::Penalty& s) {
                   const auto& c = s.config;
                   j["alpha"] = c.alpha;
                   j["window"] = window_to_json(c.window);
                   if (c.target_length) j["target_length"] = *c.target_length;
                   j["length_penalty"] = c.length_penalty;
                   j["mode"] = c.mode == PenaltyMode::Literal ? "literal" : "sign_aware";
                 },
             },
             cfg.strategy);
  j["max_new_tokens"] = cfg.max_new_tokens;
  j["seed"] = cfg.seed;
  return j;
}

DecoderConfig decoder_from_json(const json& j) {
  if (!j.is_object() || !j.contains("strategy") || !j.at("strategy").is_string()) {
    throw ConfigError("decoder entry needs a string 'strategy'");
  }
  const auto name = j.at("strategy").get<std::string>();
  const std::string what = "decoder '" + name + "'";
  DecoderConfig cfg;
  if (name == "greedy") {
    check_keys(j, {"strategy", "max_new_tokens", "seed"}, what);
    cfg.strategy = strategy::Greedy{};
  } else if (name == "beam") {
    check_keys(j, {"strategy", "width", "max_new_tokens", "seed"}, what);
    cfg.strategy = strategy::Beam{field(j, "width", strategy::Beam{}.width)};
  } else if (name == "top_k") {
    check_keys(j, {"strategy", "k", "max_new_tokens", "seed"}, what);
    cfg.strategy = strategy::TopK{field(j, "k", strategy::TopK{}.k)};
  } else if (name == "top_p") {
    check_keys(j, {"strategy", "p", "max_new_tokens", "seed"}, what);
    cfg.strategy = strategy::TopP{field(j, "p", strategy::TopP{}.p)};
  } else if (name == "typical") {
    check_keys(j, {"strategy", "tau", "max_new_tokens", "seed"}, what);
    cfg.strategy = strategy::Typical{field(j, "tau", strategy::Typical{}.tau)};
  } else if (name == "eta") {
    check_keys(j, {"strategy", "epsilon", "max_new_tokens", "seed"}, what);
    cfg.strategy = strategy::Eta{field(j, "epsilon", strategy::Eta{}.epsilon)};
  } else if (name == "mirostat") {
    check_keys(j, {"strategy", "tau", "learning_rate", "initial_mu", "max_new_tokens", "seed"},
               what);
    strategy::Mirostat m;
    m.tau = field(j, "tau", m.tau);
    m.learning_rate = field(j, "learning_rate", m.learning_rate);
    if (j.contains("initial_mu")) m.initial_mu = field(j, "initial_mu", 0.0);
    cfg.strategy = m;
  } else if (name == "near_greedy") {
    check_keys(j, {"strategy", "alpha", "max_new_tokens", "seed"}, what);
    cfg.strategy = strategy::NearGreedy{field(j, "alpha", strategy::NearGreedy{}.alpha)};
  } else if (name == "penalty") {
    check_keys(j,
               {"strategy", "alpha", "window", "target_length", "length_penalty", "mode",
                "max_new_tokens", "seed"},
               what);
    PenaltyConfig c;
    c.alpha = field(j, "alpha", c.alpha);
    if (j.contains("window")) c.window = window_from_json(j.at("window"));
    if (j.contains("target_length") && !j.at("target_length").is_null()) {
      c.target_length = count_field(j, "target_length", 0);
    }
    c.length_penalty = field(j, "length_penalty", c.length_penalty);
    const auto mode = field<std::string>(j, "mode", "sign_aware");
    if (mode == "literal") {
      c.mode = PenaltyMode::Literal;
    } else if (mode != "sign_aware") {
      throw ConfigError("penalty mode must be 'sign_aware' or 'literal', got '" + mode + "'");
    }
    cfg.strategy = strategy::Penalty{c};
  } else {
    throw ConfigError("unknown strategy '" + name + "'");
  }
  cfg.max_new_tokens = count_field(j, "max_new_tokens", cfg.max_new_tokens);
  cfg.seed = field<std::uint64_t>(j, "seed", cfg.seed);
  return cfg;
}

void ExperimentSpec::validate() const {
  if (prefix_tokens < 1) throw ConfigError("prefix_tokens must be >= 1");
  if (max_new_tokens < 1) throw ConfigError("max_new_tokens must be >= 1");
  if (seeds.empty()) throw ConfigError("at least one seed is required");
  if (metric_ks.empty()) throw ConfigError("metric_ks must not be empty");
  for (int k : metric_ks) {
    if (k < 1) throw ConfigError("metric k must be >= 1, got " + std::to_string(k));
  }
  for (const auto& d : decoders) d.validate();
}

ExperimentSpec spec_from_json(const json& j, const fs::path& base_dir) {
  check_keys(j,
             {"model", "scorer", "corpus", "prefix_tokens", "max_new_tokens", "decoders",
              "metric_ks", "seeds", "splits", "external_scores", "jobs"},
             "experiment spec");
  ExperimentSpec spec;
  try {
    if (!j.contains("model")) throw ConfigError("experiment spec needs 'model'");
    if (!j.contains("corpus")) throw ConfigError("experiment spec needs 'corpus'");
    spec.model = source_from_json(j.at("model"), base_dir);
    if (j.contains("scorer") && !j.at("scorer").is_null()) {
      spec.scorer = source_from_json(j.at("scorer"), base_dir);
    }
    spec.corpus = resolve(j.at("corpus").get<std::string>(), base_dir);
    spec.prefix_tokens = count_field(j, "prefix_tokens", spec.prefix_tokens);
    spec.max_new_tokens = count_field(j, "max_new_tokens", spec.max_new_tokens);
    if (auto d = j.find("decoders"); d != j.end()) {
      for (const auto& entry : *d) spec.decoders.push_back(decoder_from_json(entry));
    }
    spec.metric_ks = field(j, "metric_ks", spec.metric_ks);
    spec.seeds = field(j, "seeds", spec.seeds);
    if (auto s = j.find("splits"); s != j.end()) {
      check_keys(*s, {"test", "validation"}, "splits");
      if (s->contains("test")) spec.test_split = split_from_json(s->at("test"));
      if (s->contains("validation")) spec.validation_split = split_from_json(s->at("validation"));
    }
    if (j.contains("external_scores") && !j.at("external_scores").is_null()) {
      spec.external_scores = resolve(j.at("external_scores").get<std::string>(), base_dir);
    }
    spec.jobs = count_field(j, "jobs", spec.jobs);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed experiment spec: ") + e.what());
  }
  spec.validate();
  return spec;
}

json spec_to_json(const ExperimentSpec& spec) {
  json j;
  j["model"] = source_to_json(spec.model);
  j["scorer"] = spec.scorer ? source_to_json(*spec.scorer) : json(nullptr);
  j["corpus"] = spec.corpus.generic_string();
  j["prefix_tokens"] = spec.prefix_tokens;
  j["max_new_tokens"] = spec.max_new_tokens;
  json decoders = json::array();
  for (const auto& d : spec.decoders) decoders.push_back(decoder_to_json(d));
  j["decoders"] = std::move(decoders);
  j["metric_ks"] = spec.metric_ks;
  j["seeds"] = spec.seeds;
  j["splits"] = {{"test", split_to_json(spec.test_split)},
                 {"validation", split_to_json(spec.validation_split)}};
  j["external_scores"] =
      spec.external_scores ? json(spec.external_scores->generic_string()) : json(nullptr);
  return j;
}

ExperimentSpec load_spec(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot read spec file '" + path.string() + "'");
  json j = json::parse(in, nullptr, false);
  if (j.is_discarded()) throw ConfigError("'" + path.string() + "' is not valid JSON");
  return spec_from_json(j, path.parent_path());
}

std::map<std::string, double> read_external_scores(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot read external scores '" + path.string() + "'");
  std::map<std::string, double> scores;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    const auto comma = line.rfind(',');
    if (comma == std::string::npos || comma == 0) {
      throw Error(fmt::format("{}:{}: expected 'id,score'", path.string(), lineno));
    }
    std::string value = line.substr(comma + 1);
    value.erase(0, value.find_first_not_of(" \t"));
    double score = 0.0;
    auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), score);
    if (ec != std::errc() || ptr != value.data() + value.size()) {
      throw Error(fmt::format("{}:{}: bad score '{}'", path.string(), lineno, value));
    }
    scores[line.substr(0, comma)] = score;
  }
  return scores;
}

// ---------------------------------------------------------------------------
// Workbench

std::shared_ptr<const LanguageModel> load_model_source(const ModelSource& source) {
  if (const auto* path = std::get_if<fs::path>(&source)) {
    return std::shared_ptr<const LanguageModel>(load_model(*path));
  }
  const auto& t = std::get<TrainSpec>(source);
  const Corpus corpus = ingest(t.corpus);
  std::vector<std::string> texts;
  for (const auto& e : corpus.entries) texts.push_back(e.text);
  auto model = std::make_shared<const NGramLM>(
      train_ngram(texts, t.order, t.smoothing_k, t.tokenizer));
  if (!t.cache_lambda) return model;
  return std::make_shared<const CacheLM>(model, *t.cache_lambda, t.cache_window);
}

Workbench prepare(const ExperimentSpec& spec) {
  spec.validate();
  Workbench bench;
  bench.model = load_model_source(spec.model);
  bench.corpus = ingest(spec.corpus);
  if (spec.scorer) {
    bench.scorer = load_model_source(*spec.scorer);
    if (bench.scorer->info().token_names != bench.model->info().token_names) {
      throw ConfigError("scorer and generator vocabularies differ");
    }
  } else {
    std::vector<std::string> texts;
    for (const auto& e : bench.corpus.entries) texts.push_back(e.text);
    try {
      bench.scorer = std::make_shared<const NGramLM>(
          train_ngram(texts, 2, 0.5, bench.model->tokenizer().kind(),
                      &bench.model->info().token_names));
    } catch (const Error& e) {
      logger()->warn("no default scorer ({}); scoring coherence with the generator", e.what());
      bench.scorer = bench.model;
    }
  }
  if (spec.external_scores) bench.external_scores = read_external_scores(*spec.external_scores);
  return bench;
}

// ---------------------------------------------------------------------------
// Experiments

namespace {

struct Sample {
  std::size_t entry = 0;  // index into the corpus
  TokenSequence prefix;
};

struct Outcome {
  GenerationRecord record;
  double rep[3] = {0.0, 0.0, 0.0};  // n = 2, 3, 4
  double coherence = 0.0;
  double greedy_ratio = 0.0;
};

std::size_t resolve_jobs(std::size_t jobs) {
  if (jobs > 0) return jobs;
  return std::max(1u, std::thread::hardware_concurrency());
}

// Runs fn(i) for i in [0, n) on up to `jobs` threads. Rethrows the failure
// with the smallest index so errors do not depend on scheduling.
template <class Fn>
void parallel_for(std::size_t n, std::size_t jobs, Fn fn) {
  std::vector<std::exception_ptr> errors(n);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const std::size_t threads = std::min(jobs, n);
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

std::vector<std::size_t> split_indices(const Split& split, std::size_t corpus_size,
                                       const char* name) {
  if (split.offset >= corpus_size) {
    throw ConfigError(fmt::format("{} split offset {} is past the end of a {}-entry corpus", name,
                                  split.offset, corpus_size));
  }
  std::size_t end = corpus_size;
  if (split.count) end = std::min(corpus_size, split.offset + *split.count);
  std::vector<std::size_t> out;
  for (std::size_t i = split.offset; i < end; ++i) out.push_back(i);
  return out;
}

std::optional<double> external_for(const std::map<std::string, double>& scores,
                                   const std::string& method, const Corpus& corpus,
                                   const std::vector<Sample>& samples) {
  if (scores.empty()) return std::nullopt;
  if (auto it = scores.find(method); it != scores.end()) return it->second;
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& s : samples) {
    auto it = scores.find(method + "::" + corpus.entries[s.entry].id);
    if (it == scores.end()) continue;
    sum += it->second;
    ++n;
  }
  if (n == 0) return std::nullopt;
  return sum / static_cast<double>(n);
}

}  // namespace

ExperimentResult run_experiment(const Workbench& bench, const ExperimentSpec& spec,
                                const std::vector<DecoderConfig>& decoders, SplitKind split) {
  spec.validate();
  if (decoders.empty()) throw ConfigError("no decoders to run");
  const LanguageModel& model = *bench.model;
  const std::size_t vocab = model.info().vocab_size;

  std::vector<DecoderConfig> configs;
  for (const auto& d : decoders) {
    DecoderConfig c = d;
    c.max_new_tokens = spec.max_new_tokens;
    c.nucleus_ks = spec.metric_ks;
    c.seed = 0;
    c.validate(vocab);
    configs.push_back(std::move(c));
  }

  ExperimentResult result;
  RunManifest& manifest = result.manifest;
  manifest.spec = spec_to_json(spec);
  manifest.seeds = spec.seeds;
  manifest.split = split == SplitKind::Test ? "test" : "validation";
  manifest.malformed_lines = bench.corpus.malformed.size();

  const auto indices =
      split_indices(split == SplitKind::Test ? spec.test_split : spec.validation_split,
                    bench.corpus.entries.size(), manifest.split.c_str());
  manifest.ingested = indices.size();

  std::vector<Sample> samples;
  for (std::size_t i : indices) {
    const auto& entry = bench.corpus.entries[i];
    auto tokens = model.tokenizer().try_encode(entry.text);
    if (!tokens) {
      logger()->info("entry '{}' skipped: out-of-vocabulary token", entry.id);
      manifest.skipped.push_back({entry.id, "out-of-vocabulary token"});
      continue;
    }
    if (tokens->size() < spec.prefix_tokens) {
      auto reason = fmt::format("{} tokens, fewer than prefix_tokens={}", tokens->size(),
                                spec.prefix_tokens);
      logger()->info("entry '{}' skipped: {}", entry.id, reason);
      manifest.skipped.push_back({entry.id, std::move(reason)});
      continue;
    }
    tokens->resize(spec.prefix_tokens);
    samples.push_back({i, std::move(*tokens)});
  }
  manifest.processed = samples.size();
  if (samples.empty()) {
    throw Error(fmt::format("no usable entries in the {} split ({} skipped)", manifest.split,
                            manifest.skipped.size()));
  }

  // Slot layout: decoder-major, then seed, then sample.
  const std::size_t per_seed = samples.size();
  const std::size_t per_decoder = per_seed * spec.seeds.size();
  std::vector<Outcome> outcomes(per_decoder * configs.size());

  parallel_for(outcomes.size(), resolve_jobs(spec.jobs), [&](std::size_t slot) {
    const std::size_t d = slot / per_decoder;
    const std::size_t s = (slot % per_decoder) / per_seed;
    const Sample& sample = samples[slot % per_seed];
    const auto& entry = bench.corpus.entries[sample.entry];
    try {
      DecoderConfig cfg = configs[d];
      cfg.seed = mix_seed(spec.seeds[s], sample.entry);
      Outcome& out = outcomes[slot];
      out.record = generate(model, sample.prefix, cfg);
      const auto& gen = out.record.generated;
      for (int n = 2; n <= 4; ++n) out.rep[n - 2] = rep_n(gen, n);
      out.coherence = coherence(*bench.scorer, sample.prefix, gen);
      out.greedy_ratio = greedy_ratio(out.record);
    } catch (const std::exception& e) {
      throw Error(fmt::format("entry '{}' ({}): {}", entry.id, label(configs[d].strategy),
                              e.what()));
    }
  });

  static constexpr int kSrOrders[] = {1, 2, 3, 4};
  result.table.metric_ks = spec.metric_ks;
  for (std::size_t d = 0; d < configs.size(); ++d) {
    const auto begin = outcomes.begin() + static_cast<std::ptrdiff_t>(d * per_decoder);
    const auto end = begin + static_cast<std::ptrdiff_t>(per_decoder);

    ResultsRow row;
    row.method = label(configs[d].strategy);
    DecoderConfig echo = configs[d];
    row.config = decoder_to_json(echo);
    row.config.erase("seed");
    row.records = per_decoder;

    std::vector<GenerationRecord> records;
    double rep_sum[3] = {0.0, 0.0, 0.0};
    double coherence_sum = 0.0;
    double greedy_sum = 0.0;
    for (auto it = begin; it != end; ++it) {
      for (int n = 0; n < 3; ++n) rep_sum[n] += it->rep[n];
      coherence_sum += it->coherence;
      greedy_sum += it->greedy_ratio;
      records.push_back(it->record);
    }
    const double count = static_cast<double>(per_decoder);
    row.quality.diversity = 1.0;
    for (int n = 0; n < 3; ++n) {
      const double mean = rep_sum[n] / count;
      row.quality.rep_n[n + 2] = mean;
      row.quality.diversity *= 1.0 - mean / 100.0;
    }
    row.quality.coherence = coherence_sum / count;
    row.quality.greedy_ratio = greedy_sum / count;
    row.quality.gen_length = gen_length(records);
    row.sr = self_reinforcement(records, kSrOrders, spec.metric_ks);
    row.external = external_for(bench.external_scores, row.method, bench.corpus, samples);

    for (std::size_t i = 0; i < records.size(); ++i) {
      const auto& sample = samples[i % per_seed];
      result.generations.push_back({row.method, spec.seeds[i / per_seed],
                                    bench.corpus.entries[sample.entry].id,
                                    model.tokenizer().decode(records[i].generated)});
    }
    result.table.rows.push_back(std::move(row));
  }
  return result;
}

ExperimentResult run_experiment(const ExperimentSpec& spec) {
  const Workbench bench = prepare(spec);
  return run_experiment(bench, spec, spec.decoders, SplitKind::Test);
}

// ---------------------------------------------------------------------------
// Sweeps

SelectionMetric parse_selection_metric(const std::string& name) {
  if (name == "diversity") return SelectionMetric::Diversity;
  if (name == "coherence") return SelectionMetric::Coherence;
  if (name == "greedy_ratio") return SelectionMetric::GreedyRatio;
  if (name == "gen_length") return SelectionMetric::GenLength;
  if (name == "external") return SelectionMetric::External;
  throw ConfigError("unknown selection metric '" + name + "'");
}

const char* to_string(SelectionMetric m) {
  switch (m) {
    case SelectionMetric::Diversity: return "diversity";
    case SelectionMetric::Coherence: return "coherence";
    case SelectionMetric::GreedyRatio: return "greedy_ratio";
    case SelectionMetric::GenLength: return "gen_length";
    case SelectionMetric::External: return "external";
  }
  return "?";
}

double selection_value(const ResultsRow& row, SelectionMetric m) {
  switch (m) {
    case SelectionMetric::Diversity: return row.quality.diversity;
    case SelectionMetric::Coherence: return row.quality.coherence;
    case SelectionMetric::GreedyRatio: return row.quality.greedy_ratio;
    case SelectionMetric::GenLength: return row.quality.gen_length;
    case SelectionMetric::External:
      if (!row.external) throw Error("row '" + row.method + "' has no external score");
      return *row.external;
  }
  throw Error("bad selection metric");
}

namespace {

DecoderConfig point_for(const std::string& fam, const json& value, const PenaltyConfig& base) {
  DecoderConfig cfg;
  try {
    if (fam == "top_k") {
      cfg.strategy = strategy::TopK{value.get<int>()};
    } else if (fam == "top_p") {
      cfg.strategy = strategy::TopP{value.get<double>()};
    } else if (fam == "typical") {
      cfg.strategy = strategy::Typical{value.get<double>()};
    } else if (fam == "eta") {
      cfg.strategy = strategy::Eta{value.get<double>()};
    } else if (fam == "mirostat") {
      strategy::Mirostat m;
      m.tau = value.get<double>();
      cfg.strategy = m;
    } else if (fam == "beam") {
      cfg.strategy = strategy::Beam{value.get<int>()};
    } else if (fam == "penalty") {
      PenaltyConfig c = base;
      c.alpha = value.get<double>();
      cfg.strategy = strategy::Penalty{c};
    } else if (fam == "near_greedy") {
      cfg.strategy = strategy::NearGreedy{value.get<double>()};
    } else {
      throw ConfigError("no sweep grid for decoder family '" + fam + "'");
    }
  } catch (const json::exception&) {
    throw ConfigError("bad grid value for '" + fam + "': " + value.dump());
  }
  cfg.validate();
  return cfg;
}

constexpr const char* kGridOrder[] = {"top_k",    "top_p", "typical", "eta",
                                      "mirostat", "beam",  "penalty", "near_greedy"};

}  // namespace

std::vector<SweepGrid> default_grids(const PenaltyConfig& penalty_base) {
  return grids_from_json(json{{"top_k", {3, 5, 7, 9}},
                              {"top_p", {0.89, 0.90, 0.92, 0.95, 0.99}},
                              {"typical", {0.2, 0.9, 0.92, 0.95, 0.99}},
                              {"eta", {0.004, 0.002, 0.0009, 0.0006, 0.0003}},
                              {"mirostat", {2, 3, 4, 5}},
                              {"beam", {3, 5, 7, 9}},
                              {"penalty", {1.1, 1.5, 2.0, 2.5, 3.0}}},
                         penalty_base);
}

std::vector<SweepGrid> grids_from_json(const json& j, const PenaltyConfig& penalty_base) {
  if (!j.is_object() || j.empty()) throw ConfigError("sweep grids must be a non-empty object");
  for (const auto& [key, values] : j.items()) {
    if (std::find_if(std::begin(kGridOrder), std::end(kGridOrder),
                     [&](const char* f) { return key == f; }) == std::end(kGridOrder)) {
      throw ConfigError("no sweep grid for decoder family '" + key + "'");
    }
    if (!values.is_array() || values.empty()) {
      throw ConfigError("grid for '" + key + "' must be a non-empty array");
    }
  }
  std::vector<SweepGrid> grids;
  for (const char* fam : kGridOrder) {
    auto it = j.find(fam);
    if (it == j.end()) continue;
    SweepGrid grid{fam, {}};
    for (const auto& v : *it) grid.points.push_back(point_for(fam, v, penalty_base));
    grids.push_back(std::move(grid));
  }
  return grids;
}

SweepResult sweep(const Workbench& bench, const ExperimentSpec& spec,
                  const std::vector<SweepGrid>& grids, SelectionMetric metric) {
  if (grids.empty()) throw ConfigError("no sweep grids");
  std::vector<DecoderConfig> all;
  for (const auto& g : grids) {
    if (g.points.empty()) throw ConfigError("grid for '" + g.family + "' is empty");
    all.insert(all.end(), g.points.begin(), g.points.end());
  }
  ExperimentResult run = run_experiment(bench, spec, all, SplitKind::Validation);

  SweepResult out;
  out.metric = metric;
  out.manifest = std::move(run.manifest);
  out.grid = std::move(run.table);
  std::size_t row = 0;
  for (const auto& g : grids) {
    std::size_t best = row;
    double best_value = selection_value(out.grid.rows[row], metric);
    for (std::size_t i = row + 1; i < row + g.points.size(); ++i) {
      const double v = selection_value(out.grid.rows[i], metric);
      if (v > best_value) {
        best = i;
        best_value = v;
      }
    }
    out.best.push_back(out.grid.rows[best]);
    row += g.points.size();
  }
  return out;
}

AblationAxis parse_ablation_axis(const std::string& name) {
  if (name == "alpha" || name == "repetition_penalty") return AblationAxis::RepetitionPenalty;
  if (name == "window") return AblationAxis::Window;
  if (name == "length" || name == "length_penalty") return AblationAxis::LengthPenalty;
  throw ConfigError("unknown ablation axis '" + name + "' (alpha, window, length)");
}

ExperimentResult ablate(const Workbench& bench, const ExperimentSpec& spec, AblationAxis axis,
                        const AblationOptions& options) {
  const strategy::Penalty* base = nullptr;
  for (const auto& d : spec.decoders) {
    if ((base = std::get_if<strategy::Penalty>(&d.strategy))) break;
  }
  if (base == nullptr) throw ConfigError("ablation needs a penalty decoder in the spec");

  std::vector<DecoderConfig> points;
  auto add = [&](PenaltyConfig c) {
    DecoderConfig cfg;
    cfg.strategy = strategy::Penalty{c};
    points.push_back(std::move(cfg));
  };
  switch (axis) {
    case AblationAxis::RepetitionPenalty:
      for (double a : options.alphas) {
        PenaltyConfig c = base->config;
        c.alpha = a;
        add(c);
      }
      break;
    case AblationAxis::Window:
      for (const Window& w : options.windows) {
        PenaltyConfig c = base->config;
        c.window = w;
        add(c);
      }
      break;
    case AblationAxis::LengthPenalty:
      for (bool on : {true, false}) {
        PenaltyConfig c = base->config;
        c.length_penalty = on;
        add(c);
      }
      break;
  }
  if (points.empty()) throw ConfigError("ablation grid is empty");
  return run_experiment(bench, spec, points, SplitKind::Validation);
}

}  // namespace pendec
