#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <optional>
#include <string>
#include <vector>

#include "pendec/decoders.h"
#include "pendec/harness.h"
#include "pendec/metrics.h"
#include "pendec/model_io.h"
#include "pendec/models.h"
#include "pendec/penalty.h"

namespace py = pybind11;
using namespace pendec;

namespace {

// pybind11 holders cannot be pointers to const; models are immutable anyway.
using ModelPtr = std::shared_ptr<LanguageModel>;

ModelPtr hold(std::shared_ptr<const LanguageModel> m) { return std::const_pointer_cast<LanguageModel>(std::move(m)); }

Window to_window(const std::optional<std::size_t>& w) {
  return w ? Window::of(*w) : Window::unbounded();
}

py::dict record_to_dict(const GenerationRecord& r) {
  py::list traces;
  for (const auto& t : r.traces) {
    py::dict mass;
    for (const auto& [k, m] : t.topk_mass) mass[py::int_(k)] = m;
    py::dict d;
    d["chosen"] = t.chosen;
    d["chosen_prob_raw"] = t.chosen_prob_raw;
    d["chosen_prob_final"] = t.chosen_prob_final;
    d["argmax_raw"] = t.argmax_raw;
    d["is_greedy"] = t.is_greedy;
    d["topk_mass"] = mass;
    traces.append(d);
  }
  py::dict out;
  out["prefix"] = r.prefix;
  out["generated"] = r.generated;
  out["termination"] = to_string(r.termination);
  out["traces"] = traces;
  return out;
}

GenerationRecord generate_json(const ModelPtr& model, const TokenSequence& prefix,
                               const std::string& decoder_json, std::size_t max_new_tokens,
                               std::uint64_t seed, const std::vector<int>& nucleus_ks) {
  DecoderConfig cfg = decoder_from_json(nlohmann::json::parse(decoder_json));
  cfg.max_new_tokens = max_new_tokens;
  cfg.seed = seed;
  cfg.nucleus_ks = nucleus_ks;
  return generate(*model, prefix, cfg);
}

struct ExperimentOutput {
  std::string csv;
  std::string json;
  std::string manifest;
};

ExperimentOutput run_spec(const std::filesystem::path& spec_path, std::size_t jobs) {
  ExperimentSpec spec = load_spec(spec_path);
  if (jobs > 0) spec.jobs = jobs;
  const ExperimentResult result = run_experiment(spec);
  return {to_csv(result.table), to_json(result.table).dump(2) + "\n",
          to_json(result.manifest).dump(2) + "\n"};
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Penalty decoding engine: reference models, decoders and metrics.";

  static py::exception<Error> error(m, "PendecError", PyExc_RuntimeError);
  static py::exception<ConfigError> config_error(m, "ConfigError", PyExc_ValueError);
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const ConfigError& e) {
      py::set_error(config_error, e.what());
    } catch (const Error& e) {
      py::set_error(error, e.what());
    }
  });

  m.def(
      "softmax",
      [](const std::vector<double>& logits) {
        const ProbVector p = softmax(logits);
        return std::vector<double>(p.values().begin(), p.values().end());
      },
      py::arg("logits"));
  m.def(
      "repetition_penalty",
      [](std::vector<double> logits, const TokenSequence& context, double alpha,
         std::optional<std::size_t> window, bool literal) {
        return repetition_penalty(std::move(logits), context, alpha, to_window(window),
                                  literal ? PenaltyMode::Literal : PenaltyMode::SignAware);
      },
      py::arg("logits"), py::arg("context"), py::arg("alpha"), py::arg("window") = py::none(),
      py::arg("literal") = false,
      "window=None means the whole context.");
  m.def("length_penalty", &length_penalty, py::arg("eos_logit"), py::arg("alpha"),
        py::arg("target_length"), py::arg("current_length"));

  auto probs_of = [](const std::vector<double>& p) { return ProbVector::from_values(p); };
  m.def("top_k_support", [=](const std::vector<double>& p, int k) { return topk_support(probs_of(p), k); });
  m.def("top_p_support", [=](const std::vector<double>& p, double v) { return topp_support(probs_of(p), v); });
  m.def("typical_support",
        [=](const std::vector<double>& p, double tau) { return typical_support(probs_of(p), tau); });
  m.def("eta_support",
        [=](const std::vector<double>& p, double eps) { return eta_support(probs_of(p), eps); });

  py::class_<LanguageModel, ModelPtr>(m, "LanguageModel")
      .def_property_readonly("vocab_size", [](const LanguageModel& lm) { return lm.info().vocab_size; })
      .def_property_readonly("eos_id", [](const LanguageModel& lm) { return lm.info().eos_id; })
      .def_property_readonly("token_names",
                             [](const LanguageModel& lm) { return lm.info().token_names; })
      .def(
          "next_logits",
          [](const LanguageModel& lm, const TokenSequence& ctx) { return lm.next_logits(ctx); },
          py::arg("context"))
      .def("encode", [](const LanguageModel& lm, const std::string& text) {
        return lm.tokenizer().encode(text);
      })
      .def("decode", [](const LanguageModel& lm, const TokenSequence& tokens) {
        return lm.tokenizer().decode(tokens);
      });

  m.def(
      "table_lm",
      [](std::size_t vocab_size, TokenId eos_id, int order, const TableLM::Table& table) -> ModelPtr {
        return hold(std::make_shared<const TableLM>(vocab_size, eos_id, order, table));
      },
      py::arg("vocab_size"), py::arg("eos_id"), py::arg("order"), py::arg("table"),
      "table maps context tuples to probability lists; the empty tuple is required.");
  m.def(
      "train_ngram",
      [](const std::vector<std::string>& texts, int order, double k,
         const std::string& tokenizer) -> ModelPtr {
        return hold(std::make_shared<const NGramLM>(
            train_ngram(texts, order, k, parse_tokenizer_kind(tokenizer))));
      },
      py::arg("texts"), py::arg("order") = 3, py::arg("smoothing_k") = 0.1,
      py::arg("tokenizer") = "whitespace");
  m.def(
      "cache_lm",
      [](const ModelPtr& base, double lambda, std::size_t window) -> ModelPtr {
        return hold(std::make_shared<const CacheLM>(base, lambda, window));
      },
      py::arg("base"), py::arg("lam"), py::arg("window"));
  m.def(
      "load_model", [](const std::filesystem::path& p) -> ModelPtr { return hold(load_model(p)); },
      py::arg("path"));
  m.def(
      "save_model", [](const ModelPtr& model, const std::filesystem::path& p) { save_model(*model, p); },
      py::arg("model"), py::arg("path"));

  m.def(
      "_generate",
      [](const ModelPtr& model, const TokenSequence& prefix, const std::string& decoder_json,
         std::size_t max_new_tokens, std::uint64_t seed, const std::vector<int>& ks) {
        GenerationRecord r;
        {
          py::gil_scoped_release release;
          r = generate_json(model, prefix, decoder_json, max_new_tokens, seed, ks);
        }
        return record_to_dict(r);
      },
      py::arg("model"), py::arg("prefix"), py::arg("decoder_json"), py::arg("max_new_tokens"),
      py::arg("seed"), py::arg("nucleus_ks"));
  m.def("strategy_label", [](const std::string& decoder_json) {
    return label(decoder_from_json(nlohmann::json::parse(decoder_json)).strategy);
  });

  m.def(
      "sr_ngram",
      [](const TokenSequence& tokens, const std::vector<double>& probs, int n) {
        return sr_ngram(tokens, probs, n);
      },
      py::arg("tokens"), py::arg("raw_probs"), py::arg("n"));
  m.def(
      "sr_nucleus", [](const std::vector<double>& ns) { return sr_nucleus(ns); }, py::arg("ns"));
  m.def(
      "rep_n", [](const TokenSequence& tokens, int n) { return rep_n(tokens, n); },
      py::arg("tokens"), py::arg("n"));
  m.def(
      "diversity", [](const TokenSequence& tokens) { return diversity(tokens); },
      py::arg("tokens"));
  m.def(
      "coherence",
      [](const ModelPtr& scorer, const TokenSequence& prefix, const TokenSequence& generated) {
        return coherence(*scorer, prefix, generated);
      },
      py::arg("scorer"), py::arg("prefix"), py::arg("generated"));

  m.def(
      "_run_spec",
      [](const std::filesystem::path& spec, std::size_t jobs) {
        ExperimentOutput out;
        {
          py::gil_scoped_release release;
          out = run_spec(spec, jobs);
        }
        return py::make_tuple(out.csv, out.json, out.manifest);
      },
      py::arg("spec"), py::arg("jobs") = 0);

  m.attr("ENGINE_VERSION") = kEngineVersion;
}
