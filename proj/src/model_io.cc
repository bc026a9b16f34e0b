#include "pendec/model_io.h"

#include <fstream>

namespace pendec {

using nlohmann::json;

json model_to_json(const LanguageModel& model) {
  json j;
  j["format"] = "pendec-model";
  j["version"] = kModelFormatVersion;
  j["vocab"] = model.info().token_names;
  j["eos_id"] = model.info().eos_id;

  if (const auto* table = dynamic_cast<const TableLM*>(&model)) {
    j["kind"] = "table";
    j["order"] = table->order();
    json entries = json::array();
    for (const auto& [ctx, dist] : table->table()) {
      entries.push_back({{"context", ctx}, {"probs", dist}});
    }
    j["table"] = std::move(entries);
    return j;
  }
  if (const auto* ngram = dynamic_cast<const NGramLM*>(&model)) {
    j["kind"] = "ngram";
    j["order"] = ngram->order();
    j["smoothing_k"] = ngram->smoothing_k();
    j["tokenizer"] = to_string(ngram->tokenizer().kind());
    json levels = json::array();
    for (const auto& level : ngram->counts()) {
      json rows = json::array();
      for (const auto& [ctx, cc] : level) {
        json next = json::array();
        for (const auto& [tok, c] : cc.next) next.push_back({tok, c});
        rows.push_back({{"context", ctx}, {"next", std::move(next)}});
      }
      levels.push_back(std::move(rows));
    }
    j["counts"] = std::move(levels);
    return j;
  }
  if (const auto* cache = dynamic_cast<const CacheLM*>(&model)) {
    j["kind"] = "cache";
    j["lambda"] = cache->lambda();
    j["window"] = cache->window();
    j["base"] = model_to_json(cache->base());
    return j;
  }
  throw Error("model type has no serialized form");
}

std::unique_ptr<LanguageModel> model_from_json(const json& j) {
  try {
    if (j.at("format") != "pendec-model") throw Error("not a pendec model file");
    const int version = j.at("version").get<int>();
    if (version != kModelFormatVersion) {
      throw Error("unsupported model format version " + std::to_string(version));
    }
    auto vocab = j.at("vocab").get<std::vector<std::string>>();
    const auto eos_id = j.at("eos_id").get<TokenId>();
    const auto kind = j.at("kind").get<std::string>();

    if (kind == "table") {
      TableLM::Table table;
      for (const auto& e : j.at("table")) {
        table.emplace(e.at("context").get<TokenSequence>(), e.at("probs").get<std::vector<double>>());
      }
      const std::size_t vocab_size = vocab.size();
      return std::make_unique<TableLM>(vocab_size, eos_id, j.at("order").get<int>(),
                                       std::move(table), std::move(vocab));
    }
    if (kind == "ngram") {
      Tokenizer tok(parse_tokenizer_kind(j.at("tokenizer").get<std::string>()), std::move(vocab),
                    eos_id);
      NGramLM::CountTable counts;
      for (const auto& level : j.at("counts")) {
        auto& out = counts.emplace_back();
        for (const auto& row : level) {
          ContextCounts cc;
          for (const auto& pair : row.at("next")) {
            const auto tok_id = pair.at(0).get<TokenId>();
            const auto c = pair.at(1).get<std::uint64_t>();
            cc.next[tok_id] = c;
            cc.total += c;
          }
          out.emplace(row.at("context").get<TokenSequence>(), std::move(cc));
        }
      }
      return std::make_unique<NGramLM>(j.at("order").get<int>(), j.at("smoothing_k").get<double>(),
                                       std::move(tok), std::move(counts));
    }
    if (kind == "cache") {
      std::shared_ptr<const LanguageModel> base = model_from_json(j.at("base"));
      return std::make_unique<CacheLM>(std::move(base), j.at("lambda").get<double>(),
                                       j.at("window").get<std::size_t>());
    }
    throw Error("unknown model kind '" + kind + "'");
  } catch (const json::exception& e) {
    throw Error(std::string("malformed model file: ") + e.what());
  }
}

void save_model(const LanguageModel& model, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot open '" + path.string() + "' for writing");
  out << model_to_json(model).dump() << '\n';
  if (!out) throw Error("failed writing '" + path.string() + "'");
}

std::unique_ptr<LanguageModel> load_model(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot read model file '" + path.string() + "'");
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw Error("'" + path.string() + "' is not valid JSON: " + e.what());
  }
  return model_from_json(j);
}

}  // namespace pendec
