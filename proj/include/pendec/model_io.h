#pragma once

#include <filesystem>
#include <memory>

#include <nlohmann/json.hpp>

#include "pendec/models.h"

namespace pendec {

// Versioned JSON dump of a TableLM or NGramLM. Counts and table entries are
// stored exactly (doubles use round-trip formatting), so
// load(save(m)).next_logits(c) == m.next_logits(c) bit for bit.
//
//   {"format": "pendec-model", "version": 1, "kind": "ngram" | "table", ...}
inline constexpr int kModelFormatVersion = 1;

nlohmann::json model_to_json(const LanguageModel& model);
std::unique_ptr<LanguageModel> model_from_json(const nlohmann::json& j);

void save_model(const LanguageModel& model, const std::filesystem::path& path);
std::unique_ptr<LanguageModel> load_model(const std::filesystem::path& path);

}  // namespace pendec
