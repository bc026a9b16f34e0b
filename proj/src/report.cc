#include <cmath>
#include <fstream>
#include <sstream>

#include <fmt/format.h>

#include "pendec/harness.h"

namespace pendec {

using nlohmann::json;

namespace {

// Non-finite values have no JSON number form; they travel as strings.
json number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  return v;
}

double number_from(const json& j) {
  if (j.is_number()) return j.get<double>();
  const auto s = j.get<std::string>();
  if (s == "nan") return std::nan("");
  if (s == "inf") return INFINITY;
  if (s == "-inf") return -INFINITY;
  throw Error("not a number: '" + s + "'");
}

json int_map(const std::map<int, double>& m) {
  json j = json::object();
  for (const auto& [k, v] : m) j[std::to_string(k)] = number(v);
  return j;
}

std::map<int, double> int_map_from(const json& j) {
  std::map<int, double> m;
  for (const auto& [k, v] : j.items()) m[std::stoi(k)] = number_from(v);
  return m;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

bool has_external(const ResultsTable& table) {
  for (const auto& r : table.rows) {
    if (r.external) return true;
  }
  return false;
}

double sr_value(const std::map<int, double>& m, int key) {
  auto it = m.find(key);
  return it == m.end() ? std::nan("") : it->second;
}

}  // namespace

std::string format_metric(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  return fmt::format("{:.4f}", v);
}

std::string to_csv(const ResultsTable& table) {
  const bool external = has_external(table);
  std::string out = "method,diversity,coherence,greedy_ratio,gen_length,sr_1,sr_2,sr_3,sr_4";
  for (int k : table.metric_ks) out += fmt::format(",sr_topk_{}", k);
  if (external) out += ",external";
  out += '\n';
  for (const auto& r : table.rows) {
    out += csv_field(r.method);
    for (double v : {r.quality.diversity, r.quality.coherence, r.quality.greedy_ratio,
                     r.quality.gen_length}) {
      out += ',' + format_metric(v);
    }
    for (int n = 1; n <= 4; ++n) out += ',' + format_metric(sr_value(r.sr.sr_n, n));
    for (int k : table.metric_ks) out += ',' + format_metric(sr_value(r.sr.sr_topk, k));
    if (external) out += ',' + (r.external ? format_metric(*r.external) : std::string());
    out += '\n';
  }
  return out;
}

json to_json(const ResultsTable& table) {
  json rows = json::array();
  for (const auto& r : table.rows) {
    json curve = json::object();
    for (const auto& [k, values] : r.sr.ns_curve) {
      json arr = json::array();
      for (double v : values) arr.push_back(number(v));
      curve[std::to_string(k)] = std::move(arr);
    }
    rows.push_back({
        {"method", r.method},
        {"config", r.config},
        {"records", r.records},
        {"quality",
         {{"diversity", number(r.quality.diversity)},
          {"rep_n", int_map(r.quality.rep_n)},
          {"coherence", number(r.quality.coherence)},
          {"greedy_ratio", number(r.quality.greedy_ratio)},
          {"gen_length", number(r.quality.gen_length)}}},
        {"self_reinforcement",
         {{"sr_n", int_map(r.sr.sr_n)}, {"sr_topk", int_map(r.sr.sr_topk)}, {"ns_curve", curve}}},
        {"external", r.external ? number(*r.external) : json(nullptr)},
    });
  }
  return {{"metric_ks", table.metric_ks}, {"rows", std::move(rows)}};
}

ResultsTable table_from_json(const json& j) {
  try {
    ResultsTable table;
    table.metric_ks = j.at("metric_ks").get<std::vector<int>>();
    for (const auto& r : j.at("rows")) {
      ResultsRow row;
      row.method = r.at("method").get<std::string>();
      row.config = r.at("config");
      row.records = r.at("records").get<std::size_t>();
      const auto& q = r.at("quality");
      row.quality.diversity = number_from(q.at("diversity"));
      row.quality.rep_n = int_map_from(q.at("rep_n"));
      row.quality.coherence = number_from(q.at("coherence"));
      row.quality.greedy_ratio = number_from(q.at("greedy_ratio"));
      row.quality.gen_length = number_from(q.at("gen_length"));
      const auto& sr = r.at("self_reinforcement");
      row.sr.sr_n = int_map_from(sr.at("sr_n"));
      row.sr.sr_topk = int_map_from(sr.at("sr_topk"));
      for (const auto& [k, values] : sr.at("ns_curve").items()) {
        auto& curve = row.sr.ns_curve[std::stoi(k)];
        for (const auto& v : values) curve.push_back(number_from(v));
      }
      if (!r.at("external").is_null()) row.external = number_from(r.at("external"));
      table.rows.push_back(std::move(row));
    }
    return table;
  } catch (const json::exception& e) {
    throw Error(std::string("malformed results table: ") + e.what());
  }
}

json to_json(const RunManifest& m) {
  json skipped = json::array();
  for (const auto& s : m.skipped) skipped.push_back({{"id", s.id}, {"reason", s.reason}});
  return {{"engine_version", m.engine_version},
          {"rng", m.rng},
          {"split", m.split},
          {"seeds", m.seeds},
          {"ingested", m.ingested},
          {"processed", m.processed},
          {"skipped_count", m.skipped.size()},
          {"skipped", std::move(skipped)},
          {"malformed_lines", m.malformed_lines},
          {"spec", m.spec}};
}

void write_text(const std::filesystem::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open '" + path.string() + "' for writing");
  out << content;
  out.flush();
  if (!out) throw Error("failed writing '" + path.string() + "'");
}

void emit_report(const ResultsTable& table, ReportFormat format,
                 const std::filesystem::path& path) {
  if (table.rows.empty()) throw Error("refusing to write an empty results table");
  write_text(path, format == ReportFormat::Csv ? to_csv(table) : to_json(table).dump(2) + "\n");
}

std::string summary_table(const ResultsTable& table) {
  std::size_t width = 6;
  for (const auto& r : table.rows) width = std::max(width, r.method.size());
  std::string out = fmt::format("{:<{}}  {:>9}  {:>9}  {:>7}  {:>7}  {:>7}  {:>7}\n", "method",
                                width, "diversity", "coherence", "greedy", "length", "sr_1",
                                "sr_2");
  for (const auto& r : table.rows) {
    out += fmt::format("{:<{}}  {:>9}  {:>9}  {:>7}  {:>7}  {:>7}  {:>7}\n", r.method, width,
                       format_metric(r.quality.diversity), format_metric(r.quality.coherence),
                       format_metric(r.quality.greedy_ratio), format_metric(r.quality.gen_length),
                       format_metric(sr_value(r.sr.sr_n, 1)), format_metric(sr_value(r.sr.sr_n, 2)));
  }
  return out;
}

}  // namespace pendec
