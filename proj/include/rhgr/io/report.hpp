#pragma once

// Metric report emission: rows carrying provenance hashes, written as CSV and
// JSON with identical values.

#include <cmath>
#include <filesystem>
#include <fstream>
#include <vector>

#include <json.hpp>

#include "rhgr/core.hpp"

namespace rhgr::io {

struct ReportRow {
  std::string experiment;
  std::string metric;
  double value = 0.0;
  double std_dev = 0.0;
  std::string config_hash;
  std::string input_hash;
};

// Writes rows as <stem>.csv and <stem>.json. Values must be finite.
inline void emit_report(const std::vector<ReportRow>& rows,
                        const std::filesystem::path& stem) {
  if (rows.empty()) throw DataError("emit_report: no rows to emit");
  for (const auto& r : rows)
    if (!std::isfinite(r.value) || !std::isfinite(r.std_dev))
      throw NumericError("emit_report: non-finite value in metric " + r.metric);

  std::filesystem::path csv_path = stem;
  csv_path += ".csv";
  std::ofstream csv(csv_path, std::ios::trunc);
  if (!csv) throw DataError("emit_report: cannot open " + csv_path.string());
  csv.precision(17);
  csv << "experiment,metric,value,std,config_hash,input_hash\n";
  for (const auto& r : rows)
    csv << r.experiment << ',' << r.metric << ',' << r.value << ',' << r.std_dev
        << ',' << r.config_hash << ',' << r.input_hash << '\n';

  nlohmann::json j = nlohmann::json::array();
  for (const auto& r : rows)
    j.push_back({{"experiment", r.experiment},
                 {"metric", r.metric},
                 {"value", r.value},
                 {"std", r.std_dev},
                 {"config_hash", r.config_hash},
                 {"input_hash", r.input_hash}});
  std::filesystem::path json_path = stem;
  json_path += ".json";
  std::ofstream js(json_path, std::ios::trunc);
  if (!js) throw DataError("emit_report: cannot open " + json_path.string());
  js << j.dump(2) << '\n';
}

inline std::vector<ReportRow> read_report_csv(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw DataError("read_report_csv: cannot open " + path.string());
  std::vector<ReportRow> rows;
  std::string line;
  std::getline(is, line);  // header
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string f;
    while (std::getline(ss, f, ',')) fields.push_back(f);
    if (fields.size() != 6)
      throw FormatError("read_report_csv: malformed row '" + line + "'");
    rows.push_back({fields[0], fields[1], std::stod(fields[2]), std::stod(fields[3]),
                    fields[4], fields[5]});
  }
  return rows;
}

inline std::vector<ReportRow> read_report_json(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw DataError("read_report_json: cannot open " + path.string());
  nlohmann::json j = nlohmann::json::parse(is, nullptr, false);
  if (j.is_discarded() || !j.is_array())
    throw FormatError("read_report_json: unparseable report in " + path.string());
  std::vector<ReportRow> rows;
  for (const auto& e : j)
    rows.push_back({e.at("experiment"), e.at("metric"), e.at("value"), e.at("std"),
                    e.at("config_hash"), e.at("input_hash")});
  return rows;
}

}  // namespace rhgr::io
