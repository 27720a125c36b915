#pragma once

// Per-angle accuracy reports. The CSV is the canonical artifact:
//   # sortconv-report v1
//   variant,angle_deg,accuracy,samples
// A JSON mirror carries the same rows plus run metadata. Readers reject
// unknown major versions.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "sortconv/dataset.hpp"  // DataError

namespace sortconv {

inline constexpr int kReportMajorVersion = 1;
inline constexpr const char* kCodeVersion = "sortconv 1.0";

struct AngleAccuracy {
  int angle_deg = 0;
  double accuracy = 0.0;
  std::int64_t samples = 0;
};

struct RunReport {
  std::string variant;
  std::vector<AngleAccuracy> rows;
  std::string config_echo;  // free-form (JSON string for CLI runs)
  double elapsed_seconds = 0.0;
  std::uint64_t seed = 0;

  // Mean of per-angle accuracies; equals the pooled accuracy when every
  // angle subset has the same size.
  double aggregate() const {
    if (rows.empty()) return 0.0;
    double s = 0.0;
    for (const auto& r : rows) s += r.accuracy;
    return s / static_cast<double>(rows.size());
  }

  double spread() const {
    if (rows.empty()) return 0.0;
    double lo = rows[0].accuracy, hi = rows[0].accuracy;
    for (const auto& r : rows) {
      lo = std::min(lo, r.accuracy);
      hi = std::max(hi, r.accuracy);
    }
    return hi - lo;
  }
};

inline void write_report_csv(const std::string& path, const RunReport& report) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot create report: " + path);
  out << "# sortconv-report v" << kReportMajorVersion << "\n";
  out << "variant,angle_deg,accuracy,samples\n";
  for (const auto& r : report.rows)
    out << report.variant << ',' << r.angle_deg << ',' << r.accuracy << ',' << r.samples << '\n';
}

inline void write_report_json(const std::string& path, const RunReport& report) {
  nlohmann::json j;
  j["schema_version"] = kReportMajorVersion;
  j["code_version"] = kCodeVersion;
  j["variant"] = report.variant;
  j["seed"] = report.seed;
  j["elapsed_seconds"] = report.elapsed_seconds;
  j["aggregate_accuracy"] = report.aggregate();
  if (!report.config_echo.empty()) {
    auto parsed = nlohmann::json::parse(report.config_echo, nullptr, false);
    j["config"] = parsed.is_discarded() ? nlohmann::json(report.config_echo) : parsed;
  }
  j["rows"] = nlohmann::json::array();
  for (const auto& r : report.rows)
    j["rows"].push_back({{"angle_deg", r.angle_deg},
                         {"accuracy", r.accuracy},
                         {"samples", r.samples}});
  std::ofstream out(path);
  if (!out) throw DataError("cannot create report: " + path);
  out << j.dump(2) << '\n';
}

// Reads rows from one report CSV (variant taken from the rows themselves, so
// merged files read back fine).
inline std::vector<std::pair<std::string, AngleAccuracy>> read_report_csv(
    const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open report: " + path);
  std::string line;
  if (!std::getline(in, line)) throw DataError("report parse error: empty file " + path);
  const std::string prefix = "# sortconv-report v";
  if (line.rfind(prefix, 0) != 0)
    throw DataError("report parse error: missing schema line in " + path);
  const int major = std::atoi(line.c_str() + prefix.size());
  if (major != kReportMajorVersion)
    throw DataError("report parse error: unsupported schema version " + std::to_string(major) +
                    " in " + path);
  if (!std::getline(in, line) || line != "variant,angle_deg,accuracy,samples")
    throw DataError("report parse error: unexpected header in " + path);
  std::vector<std::pair<std::string, AngleAccuracy>> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::string variant, angle, acc, samples;
    if (!std::getline(ss, variant, ',') || !std::getline(ss, angle, ',') ||
        !std::getline(ss, acc, ',') || !std::getline(ss, samples))
      throw DataError("report parse error: malformed row '" + line + "' in " + path);
    AngleAccuracy a;
    a.angle_deg = std::stoi(angle);
    a.accuracy = std::stod(acc);
    a.samples = std::stoll(samples);
    rows.emplace_back(variant, a);
  }
  return rows;
}

// Merges report CSVs into one plot-ready CSV: one row per (variant, angle),
// deduplicated (later files win), sorted by variant then angle. Empty input
// produces a header-only file.
inline void merge_reports_csv(const std::vector<std::string>& inputs, const std::string& out_path) {
  std::map<std::pair<std::string, int>, AngleAccuracy> merged;
  for (const auto& path : inputs)
    for (auto& [variant, row] : read_report_csv(path)) merged[{variant, row.angle_deg}] = row;
  std::ofstream out(out_path);
  if (!out) throw DataError("cannot create merged report: " + out_path);
  out << "# sortconv-report v" << kReportMajorVersion << "\n";
  out << "variant,angle_deg,accuracy,samples\n";
  for (const auto& [key, row] : merged)
    out << key.first << ',' << row.angle_deg << ',' << row.accuracy << ',' << row.samples << '\n';
}

}  // namespace sortconv
