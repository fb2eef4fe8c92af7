#pragma once

#include "json.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace homog {

/// Scientific notation with 15 significant digits, '.' decimal separator.
std::string format_real(double v);

/// 64-bit FNV-1a, rendered as 16 hex digits.
std::string fnv1a_hex(std::string_view bytes);

/// One metric observation. Reports are long-format: (series, parameter, metric).
struct ReportRow {
  std::string series;
  std::string parameter;
  double parameter_value = 0.0;
  std::string metric;
  double value = 0.0;
};

struct Verdict {
  enum class Status { pass, fail, not_asserted };
  std::string rule;
  double observed = 0.0;
  double threshold = 0.0;
  Status status = Status::not_asserted;
};

struct ExperimentReport {
  std::string experiment;
  std::string config_hash;
  std::vector<ReportRow> rows;
  std::vector<Verdict> verdicts;
  nlohmann::json extras = nlohmann::json::object();
  double runtime_seconds = 0.0;

  void add(std::string series, std::string parameter, double parameter_value, std::string metric,
           double value);
  void assert_rule(std::string rule, double observed, double threshold, bool pass);
  void note_rule(std::string rule, double observed, double threshold);
  bool all_passed() const;
};

/// RFC-4180 CSV: config_hash,series,parameter,parameter_value,metric,value.
std::string to_csv(const ExperimentReport& report);
nlohmann::json verdicts_json(const ExperimentReport& report);
/// gnuplot script that plots every metric of report.csv against its parameter.
std::string plot_script(const ExperimentReport& report, const std::string& csv_name);

/// Writes report.csv, verdict.json, timing.json and (optionally) plot.gp into dir.
void write_report(const std::filesystem::path& dir, const ExperimentReport& report, bool plot = true);

/// True when the sequence never increases, except for at most `allowed_wobbles` steps
/// that grow by no more than `wobble` relative. Pairs below `floor` count as flat.
bool non_increasing_with_wobble(const std::vector<double>& values, double wobble = 0.10,
                                int allowed_wobbles = 1, double floor = 0.0);

}  // namespace homog
