#include "homog/report.hpp"

#include "homog/types.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

namespace homog {

std::string format_real(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.14e", v);
  return buf;
}

std::string fnv1a_hex(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

void ExperimentReport::add(std::string series, std::string parameter, double parameter_value,
                           std::string metric, double value) {
  if (!std::isfinite(value)) throw std::runtime_error("non-finite metric " + metric);
  rows.push_back({std::move(series), std::move(parameter), parameter_value, std::move(metric), value});
}

void ExperimentReport::assert_rule(std::string rule, double observed, double threshold, bool pass) {
  verdicts.push_back({std::move(rule), observed, threshold,
                      pass ? Verdict::Status::pass : Verdict::Status::fail});
}

void ExperimentReport::note_rule(std::string rule, double observed, double threshold) {
  verdicts.push_back({std::move(rule), observed, threshold, Verdict::Status::not_asserted});
}

bool ExperimentReport::all_passed() const {
  for (const auto& v : verdicts)
    if (v.status == Verdict::Status::fail) return false;
  return true;
}

namespace {

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

const char* status_name(Verdict::Status s) {
  switch (s) {
    case Verdict::Status::pass:
      return "pass";
    case Verdict::Status::fail:
      return "fail";
    case Verdict::Status::not_asserted:
      return "not-asserted";
  }
  return "not-asserted";
}

}  // namespace

std::string to_csv(const ExperimentReport& report) {
  std::ostringstream os;
  os << "config_hash,series,parameter,parameter_value,metric,value\r\n";
  for (const auto& r : report.rows) {
    os << csv_field(report.config_hash) << ',' << csv_field(r.series) << ',' << csv_field(r.parameter)
       << ',' << format_real(r.parameter_value) << ',' << csv_field(r.metric) << ','
       << format_real(r.value) << "\r\n";
  }
  return os.str();
}

nlohmann::json verdicts_json(const ExperimentReport& report) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& v : report.verdicts) {
    nlohmann::json j;
    j["rule"] = v.rule;
    j["observed"] = v.observed;
    j["threshold"] = v.threshold;
    if (v.status == Verdict::Status::not_asserted)
      j["pass"] = nullptr;
    else
      j["pass"] = v.status == Verdict::Status::pass;
    j["status"] = status_name(v.status);
    arr.push_back(std::move(j));
  }
  return arr;
}

std::string plot_script(const ExperimentReport& report, const std::string& csv_name) {
  std::set<std::pair<std::string, std::string>> series;
  for (const auto& r : report.rows) series.insert({r.series, r.metric});
  std::ostringstream os;
  os << "# gnuplot script for " << report.experiment << " (config " << report.config_hash << ")\n";
  os << "set datafile separator ','\n";
  os << "set logscale xy\nset key outside\nset terminal pngcairo size 1000,700\n";
  os << "set output '" << report.experiment << ".png'\n";
  if (series.empty()) {
    os << "# no rows\n";
    return os.str();
  }
  os << "plot \\\n";
  std::size_t i = 0;
  for (const auto& [s, m] : series) {
    os << "  '< awk -F, \"\\$2==\\\"" << s << "\\\" && \\$5==\\\"" << m << "\\\"\" " << csv_name
       << "' using 4:(abs($6)) with linespoints title '" << s << ":" << m << "'";
    os << (++i < series.size() ? ", \\\n" : "\n");
  }
  return os.str();
}

void write_report(const std::filesystem::path& dir, const ExperimentReport& report, bool plot) {
  std::filesystem::create_directories(dir);
  auto write = [&](const std::string& name, const std::string& text) {
    std::ofstream os(dir / name, std::ios::binary);
    if (!os) throw ConfigError("cannot write " + (dir / name).string());
    os << text;
  };
  write("report.csv", to_csv(report));
  nlohmann::json verdict;
  verdict["experiment"] = report.experiment;
  verdict["config_hash"] = report.config_hash;
  verdict["verdicts"] = verdicts_json(report);
  verdict["pass"] = report.all_passed();
  if (!report.extras.empty()) verdict["results"] = report.extras;
  write("verdict.json", verdict.dump(2) + "\n");
  if (plot) write("plot.gp", plot_script(report, "report.csv"));
  nlohmann::json timing;
  timing["runtime_seconds"] = report.runtime_seconds;
  write("timing.json", timing.dump(2) + "\n");
}

bool non_increasing_with_wobble(const std::vector<double>& values, double wobble,
                                int allowed_wobbles, double floor) {
  int wobbles = 0;
  for (std::size_t i = 1; i < values.size(); ++i) {
    const double prev = values[i - 1], cur = values[i];
    if (cur <= prev) continue;
    if (cur <= floor && prev <= floor) continue;
    if (cur <= prev * (1.0 + wobble) && wobbles < allowed_wobbles) {
      ++wobbles;
      continue;
    }
    return false;
  }
  return true;
}

}  // namespace homog
