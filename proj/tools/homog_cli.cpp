#include "homog/config.hpp"
#include "homog/experiments.hpp"
#include "homog/homogenizer.hpp"

#include "CLI11.hpp"

#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>

namespace {

enum Exit { ok = 0, verdict_failed = 1, config_error = 2, not_converged = 3 };

struct Subcommand {
  const char* name;
  const char* help;
  homog::ExperimentKind kind;
};

const Subcommand kSubcommands[] = {
    {"cell-solve", "Solve cell problems and write correctors", homog::ExperimentKind::cell_solve},
    {"homogenize", "Evaluate the homogenized flux b(y, tau)", homog::ExperimentKind::homogenize},
    {"tabulate", "Tabulate b over pieces and a tau grid", homog::ExperimentKind::tabulate},
    {"verify-operator", "Sample the structure conditions of a flux operator", homog::ExperimentKind::verify_op},
    {"verify-b", "Sample the properties of the homogenized operator", homog::ExperimentKind::verify_b},
    {"theorem1", "Weak convergence of oscillated fields to their mean", homog::ExperimentKind::theorem1},
    {"theorem1-l1", "Equi-integrability study for L1 families", homog::ExperimentKind::theorem1_L1},
    {"theorem2", "Oscillating problems against the homogenized problem", homog::ExperimentKind::theorem2},
    {"k-study", "Piecewise-frozen approximation in the slow variable", homog::ExperimentKind::k_study},
};

bool compatible(homog::ExperimentKind sub, homog::ExperimentKind cfg) {
  using K = homog::ExperimentKind;
  if (sub == cfg) return true;
  return sub == K::homogenize && cfg == K::cell_solve;
}

std::string one_line(std::string s) {
  for (char& c : s)
    if (c == '\n' || c == '\r') c = ' ';
  return s;
}

int run(const Subcommand& sub, const std::string& config_path, const std::string& out, std::uint64_t seed,
        int threads, bool quiet) {
  std::ifstream in(config_path);
  if (!in) throw homog::ConfigError("cannot open config '" + config_path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw homog::ConfigError("malformed JSON in '" + config_path + "': " + one_line(e.what()));
  }
  if (j.is_object() && !j.contains("experiment")) j["experiment"] = homog::kind_name(sub.kind);
  homog::ExperimentConfig cfg = homog::parse_config(j, seed, threads);
  if (!compatible(sub.kind, cfg.kind))
    throw homog::ConfigError("config experiment '" + homog::kind_name(cfg.kind) + "' does not match subcommand '" +
                             sub.name + "'");
  cfg.kind = sub.kind;
  if (!out.empty()) cfg.output_dir = out;

  const homog::ExperimentReport report = homog::run_experiment(cfg);
  homog::write_report(cfg.output_dir, report, cfg.plot);
  if (!quiet) {
    for (const auto& v : report.verdicts) {
      const char* tag = v.status == homog::Verdict::Status::pass   ? "PASS"
                        : v.status == homog::Verdict::Status::fail ? "FAIL"
                                                                   : "NOTE";
      std::printf("%s %s observed=%s threshold=%s\n", tag, v.rule.c_str(), homog::format_real(v.observed).c_str(),
                  homog::format_real(v.threshold).c_str());
    }
    std::printf("%s: %s (%s)\n", report.experiment.c_str(), report.all_passed() ? "pass" : "fail",
                (cfg.output_dir / "report.csv").string().c_str());
  }
  return report.all_passed() ? ok : verdict_failed;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Periodic homogenization experiments for monotone p-Laplacian flux laws", "homog"};
  app.require_subcommand(1);
  std::string config_path, out;
  std::uint64_t seed = 1;
  int threads = 1;
  bool quiet = false;
  std::map<const CLI::App*, const Subcommand*> lookup;
  for (const Subcommand& s : kSubcommands) {
    CLI::App* c = app.add_subcommand(s.name, s.help);
    c->add_option("--config", config_path, "Experiment config (JSON)")->required();
    c->add_option("--out", out, "Output directory (overrides output.directory)");
    c->add_option("--seed", seed, "Run seed");
    c->add_option("--threads", threads, "Worker threads")->check(CLI::PositiveNumber);
    c->add_flag("--quiet", quiet, "Only set the exit code");
    lookup[c] = &s;
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? ok : config_error;
  }
  const Subcommand* sub = nullptr;
  for (const auto& [c, s] : lookup)
    if (c->parsed()) sub = s;

  try {
    return run(*sub, config_path, out, seed, threads, quiet);
  } catch (const homog::ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", one_line(e.what()).c_str());
    return config_error;
  } catch (const nlohmann::json::exception& e) {
    std::fprintf(stderr, "config error: %s\n", one_line(e.what()).c_str());
    return config_error;
  } catch (const homog::OutOfTableRange& e) {
    std::fprintf(stderr, "config error: %s\n", one_line(e.what()).c_str());
    return config_error;
  } catch (const homog::NotConverged& e) {
    std::fprintf(stderr, "not converged: %s\n", one_line(e.what()).c_str());
    return not_converged;
  } catch (const homog::SingularLinearization& e) {
    std::fprintf(stderr, "not converged: %s\n", one_line(e.what()).c_str());
    return not_converged;
  } catch (const homog::MonotonicityViolation& e) {
    std::fprintf(stderr, "verdict failed: %s\n", one_line(e.what()).c_str());
    return verdict_failed;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", one_line(e.what()).c_str());
    return verdict_failed;
  }
}
