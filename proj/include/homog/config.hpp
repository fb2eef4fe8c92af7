#pragma once

#include "homog/flux.hpp"
#include "homog/solver.hpp"

#include "json.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace homog {

nlohmann::json coefficient_to_json(const CoefficientField& coef);
CoefficientField coefficient_from_json(const nlohmann::json& j, const std::string& path = "operator.coefficient");

/// Defaults for epsilon / alpha / beta follow make_flux_operator; `dim` and `p` are required.
nlohmann::json operator_to_json(const FluxOperator& op);
FluxOperator operator_from_json(const nlohmann::json& j, const std::string& path = "operator");

nlohmann::json solver_to_json(const SolverConfig& config);
SolverConfig solver_from_json(const nlohmann::json& j, const std::string& path = "parameters.solver");

enum class ExperimentKind {
  theorem1,
  theorem1_L1,
  theorem2,
  k_study,
  verify_op,
  verify_b,
  cell_solve,
  homogenize,
  tabulate,
};

std::string kind_name(ExperimentKind kind);
ExperimentKind kind_from_name(const std::string& name);

struct GridSpec {
  int cell_resolution = 64;
  int macro_resolution = 0;  // 0: chosen by the experiment
  int field_resolution = 64;
  int quadrature_order = 2;
};

/// Parsed and validated experiment configuration.
///
/// Top-level keys: experiment, operator, grids, parameters, output. Unknown keys
/// at any level are rejected with a ConfigError naming the offending field.
struct ExperimentConfig {
  ExperimentKind kind = ExperimentKind::cell_solve;
  std::optional<FluxOperator> op;
  GridSpec grids;
  SolverConfig solver;
  nlohmann::json parameters = nlohmann::json::object();
  std::filesystem::path output_dir = "out";
  bool plot = true;
  std::uint64_t seed = 1;
  int threads = 1;
  nlohmann::json canonical;
  std::string hash;

  const FluxOperator& require_operator() const;

  double real(const std::string& key, double fallback) const;
  int integer(const std::string& key, int fallback) const;
  bool flag(const std::string& key, bool fallback) const;
  std::string text(const std::string& key, const std::string& fallback) const;
  std::vector<int> integers(const std::string& key, std::vector<int> fallback) const;
  std::vector<double> reals(const std::string& key, std::vector<double> fallback) const;
  std::vector<std::string> texts(const std::string& key, std::vector<std::string> fallback) const;
  Vec vector(const std::string& key, const Vec& fallback) const;
  std::vector<Vec> vectors(const std::string& key, const std::vector<Vec>& fallback) const;
  bool has(const std::string& key) const { return parameters.contains(key); }
};

/// `seed` is folded into the hash; `threads` is not.
ExperimentConfig parse_config(const nlohmann::json& j, std::uint64_t seed = 1, int threads = 1);
ExperimentConfig load_config(const std::filesystem::path& path, std::uint64_t seed = 1, int threads = 1);

std::string config_hash(const nlohmann::json& canonical, std::uint64_t seed);

}  // namespace homog
