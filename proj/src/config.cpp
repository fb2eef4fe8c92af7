#include "homog/config.hpp"

#include "homog/report.hpp"

#include <algorithm>
#include <fstream>
#include <set>

namespace homog {

using nlohmann::json;

namespace {

void reject_unknown(const json& j, const std::string& path, std::initializer_list<const char*> allowed) {
  if (!j.is_object()) throw ConfigError("'" + path + "' must be an object");
  for (const auto& [key, _] : j.items()) {
    const bool known = std::any_of(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; });
    if (!known) throw ConfigError("unknown field '" + path + "." + key + "'");
  }
}

const json& require(const json& j, const std::string& path, const char* key) {
  if (!j.contains(key)) throw ConfigError("missing required field '" + path + "." + key + "'");
  return j.at(key);
}

double as_real(const json& v, const std::string& name) {
  if (!v.is_number()) throw ConfigError("field '" + name + "' must be a number");
  return v.get<double>();
}

int as_int(const json& v, const std::string& name) {
  if (!v.is_number_integer()) throw ConfigError("field '" + name + "' must be an integer");
  return v.get<int>();
}

std::vector<double> as_reals(const json& v, const std::string& name) {
  if (!v.is_array()) throw ConfigError("field '" + name + "' must be an array of numbers");
  std::vector<double> out;
  for (std::size_t i = 0; i < v.size(); ++i) out.push_back(as_real(v[i], name + "[" + std::to_string(i) + "]"));
  return out;
}

std::vector<int> as_ints(const json& v, const std::string& name) {
  if (!v.is_array()) throw ConfigError("field '" + name + "' must be an array of integers");
  std::vector<int> out;
  for (std::size_t i = 0; i < v.size(); ++i) out.push_back(as_int(v[i], name + "[" + std::to_string(i) + "]"));
  return out;
}

double real_or(const json& j, const std::string& path, const char* key, double fallback) {
  return j.contains(key) ? as_real(j.at(key), path + "." + key) : fallback;
}

int int_or(const json& j, const std::string& path, const char* key, int fallback) {
  return j.contains(key) ? as_int(j.at(key), path + "." + key) : fallback;
}

const char* pattern_name(CoefficientField::ZPattern p) {
  switch (p) {
    case CoefficientField::ZPattern::constant: return "constant";
    case CoefficientField::ZPattern::laminate: return "laminate";
    case CoefficientField::ZPattern::checkerboard: return "checkerboard";
    case CoefficientField::ZPattern::trig: return "trig";
  }
  return "constant";
}

const char* modulation_name(CoefficientField::YModulation m) {
  switch (m) {
    case CoefficientField::YModulation::none: return "none";
    case CoefficientField::YModulation::smooth: return "smooth";
    case CoefficientField::YModulation::piecewise: return "piecewise";
  }
  return "none";
}

const std::set<std::string> kParameterKeys{
    "check_rotation", "constant",        "family",        "field",         "h_list",
    "held_out",       "k_list",          "modulus_samples", "random_fields", "rate_bounds",
    "rate_test",      "rotation_samples", "samples",       "solver",        "table_k",
    "tau",            "tau_box",         "tau_resolution", "tau_samples",   "tau_scale",
    "test_bank",      "thresholds",      "tolerance",     "truncation",    "two_guess",
    "xi",             "y",               "y_samples",     "expected_b",    "b_tolerance",
    "use_table",      "dim",             "reference",             "on_demand",     "save_fields",
};

void check_increasing(const json& params, const char* key) {
  if (!params.contains(key)) return;
  const std::string name = std::string("parameters.") + key;
  const std::vector<int> v = as_ints(params.at(key), name);
  if (v.empty()) throw ConfigError("field '" + name + "' must not be empty");
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (v[i] < 1) throw ConfigError("field '" + name + "' entries must be >= 1");
    if (i > 0 && v[i] <= v[i - 1]) throw ConfigError("field '" + name + "' must be strictly increasing");
  }
}

}  // namespace

json coefficient_to_json(const CoefficientField& c) {
  return {{"pattern", pattern_name(c.pattern)},
          {"levels", c.levels},
          {"fraction", c.laminate_fraction},
          {"axis", c.laminate_axis},
          {"trig_amplitude", c.trig_amplitude},
          {"modulation", modulation_name(c.modulation)},
          {"modulation_amplitude", c.modulation_amplitude},
          {"piece_breaks", c.piece_breaks},
          {"piece_scales", c.piece_scales}};
}

CoefficientField coefficient_from_json(const json& j, const std::string& path) {
  reject_unknown(j, path, {"pattern", "levels", "fraction", "axis", "trig_amplitude", "modulation",
                           "modulation_amplitude", "piece_breaks", "piece_scales"});
  CoefficientField c;
  const std::string pattern = j.value("pattern", "constant");
  if (pattern == "constant") {
    c.pattern = CoefficientField::ZPattern::constant;
  } else if (pattern == "laminate") {
    c.pattern = CoefficientField::ZPattern::laminate;
  } else if (pattern == "checkerboard") {
    c.pattern = CoefficientField::ZPattern::checkerboard;
  } else if (pattern == "trig") {
    c.pattern = CoefficientField::ZPattern::trig;
  } else {
    throw ConfigError("field '" + path + ".pattern' has unknown value '" + pattern + "'");
  }
  if (j.contains("levels")) c.levels = as_reals(j.at("levels"), path + ".levels");
  else if (c.pattern == CoefficientField::ZPattern::laminate || c.pattern == CoefficientField::ZPattern::checkerboard)
    throw ConfigError("missing required field '" + path + ".levels'");
  c.laminate_fraction = real_or(j, path, "fraction", c.laminate_fraction);
  c.laminate_axis = int_or(j, path, "axis", c.laminate_axis);
  c.trig_amplitude = real_or(j, path, "trig_amplitude", c.trig_amplitude);
  const std::string modulation = j.value("modulation", "none");
  if (modulation == "none") {
    c.modulation = CoefficientField::YModulation::none;
  } else if (modulation == "smooth") {
    c.modulation = CoefficientField::YModulation::smooth;
  } else if (modulation == "piecewise") {
    c.modulation = CoefficientField::YModulation::piecewise;
  } else {
    throw ConfigError("field '" + path + ".modulation' has unknown value '" + modulation + "'");
  }
  c.modulation_amplitude = real_or(j, path, "modulation_amplitude", c.modulation_amplitude);
  if (j.contains("piece_breaks")) c.piece_breaks = as_reals(j.at("piece_breaks"), path + ".piece_breaks");
  if (j.contains("piece_scales")) c.piece_scales = as_reals(j.at("piece_scales"), path + ".piece_scales");
  try {
    c.validate();
  } catch (const ConfigError& e) {
    throw ConfigError(path + ": " + e.what());
  }
  return c;
}

json operator_to_json(const FluxOperator& op) {
  return {{"dim", op.dim},     {"p", op.p},   {"epsilon", op.epsilon}, {"alpha", op.alpha},
          {"beta", op.beta},   {"c1", op.c1}, {"c2", op.c2},           {"coefficient", coefficient_to_json(op.coefficient)}};
}

FluxOperator operator_from_json(const json& j, const std::string& path) {
  reject_unknown(j, path, {"dim", "p", "epsilon", "alpha", "beta", "c1", "c2", "coefficient"});
  const int dim = as_int(require(j, path, "dim"), path + ".dim");
  const double p = as_real(require(j, path, "p"), path + ".p");
  if (dim != 1 && dim != 2) throw ConfigError("field '" + path + ".dim' must be 1 or 2");
  if (!(p > 1.0)) throw ConfigError("field '" + path + ".p' must be > 1");
  CoefficientField coef = j.contains("coefficient") ? coefficient_from_json(j.at("coefficient"), path + ".coefficient")
                                                    : CoefficientField{};
  FluxOperator op;
  op.dim = dim;
  op.coefficient = std::move(coef);
  op.p = p;
  op.alpha = real_or(j, path, "alpha", std::min(1.0, p - 1.0));
  op.beta = real_or(j, path, "beta", std::max(p, 2.0));
  op.epsilon = real_or(j, path, "epsilon", p == 2.0 ? 0.0 : 1e-8);
  op.c1 = real_or(j, path, "c1", op.c1);
  op.c2 = real_or(j, path, "c2", op.c2);
  try {
    op.validate();
  } catch (const ConfigError& e) {
    throw ConfigError(path + ": " + e.what());
  }
  return op;
}

std::string operator_hash(const FluxOperator& op) { return fnv1a_hex(operator_to_json(op).dump()); }

json solver_to_json(const SolverConfig& s) {
  return {{"residual_tol", s.residual_tol}, {"max_newton", s.max_newton},       {"armijo", s.armijo},
          {"backtrack", s.backtrack},       {"max_halvings", s.max_halvings},   {"linear_tol", s.linear_tol},
          {"linear_max_iter", s.linear_max_iter}, {"picard_after", s.picard_after}};
}

SolverConfig solver_from_json(const json& j, const std::string& path) {
  reject_unknown(j, path, {"residual_tol", "max_newton", "armijo", "backtrack", "max_halvings", "linear_tol",
                           "linear_max_iter", "picard_after"});
  SolverConfig s;
  s.residual_tol = real_or(j, path, "residual_tol", s.residual_tol);
  s.max_newton = int_or(j, path, "max_newton", s.max_newton);
  s.armijo = real_or(j, path, "armijo", s.armijo);
  s.backtrack = real_or(j, path, "backtrack", s.backtrack);
  s.max_halvings = int_or(j, path, "max_halvings", s.max_halvings);
  s.linear_tol = real_or(j, path, "linear_tol", s.linear_tol);
  s.linear_max_iter = int_or(j, path, "linear_max_iter", s.linear_max_iter);
  s.picard_after = int_or(j, path, "picard_after", s.picard_after);
  try {
    s.validate();
  } catch (const ConfigError& e) {
    throw ConfigError(path + ": " + e.what());
  }
  return s;
}

std::string kind_name(ExperimentKind kind) {
  switch (kind) {
    case ExperimentKind::theorem1: return "theorem1";
    case ExperimentKind::theorem1_L1: return "theorem1_L1";
    case ExperimentKind::theorem2: return "theorem2";
    case ExperimentKind::k_study: return "k_study";
    case ExperimentKind::verify_op: return "verify_op";
    case ExperimentKind::verify_b: return "verify_b";
    case ExperimentKind::cell_solve: return "cell_solve";
    case ExperimentKind::homogenize: return "homogenize";
    case ExperimentKind::tabulate: return "tabulate";
  }
  return "cell_solve";
}

ExperimentKind kind_from_name(const std::string& name) {
  for (ExperimentKind k : {ExperimentKind::theorem1, ExperimentKind::theorem1_L1, ExperimentKind::theorem2,
                           ExperimentKind::k_study, ExperimentKind::verify_op, ExperimentKind::verify_b,
                           ExperimentKind::cell_solve, ExperimentKind::homogenize, ExperimentKind::tabulate})
    if (kind_name(k) == name) return k;
  throw ConfigError("field 'experiment' has unknown value '" + name + "'");
}

std::string config_hash(const json& canonical, std::uint64_t seed) {
  return fnv1a_hex(canonical.dump() + "#seed=" + std::to_string(seed));
}

ExperimentConfig parse_config(const json& j, std::uint64_t seed, int threads) {
  reject_unknown(j, "config", {"experiment", "operator", "grids", "parameters", "output"});
  if (threads < 1) throw ConfigError("thread count must be >= 1");
  ExperimentConfig cfg;
  cfg.seed = seed;
  cfg.threads = threads;
  const json& exp = require(j, "config", "experiment");
  if (!exp.is_string()) throw ConfigError("field 'experiment' must be a string");
  cfg.kind = kind_from_name(exp.get<std::string>());

  if (j.contains("operator")) cfg.op = operator_from_json(j.at("operator"));

  if (j.contains("grids")) {
    const json& g = j.at("grids");
    reject_unknown(g, "grids", {"cell_resolution", "macro_resolution", "field_resolution", "quadrature_order"});
    cfg.grids.cell_resolution = int_or(g, "grids", "cell_resolution", cfg.grids.cell_resolution);
    cfg.grids.macro_resolution = int_or(g, "grids", "macro_resolution", cfg.grids.macro_resolution);
    cfg.grids.field_resolution = int_or(g, "grids", "field_resolution", cfg.grids.field_resolution);
    cfg.grids.quadrature_order = int_or(g, "grids", "quadrature_order", cfg.grids.quadrature_order);
  }
  if (cfg.grids.cell_resolution < 2) throw ConfigError("field 'grids.cell_resolution' must be >= 2");
  if (cfg.grids.field_resolution < 2) throw ConfigError("field 'grids.field_resolution' must be >= 2");
  if (cfg.grids.macro_resolution < 0) throw ConfigError("field 'grids.macro_resolution' must be >= 0");
  if (cfg.grids.quadrature_order < 1 || cfg.grids.quadrature_order > 5)
    throw ConfigError("field 'grids.quadrature_order' must be in 1..5");

  if (j.contains("parameters")) {
    const json& p = j.at("parameters");
    if (!p.is_object()) throw ConfigError("'parameters' must be an object");
    for (const auto& [key, _] : p.items())
      if (!kParameterKeys.count(key)) throw ConfigError("unknown field 'parameters." + key + "'");
    cfg.parameters = p;
    if (p.contains("solver")) cfg.solver = solver_from_json(p.at("solver"));
    check_increasing(p, "h_list");
    check_increasing(p, "k_list");
  }
  cfg.parameters["solver"] = solver_to_json(cfg.solver);

  if (j.contains("output")) {
    const json& o = j.at("output");
    reject_unknown(o, "output", {"directory", "plot"});
    if (o.contains("directory")) {
      if (!o.at("directory").is_string()) throw ConfigError("field 'output.directory' must be a string");
      cfg.output_dir = o.at("directory").get<std::string>();
    }
    if (o.contains("plot")) {
      if (!o.at("plot").is_boolean()) throw ConfigError("field 'output.plot' must be a boolean");
      cfg.plot = o.at("plot").get<bool>();
    }
  }

  cfg.canonical = {{"experiment", kind_name(cfg.kind)},
                   {"operator", cfg.op ? operator_to_json(*cfg.op) : json(nullptr)},
                   {"grids",
                    {{"cell_resolution", cfg.grids.cell_resolution},
                     {"macro_resolution", cfg.grids.macro_resolution},
                     {"field_resolution", cfg.grids.field_resolution},
                     {"quadrature_order", cfg.grids.quadrature_order}}},
                   {"parameters", cfg.parameters}};
  cfg.hash = config_hash(cfg.canonical, seed);
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path, std::uint64_t seed, int threads) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config '" + path.string() + "'");
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    std::string msg = e.what();
    std::replace(msg.begin(), msg.end(), '\n', ' ');
    throw ConfigError("malformed JSON in '" + path.string() + "': " + msg);
  }
  return parse_config(j, seed, threads);
}

const FluxOperator& ExperimentConfig::require_operator() const {
  if (!op) throw ConfigError("missing required field 'operator'");
  return *op;
}

double ExperimentConfig::real(const std::string& key, double fallback) const {
  return has(key) ? as_real(parameters.at(key), "parameters." + key) : fallback;
}

int ExperimentConfig::integer(const std::string& key, int fallback) const {
  return has(key) ? as_int(parameters.at(key), "parameters." + key) : fallback;
}

bool ExperimentConfig::flag(const std::string& key, bool fallback) const {
  if (!has(key)) return fallback;
  if (!parameters.at(key).is_boolean()) throw ConfigError("field 'parameters." + key + "' must be a boolean");
  return parameters.at(key).get<bool>();
}

std::string ExperimentConfig::text(const std::string& key, const std::string& fallback) const {
  if (!has(key)) return fallback;
  if (!parameters.at(key).is_string()) throw ConfigError("field 'parameters." + key + "' must be a string");
  return parameters.at(key).get<std::string>();
}

std::vector<int> ExperimentConfig::integers(const std::string& key, std::vector<int> fallback) const {
  return has(key) ? as_ints(parameters.at(key), "parameters." + key) : fallback;
}

std::vector<double> ExperimentConfig::reals(const std::string& key, std::vector<double> fallback) const {
  return has(key) ? as_reals(parameters.at(key), "parameters." + key) : fallback;
}

std::vector<std::string> ExperimentConfig::texts(const std::string& key, std::vector<std::string> fallback) const {
  if (!has(key)) return fallback;
  const json& v = parameters.at(key);
  if (v.is_string()) return {v.get<std::string>()};
  if (!v.is_array()) throw ConfigError("field 'parameters." + key + "' must be an array of strings");
  std::vector<std::string> out;
  for (const auto& s : v) {
    if (!s.is_string()) throw ConfigError("field 'parameters." + key + "' must be an array of strings");
    out.push_back(s.get<std::string>());
  }
  return out;
}

Vec ExperimentConfig::vector(const std::string& key, const Vec& fallback) const {
  if (!has(key)) return fallback;
  const json& v = parameters.at(key);
  if (v.is_number()) {
    Vec out(1);
    out(0) = v.get<double>();
    return out;
  }
  const std::vector<double> r = as_reals(v, "parameters." + key);
  if (r.empty() || r.size() > 2) throw ConfigError("field 'parameters." + key + "' must have 1 or 2 entries");
  Vec out(static_cast<Eigen::Index>(r.size()));
  for (std::size_t i = 0; i < r.size(); ++i) out(static_cast<Eigen::Index>(i)) = r[i];
  return out;
}

std::vector<Vec> ExperimentConfig::vectors(const std::string& key, const std::vector<Vec>& fallback) const {
  if (!has(key)) return fallback;
  const json& v = parameters.at(key);
  if (!v.is_array() || v.empty()) throw ConfigError("field 'parameters." + key + "' must be a non-empty array");
  if (v[0].is_number()) return {vector(key, fallback.empty() ? Vec() : fallback[0])};
  std::vector<Vec> out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    const std::string name = "parameters." + key + "[" + std::to_string(i) + "]";
    const std::vector<double> r = as_reals(v[i], name);
    if (r.empty() || r.size() > 2) throw ConfigError("field '" + name + "' must have 1 or 2 entries");
    Vec e(static_cast<Eigen::Index>(r.size()));
    for (std::size_t d = 0; d < r.size(); ++d) e(static_cast<Eigen::Index>(d)) = r[d];
    out.push_back(e);
  }
  return out;
}

}  // namespace homog
