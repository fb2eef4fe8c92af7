#include "homog/experiments.hpp"

#include "homog/field_io.hpp"
#include "homog/homogenizer.hpp"
#include "homog/parallel.hpp"

#include <chrono>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

namespace homog {

using nlohmann::json;

SolveAudit audit_solve(const WeakProblem& problem, const SolveResult& result) {
  SolveAudit a;
  a.reassembled_residual = residual_dual_norm(problem.grid, assemble_residual(problem, result.solution));
  const auto& e = result.energy_trace;
  for (std::size_t i = 1; i < e.size(); ++i)
    if (e[i] > e[i - 1] + 1e-12 * (1.0 + std::abs(e[i - 1]))) a.energy_monotone = false;
  return a;
}

SolveResult checked_solve(const WeakProblem& problem, const SolverConfig& config,
                          const std::optional<PeriodicScalarField>& guess) {
  SolveResult r = solve(problem, config, guess);
  if (!r.converged) {
    std::ostringstream msg;
    msg << "solver did not converge: residual " << r.residual_norm << " after " << r.iterations << " iterations";
    throw NotConverged(msg.str(), std::move(r));
  }
  return r;
}

namespace {

struct AuditLog {
  double worst_residual = 0.0;
  bool monotone = true;
  double worst_agreement = -1.0;

  void add(const SolveAudit& a, double agreement = -1.0) {
    worst_residual = std::max(worst_residual, a.reassembled_residual);
    monotone = monotone && a.energy_monotone;
    worst_agreement = std::max(worst_agreement, agreement);
  }

  void finish(ExperimentReport& report, double tol) const {
    report.assert_rule("solver_reassembled_residual", worst_residual, 2.0 * tol, worst_residual <= 2.0 * tol);
    report.assert_rule("solver_energy_nonincreasing", monotone ? 0.0 : 1.0, 0.0, monotone);
    if (worst_agreement >= 0.0)
      report.assert_rule("two_guess_agreement", worst_agreement, 1e-8, worst_agreement <= 1e-8);
  }
};

ExperimentReport start(const ExperimentConfig& cfg) {
  ExperimentReport r;
  r.experiment = kind_name(cfg.kind);
  r.config_hash = cfg.hash;
  r.extras["environment"] = {{"config_hash", cfg.hash}, {"seed", cfg.seed}, {"config", cfg.canonical}};
  return r;
}

Vec check_dim(const Vec& v, int dim, const std::string& name) {
  if (v.size() != dim)
    throw ConfigError("field 'parameters." + name + "' must have " + std::to_string(dim) + " entries");
  return v;
}

std::vector<double> to_list(const Vec& v) { return {v.data(), v.data() + v.size()}; }

std::vector<TestFunction> select_bank(const ExperimentConfig& cfg, int dim) {
  std::vector<TestFunction> all = default_test_bank(dim);
  if (!cfg.has("test_bank") || (cfg.parameters.at("test_bank").is_string() && cfg.text("test_bank", "") == "default"))
    return all;
  std::vector<TestFunction> out;
  for (const std::string& label : cfg.texts("test_bank", {})) {
    auto it = std::find_if(all.begin(), all.end(), [&](const TestFunction& f) { return f.label == label; });
    if (it == all.end())
      throw ConfigError("field 'parameters.test_bank' names unknown test function '" + label + "'");
    out.push_back(*it);
  }
  if (out.empty()) throw ConfigError("field 'parameters.test_bank' must not be empty");
  return out;
}

std::string h_metric(const std::string& base, int h) { return base + "_h" + std::to_string(h); }

/// Values for h >= 4, the range on which the decrease verdicts are asserted.
std::vector<double> from_h4(const std::vector<int>& hs, const std::vector<double>& v) {
  std::vector<double> out;
  for (std::size_t i = 0; i < hs.size(); ++i)
    if (hs[i] >= 4) out.push_back(v[i]);
  return out;
}

void assert_decrease(ExperimentReport& report, const std::string& rule, const std::vector<double>& seq,
                     double floor) {
  if (seq.size() < 2) {
    report.note_rule(rule, seq.empty() ? 0.0 : seq.back(), 0.10);
    return;
  }
  report.assert_rule(rule, seq.back(), 0.10, non_increasing_with_wobble(seq, 0.10, 1, floor));
}

/// Ratio E(h)/E(2h) for each consecutive doubling in hs.
void assert_rates(ExperimentReport& report, const std::string& rule, const std::vector<int>& hs,
                  const std::vector<double>& err, const std::vector<double>& bounds) {
  if (bounds.size() != 2) throw ConfigError("field 'parameters.rate_bounds' must have 2 entries");
  for (std::size_t i = 0; i + 1 < hs.size(); ++i) {
    if (hs[i + 1] != 2 * hs[i]) continue;
    const double ratio = err[i] / err[i + 1];
    const bool ok = std::isfinite(ratio) && ratio >= bounds[0] && ratio <= bounds[1];
    report.assert_rule(rule + "_h" + std::to_string(hs[i]), ratio, bounds[ok || ratio < bounds[0] ? 0 : 1], ok);
  }
}

int lcm_all(const std::vector<int>& v) {
  int l = 1;
  for (int x : v) l = std::lcm(l, x);
  return l;
}

int macro_resolution(const ExperimentConfig& cfg, const std::vector<int>& multiples_of, int min_nodes) {
  const int l = lcm_all(multiples_of);
  int res = cfg.grids.macro_resolution;
  if (res == 0) res = l * ((min_nodes + l - 1) / l);
  if (res % l != 0)
    throw ConfigError("field 'grids.macro_resolution' must be a multiple of " + std::to_string(l));
  if (res < min_nodes)
    throw ConfigError("field 'grids.macro_resolution' must be >= " + std::to_string(min_nodes));
  return res;
}

PeriodicScalarField random_field(const TorusGrid& grid, std::uint64_t seed, double amplitude) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-amplitude, amplitude);
  Eigen::VectorXd v(static_cast<Eigen::Index>(grid.num_nodes()));
  for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = u(rng);
  return {grid, v};
}

struct CellRun {
  SolveResult result;
  SolveAudit audit;
  double guess_agreement = -1.0;
};

/// Solve, audit, and optionally re-solve from a seeded random guess.
CellRun audited_solve(const WeakProblem& problem, const ExperimentConfig& cfg, std::uint64_t stream,
                      bool two_guess, double p) {
  CellRun run{checked_solve(problem, cfg.solver), {}, -1.0};
  run.audit = audit_solve(problem, run.result);
  if (two_guess) {
    const PeriodicScalarField guess = random_field(problem.grid, split_seed(cfg.seed, stream), 0.1);
    const SolveResult other = checked_solve(problem, cfg.solver, guess);
    const SolveAudit a = audit_solve(problem, other);
    run.audit.reassembled_residual = std::max(run.audit.reassembled_residual, a.reassembled_residual);
    run.audit.energy_monotone = run.audit.energy_monotone && a.energy_monotone;
    run.guess_agreement = lp_norm(gradient(run.result.solution) - gradient(other.solution), p);
  }
  return run;
}

ExperimentReport cell_driver(const ExperimentConfig& cfg, bool save_default) {
  const FluxOperator& op = cfg.require_operator();
  const int dim = op.dim;
  ExperimentReport report = start(cfg);
  const Point y = check_dim(cfg.vector("y", Vec::Constant(dim, 0.5)), dim, "y");
  std::vector<Vec> taus = cfg.vectors("tau", {unit_vec(dim, 0)});
  for (auto& t : taus) check_dim(t, dim, "tau");
  const bool two_guess = cfg.flag("two_guess", true);
  const TorusGrid grid = TorusGrid::unit(dim, cfg.grids.cell_resolution, cfg.grids.quadrature_order);

  auto runs = parallel_map(taus.size(), cfg.threads, [&](std::size_t i) {
    return audited_solve({grid, cell_closure(op, y, grid), taus[i]}, cfg, i, two_guess, op.p);
  });

  AuditLog log;
  json bs = json::array();
  std::vector<Vec> expected;
  if (cfg.has("expected_b")) {
    expected = cfg.vectors("expected_b", {});
    if (expected.size() != taus.size())
      throw ConfigError("field 'parameters.expected_b' must have one entry per tau");
    for (auto& e : expected) check_dim(e, dim, "expected_b");
  }
  const double b_tol = cfg.real("b_tolerance", 1e-8);
  const bool save = cfg.flag("save_fields", save_default);
  for (std::size_t i = 0; i < runs.size(); ++i) {
    const CellRun& run = runs[i];
    const double idx = static_cast<double>(i);
    for (int d = 0; d < dim; ++d) report.add("cell", "tau_index", idx, "tau_" + std::to_string(d), taus[i](d));
    for (int d = 0; d < dim; ++d) report.add("cell", "tau_index", idx, "b_" + std::to_string(d), run.result.mean_flux(d));
    report.add("cell", "tau_index", idx, "residual_norm", run.result.residual_norm);
    report.add("cell", "tau_index", idx, "reassembled_residual", run.audit.reassembled_residual);
    report.add("cell", "tau_index", idx, "iterations", run.result.iterations);
    report.add("cell", "tau_index", idx, "picard_steps", run.result.picard_steps);
    report.add("cell", "tau_index", idx, "corrector_lp", lp_norm(run.result.solution, op.p));
    report.add("cell", "tau_index", idx, "corrector_gradient_lp", lp_norm(gradient(run.result.solution), op.p));
    report.add("cell", "tau_index", idx, "energy_monotone", run.audit.energy_monotone ? 1.0 : 0.0);
    if (run.guess_agreement >= 0.0) report.add("cell", "tau_index", idx, "guess_agreement", run.guess_agreement);
    log.add(run.audit, run.guess_agreement);
    bs.push_back(to_list(run.result.mean_flux));
    if (!expected.empty()) {
      const double err = (run.result.mean_flux - expected[i]).norm() / std::max(1.0, expected[i].norm());
      report.add("cell", "tau_index", idx, "b_relative_error", err);
      report.assert_rule("b_matches_expected_" + std::to_string(i), err, b_tol, err <= b_tol);
    }
    if (save) {
      std::filesystem::create_directories(cfg.output_dir);
      write_field(cfg.output_dir / ("corrector_" + std::to_string(i) + ".bin"), run.result.solution);
      write_field_csv(cfg.output_dir / ("corrector_" + std::to_string(i) + ".csv"), run.result.solution);
    }
  }
  log.finish(report, cfg.solver.residual_tol);
  report.extras["y"] = to_list(y);
  json tau_list = json::array();
  for (const auto& t : taus) tau_list.push_back(to_list(t));
  report.extras["tau"] = tau_list;
  report.extras["b"] = bs;
  return report;
}

}  // namespace

ExperimentReport run_cell_solve(const ExperimentConfig& cfg) { return cell_driver(cfg, true); }
ExperimentReport run_homogenize(const ExperimentConfig& cfg) { return cell_driver(cfg, false); }

ExperimentReport run_tabulate(const ExperimentConfig& cfg) {
  const FluxOperator& op = cfg.require_operator();
  ExperimentReport report = start(cfg);
  const Vec xi = check_dim(cfg.vector("xi", unit_vec(op.dim, 0)), op.dim, "xi");
  TableOptions options;
  options.tau_box = cfg.real("tau_box", default_tau_box(xi));
  options.tau_resolution = cfg.integer("tau_resolution", options.tau_resolution);
  options.held_out = static_cast<std::size_t>(cfg.integer("held_out", 8));
  options.seed = cfg.seed;
  options.threads = cfg.threads;
  const PiecewisePartition partition(op.dim, cfg.integer("table_k", 1));
  const TorusGrid cell = TorusGrid::unit(op.dim, cfg.grids.cell_resolution, cfg.grids.quadrature_order);
  const HomogenizedTable table = tabulate_b(op, partition, cell, cfg.solver, options);
  table.save(cfg.output_dir / "table");

  double zero = 0.0;
  std::size_t zero_node = 0;
  for (std::size_t j = 0; j < table.tau_count(); ++j)
    if (table.tau_node(j).norm() == 0.0) zero_node = j + 1;
  for (std::size_t piece = 0; piece < partition.size(); ++piece) {
    const double pv = static_cast<double>(piece);
    const Vec b1 = table.interpolate(piece, unit_vec(op.dim, 0));
    for (int d = 0; d < op.dim; ++d) report.add("table", "piece", pv, "b_e0_" + std::to_string(d), b1(d));
    if (zero_node > 0) {
      const double z = table.value(piece, zero_node - 1).norm();
      zero = std::max(zero, z);
      report.add("table", "piece", pv, "zero_norm", z);
    }
  }
  report.add("summary", "table_k", partition.k(), "pieces", static_cast<double>(partition.size()));
  report.add("summary", "table_k", partition.k(), "entries", static_cast<double>(table.values().cols()));
  report.add("summary", "table_k", partition.k(), "failed_entries", static_cast<double>(table.failed_entries.size()));
  report.add("summary", "table_k", partition.k(), "interpolation_error", table.interpolation_error);
  report.add("summary", "table_k", partition.k(), "tau_box", table.tau_box());
  report.assert_rule("no_failed_entries", static_cast<double>(table.failed_entries.size()), 0.0, !table.partial());
  if (zero_node > 0) report.assert_rule("zero_law", zero, 1e-8, zero <= 1e-8);
  if (cfg.has("tolerance")) {
    const double tol = cfg.real("tolerance", 0.0);
    report.assert_rule("interpolation_error", table.interpolation_error, tol, table.interpolation_error <= tol);
  } else {
    report.note_rule("interpolation_error", table.interpolation_error, 0.0);
  }
  report.extras["table_directory"] = (cfg.output_dir / "table").string();
  report.extras["operator_hash"] = table.operator_hash();
  return report;
}

ExperimentReport run_verify_operator(const ExperimentConfig& cfg) {
  const FluxOperator& op = cfg.require_operator();
  ExperimentReport report = start(cfg);
  const auto samples = static_cast<std::size_t>(cfg.integer("samples", 1000));
  const ConditionReport cr = verify_structure_conditions(op, samples, cfg.seed, cfg.threads);
  for (const ConditionRow& row : cr.rows) {
    report.add(row.condition, "samples", static_cast<double>(row.samples), "min_ratio", row.min_ratio);
    report.add(row.condition, "samples", static_cast<double>(row.samples), "max_ratio", row.max_ratio);
    report.assert_rule(row.condition, row.min_ratio, 0.0, row.pass);
  }
  for (const ModulusRow& m : cr.modulus) report.add("y_modulus", "distance", m.distance, "omega", m.omega);
  report.add("summary", "samples", static_cast<double>(samples), "degenerate_pairs",
             static_cast<double>(cr.degenerate_pairs));
  report.add("summary", "samples", static_cast<double>(samples), "min_inner_product", cr.min_inner_product);
  report.add("summary", "samples", static_cast<double>(samples), "empirical_c1", cr.empirical_c1);
  report.add("summary", "samples", static_cast<double>(samples), "empirical_c2", cr.empirical_c2);
  report.assert_rule("monotone_inner_products", cr.min_inner_product, 0.0, cr.min_inner_product >= 0.0);
  report.assert_rule("y_modulus_decays", cr.modulus.empty() ? 0.0 : cr.modulus.back().omega, 0.0, cr.modulus_decays);
  return report;
}

ExperimentReport run_verify_b(const ExperimentConfig& cfg) {
  const FluxOperator& op = cfg.require_operator();
  ExperimentReport report = start(cfg);
  const TorusGrid cell = TorusGrid::unit(op.dim, cfg.grids.cell_resolution, cfg.grids.quadrature_order);
  PropertyOptions options;
  options.samples = static_cast<std::size_t>(cfg.integer("samples", 1000));
  options.seed = cfg.seed;
  options.threads = cfg.threads;
  options.check_rotation = cfg.flag("check_rotation", op.dim == 2 &&
                                                         op.coefficient.pattern != CoefficientField::ZPattern::laminate &&
                                                         op.coefficient.pattern != CoefficientField::ZPattern::trig);
  options.rotation_samples = static_cast<std::size_t>(cfg.integer("rotation_samples", 16));
  options.modulus_samples_per_level = static_cast<std::size_t>(cfg.integer("modulus_samples", 16));
  options.tau_scale = cfg.real("tau_scale", 2.0);

  BEvaluator b;
  std::shared_ptr<HomogenizedTable> table;
  if (cfg.flag("use_table", false)) {
    TableOptions topt;
    topt.tau_box = cfg.real("tau_box", options.tau_scale * 1.01);
    topt.tau_resolution = cfg.integer("tau_resolution", topt.tau_resolution);
    topt.seed = cfg.seed;
    topt.threads = cfg.threads;
    table = std::make_shared<HomogenizedTable>(
        tabulate_b(op, PiecewisePartition(op.dim, cfg.integer("table_k", 1)), cell, cfg.solver, topt));
    b = table_evaluator(table);
  } else {
    b = direct_evaluator(op, cell, cfg.solver);
  }
  const PropertyReport pr = verify_b_properties(b, options);
  const double n = static_cast<double>(options.samples);
  report.add("properties", "samples", n, "min_inner_product", pr.min_inner_product);
  report.add("properties", "samples", n, "min_monotonicity_ratio", pr.min_monotonicity_ratio);
  report.add("properties", "samples", n, "holder_exponent", pr.holder_exponent);
  report.add("properties", "samples", n, "holder_ratio_half", pr.holder_ratio_half);
  report.add("properties", "samples", n, "holder_ratio_full", pr.holder_ratio_full);
  report.add("properties", "samples", n, "max_zero_norm", pr.max_zero_norm);
  report.add("properties", "samples", n, "degenerate_pairs", static_cast<double>(pr.degenerate_pairs));
  for (const ModulusRow& m : pr.modulus) report.add("y_modulus", "distance", m.distance, "omega", m.omega);
  report.assert_rule("monotone", pr.min_inner_product, 0.0, pr.monotone);
  report.assert_rule("zero_law", pr.max_zero_norm, 1e-8, pr.zero_law);
  const double change = pr.holder_ratio_half > 0.0
                            ? std::abs(pr.holder_ratio_full - pr.holder_ratio_half) / pr.holder_ratio_half
                            : std::numeric_limits<double>::infinity();
  report.add("properties", "samples", n, "holder_relative_change", std::isfinite(change) ? change : 1.0);
  report.assert_rule("holder_stable", change, 0.10, pr.holder_stable);
  report.assert_rule("y_modulus_decays", pr.modulus.empty() ? 0.0 : pr.modulus.back().omega, 0.0, pr.modulus_decays);
  if (pr.rotation_deviation >= 0.0) {
    report.add("properties", "samples", static_cast<double>(options.rotation_samples), "rotation_deviation",
               pr.rotation_deviation);
    report.assert_rule("rotation_equivariant", pr.rotation_deviation, 1e-6, pr.rotation_equivariant);
  }
  if (op.p == 2.0) {
    // b(y, s tau) = s b(y, tau) in the linear case
    auto dev = parallel_map(16, cfg.threads, [&](std::size_t i) {
      std::mt19937_64 rng(split_seed(cfg.seed ^ 0x5eedull, i));
      std::uniform_real_distribution<double> u(-1.0, 1.0), s(-4.0, 4.0);
      Point y(op.dim);
      Vec tau(op.dim);
      for (int d = 0; d < op.dim; ++d) {
        y(d) = 0.5 * (u(rng) + 1.0);
        tau(d) = u(rng);
      }
      const double scale = s(rng);
      return (b.eval(y, scale * tau) - scale * b.eval(y, tau)).norm();
    });
    const double worst = *std::max_element(dev.begin(), dev.end());
    report.add("properties", "samples", 16.0, "homogeneity_deviation", worst);
    report.assert_rule("linear_homogeneity", worst, 1e-8, worst <= 1e-8);
  }
  if (table) report.add("properties", "samples", n, "on_demand_solves", static_cast<double>(table->on_demand_solves()));
  return report;
}

ExperimentReport run_theorem1(const ExperimentConfig& cfg) {
  const int dim = cfg.op ? cfg.op->dim : cfg.integer("dim", 1);
  if (dim != 1 && dim != 2) throw ConfigError("field 'parameters.dim' must be 1 or 2");
  ExperimentReport report = start(cfg);
  const std::vector<int> hs = cfg.integers("h_list", {2, 4, 8, 16});
  const std::vector<TestFunction> bank = select_bank(cfg, dim);
  const std::string field = cfg.text("field", "sin");
  const int n = cfg.grids.field_resolution;
  const int order = cfg.grids.quadrature_order;
  const TorusGrid base = TorusGrid::unit(dim, n, order);
  const double two_pi = 2.0 * std::numbers::pi;

  std::vector<PeriodicScalarField> fields;
  if (field == "sin") {
    fields.push_back(PeriodicScalarField::from_function(base, [&](const Point& x) { return std::sin(two_pi * x(0)); }));
  } else if (field == "constant") {
    const double c = cfg.real("constant", 1.0);
    fields.push_back(PeriodicScalarField::constant(base, c));
  } else if (field == "indicator") {
    fields.push_back(PeriodicScalarField::from_function(base, [](const Point& x) { return x(0) < 0.5 ? 1.0 : 0.0; }));
  } else if (field == "cos_product") {
    fields.push_back(PeriodicScalarField::from_function(base, [&](const Point& x) {
      double v = 1.0;
      for (Eigen::Index d = 0; d < x.size(); ++d) v *= std::cos(two_pi * x(d));
      return v;
    }));
  } else if (field == "random") {
    const int count = cfg.integer("random_fields", 20);
    if (count < 1) throw ConfigError("field 'parameters.random_fields' must be >= 1");
    for (int s = 0; s < count; ++s) fields.push_back(random_field(base, split_seed(cfg.seed, s), 1.0));
  } else {
    throw ConfigError("field 'parameters.field' has unknown value '" + field + "'");
  }

  struct HRun {
    std::vector<double> errors;  // bank errors, first field only
    double mean_gap = 0.0;       // over all fields
  };
  auto runs = parallel_map(hs.size(), cfg.threads, [&](std::size_t i) {
    const int h = hs[i];
    const TorusGrid target = TorusGrid::unit(dim, h * n, order);
    HRun run;
    for (std::size_t f = 0; f < fields.size(); ++f) {
      const PeriodicScalarField w = sample_oscillated(fields[f], h, target);
      const double mu = mean_value(fields[f]);
      run.mean_gap = std::max(run.mean_gap, std::abs(mean_value(w) - mu));
      if (f == 0)
        for (const TestFunction& phi : bank)
          run.errors.push_back(std::abs(weak_pairing(w, phi) - mu * integral(target, phi)));
    }
    return run;
  });

  const double tol = cfg.real("tolerance", 0.05);
  double worst_gap = 0.0;
  for (std::size_t i = 0; i < hs.size(); ++i) {
    report.add("mean_identity", "h", hs[i], "mean_gap", runs[i].mean_gap);
    worst_gap = std::max(worst_gap, runs[i].mean_gap);
  }
  for (std::size_t k = 0; k < bank.size(); ++k) {
    std::vector<double> e;
    for (std::size_t i = 0; i < hs.size(); ++i) {
      e.push_back(runs[i].errors[k]);
      report.add(bank[k].label, "h", hs[i], "pairing_error", e.back());
    }
    assert_decrease(report, "nonincreasing_" + bank[k].label, from_h4(hs, e), 1e-12);
    report.assert_rule("final_error_" + bank[k].label, e.back(), tol, e.back() <= tol);
    if (cfg.text("rate_test", "") == bank[k].label)
      assert_rates(report, "rate_" + bank[k].label, hs, e, cfg.reals("rate_bounds", {1.6, 2.4}));
  }
  if (cfg.has("rate_test") &&
      std::none_of(bank.begin(), bank.end(), [&](const TestFunction& f) { return f.label == cfg.text("rate_test", ""); }))
    throw ConfigError("field 'parameters.rate_test' names a test function outside the bank");
  report.assert_rule("mean_identity", worst_gap, 1e-10, worst_gap <= 1e-10);
  report.extras["fields"] = fields.size();
  return report;
}

ExperimentReport run_theorem1_L1(const ExperimentConfig& cfg) {
  ExperimentReport report = start(cfg);
  const std::vector<int> hs = cfg.integers("h_list", {2, 4, 8, 16});
  const std::vector<double> ts = cfg.reals("thresholds", {0.5, 1.0, 2.0, 4.0, 8.0, 16.0, 32.0, 64.0});
  for (std::size_t i = 1; i < ts.size(); ++i)
    if (!(ts[i] > ts[i - 1])) throw ConfigError("field 'parameters.thresholds' must be strictly increasing");
  if (ts.empty()) throw ConfigError("field 'parameters.thresholds' must not be empty");
  const std::string family = cfg.text("family", "both");
  if (family != "bounded" && family != "spike" && family != "both")
    throw ConfigError("field 'parameters.family' has unknown value '" + family + "'");
  const int n = cfg.grids.field_resolution;
  for (int h : hs)
    if (n % h != 0) throw ConfigError("field 'grids.field_resolution' must be a multiple of every h");
  const int order = cfg.grids.quadrature_order;
  const TorusGrid base = TorusGrid::line(n, order);
  const std::vector<TestFunction> bank = select_bank(cfg, 1);
  const double truncation = cfg.real("truncation", 4.0);

  std::vector<std::string> families;
  if (family != "spike") families.push_back("bounded");
  if (family != "bounded") families.push_back("spike");

  auto make = [&](const std::string& fam, int h) {
    return PeriodicScalarField::from_function(base, [&](const Point& x) {
      if (fam == "bounded") return x(0) < 0.5 ? 2.0 - 1.0 / h : 0.0;
      return x(0) * h < 1.0 - 1e-12 ? static_cast<double>(h) : 0.0;
    });
  };

  struct Run {
    std::vector<double> profile;
    double half_h_profile = 0.0;
    double identity_gap = 0.0;
    double trunc_error = 0.0;  // max over the bank
  };
  for (const std::string& fam : families) {
    auto runs = parallel_map(hs.size(), cfg.threads, [&](std::size_t i) {
      const int h = hs[i];
      const PeriodicScalarField u = make(fam, h);
      Run run;
      run.profile = equi_integrability_profile(u, ts);
      run.half_h_profile = equi_integrability_profile(u, {0.5 * h})[0];
      for (std::size_t k = 0; k < ts.size(); ++k)
        run.identity_gap = std::max(run.identity_gap, std::abs(lp_norm(truncate_at(u, ts[k]) - u, 1.0) - run.profile[k]));
      const PeriodicScalarField ut = truncate_at(u, truncation);
      const TorusGrid target = TorusGrid::line(h * n, order);
      const PeriodicScalarField w = sample_oscillated(ut, h, target);
      const double mu = mean_value(ut);
      for (const TestFunction& phi : bank)
        run.trunc_error = std::max(run.trunc_error, std::abs(weak_pairing(w, phi) - mu * integral(target, phi)));
      return run;
    });
    std::vector<double> sup(ts.size(), 0.0), trunc;
    double gap = 0.0, min_half = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < hs.size(); ++i) {
      for (std::size_t k = 0; k < ts.size(); ++k) {
        report.add(fam + "_profile", "t", ts[k], h_metric("profile", hs[i]), runs[i].profile[k]);
        sup[k] = std::max(sup[k], runs[i].profile[k]);
      }
      report.add(fam, "h", hs[i], "profile_at_half_h", runs[i].half_h_profile);
      report.add(fam, "h", hs[i], "truncated_pairing_error", runs[i].trunc_error);
      trunc.push_back(runs[i].trunc_error);
      gap = std::max(gap, runs[i].identity_gap);
      min_half = std::min(min_half, runs[i].half_h_profile);
    }
    for (std::size_t k = 0; k < ts.size(); ++k) report.add(fam + "_profile", "t", ts[k], "sup_profile", sup[k]);
    report.assert_rule(fam + "_truncation_identity", gap, 1e-12, gap <= 1e-12);
    if (fam == "bounded") {
      report.assert_rule("bounded_profile_vanishes", sup.back(), 1e-12,
                         sup.back() <= 1e-12 && non_increasing_with_wobble(sup, 0.0, 0, 0.0));
      assert_decrease(report, "bounded_truncated_pairing_nonincreasing", from_h4(hs, trunc), 1e-12);
    } else {
      report.assert_rule("spike_not_equi_integrable", min_half, 1.0 - 1e-12, min_half >= 1.0 - 1e-12);
    }
  }
  return report;
}

ExperimentReport run_theorem2(const ExperimentConfig& cfg) {
  const FluxOperator& op = cfg.require_operator();
  const int dim = op.dim;
  ExperimentReport report = start(cfg);
  const Vec xi = check_dim(cfg.vector("xi", unit_vec(dim, 0)), dim, "xi");
  const std::vector<int> hs = cfg.integers("h_list", {2, 4, 8, 16});
  const int res = macro_resolution(cfg, hs, 8 * hs.back());
  const int order = cfg.grids.quadrature_order;
  const TorusGrid macro = TorusGrid::unit(dim, res, order);
  const std::vector<TestFunction> bank = select_bank(cfg, dim);
  const double tol = cfg.solver.residual_tol;
  const bool y_dependent = op.coefficient.depends_on_y();

  // homogenized reference through the table
  TableOptions topt;
  topt.tau_box = cfg.real("tau_box", default_tau_box(xi));
  topt.tau_resolution = cfg.integer("tau_resolution", topt.tau_resolution);
  topt.held_out = static_cast<std::size_t>(cfg.integer("held_out", 4));
  topt.seed = cfg.seed;
  topt.threads = cfg.threads;
  const std::string reference = cfg.text("reference", "separable");
  if (reference != "separable" && reference != "piecewise")
    throw ConfigError("field 'parameters.reference' has unknown value '" + reference + "'");
  const bool continuous = y_dependent && reference == "separable";
  const PiecewisePartition partition(dim, y_dependent && !continuous ? cfg.integer("table_k", 4) : 1);
  const TorusGrid cell = TorusGrid::unit(dim, cfg.grids.cell_resolution, order);
  auto table = std::make_shared<HomogenizedTable>(tabulate_b(op, partition, cell, cfg.solver, topt));
  table->set_on_demand(cfg.flag("on_demand", true));
  const WeakProblem hom = build_homogenized_problem(table, xi, macro, continuous);
  const SolveResult u0 = checked_solve(hom, cfg.solver);
  AuditLog log;
  log.add(audit_solve(hom, u0));
  const QuadVectorField b_flux = flux_field(hom, u0.solution);

  struct Run {
    double lp_error = 0.0;
    std::vector<double> pairing;
    std::vector<double> flux_pairing;
    double corrector = -1.0;
    SolveAudit audit;
    double agreement = -1.0;
    int iterations = 0;
  };
  const bool two_guess = cfg.flag("two_guess", false);
  auto runs = parallel_map(hs.size(), cfg.threads, [&](std::size_t i) {
    const int h = hs[i];
    const WeakProblem osc = build_oscillating_problem(op, xi, h, macro);
    CellRun solved = audited_solve(osc, cfg, i, two_guess, op.p);
    const SolveResult& uh = solved.result;
    Run run;
    run.audit = solved.audit;
    run.agreement = solved.guess_agreement;
    run.iterations = uh.iterations;
    const PeriodicScalarField diff = uh.solution - u0.solution;
    run.lp_error = lp_norm(diff, op.p);
    const QuadVectorField a_flux = flux_field(osc, uh.solution);
    const QuadVectorField flux_diff = a_flux - b_flux;
    for (const TestFunction& phi : bank) {
      run.pairing.push_back(std::abs(weak_pairing(diff, phi)));
      for (int d = 0; d < dim; ++d) run.flux_pairing.push_back(std::abs(weak_pairing(flux_diff, phi, d)));
    }
    if (!y_dependent && res / h >= 2) {
      const TorusGrid cg = TorusGrid::unit(dim, res / h, order);
      const SolveResult v = checked_solve({cg, cell_closure(op, Point::Zero(dim), cg), xi}, cfg.solver);
      const CorrectorExpansion ex = corrector_expansion(v, h, macro);
      run.corrector = lp_norm(total_gradient(osc, uh.solution) - ex.gradient(), op.p);
    }
    return run;
  });

  std::vector<double> lp, pair_max, flux_max, corr;
  for (std::size_t i = 0; i < hs.size(); ++i) {
    const Run& r = runs[i];
    const double h = hs[i];
    log.add(r.audit, r.agreement);
    report.add("theorem2", "h", h, "lp_error", r.lp_error);
    lp.push_back(r.lp_error);
    pair_max.push_back(*std::max_element(r.pairing.begin(), r.pairing.end()));
    flux_max.push_back(*std::max_element(r.flux_pairing.begin(), r.flux_pairing.end()));
    report.add("theorem2", "h", h, "pairing_error_max", pair_max.back());
    report.add("theorem2", "h", h, "flux_pairing_error_max", flux_max.back());
    report.add("theorem2", "h", h, "iterations", r.iterations);
    if (r.corrector >= 0.0) {
      report.add("theorem2", "h", h, "corrector_gradient_error", r.corrector);
      corr.push_back(r.corrector);
    }
    for (std::size_t k = 0; k < bank.size(); ++k) {
      report.add("pairing_" + bank[k].label, "h", h, "error", r.pairing[k]);
      for (int d = 0; d < dim; ++d)
        report.add("flux_pairing_" + bank[k].label + "_" + std::to_string(d), "h", h, "error",
                   r.flux_pairing[k * dim + d]);
    }
  }
  const double floor = 10.0 * tol;
  assert_decrease(report, "lp_error_nonincreasing", from_h4(hs, lp), floor);
  assert_decrease(report, "pairing_error_nonincreasing", from_h4(hs, pair_max), floor);
  assert_decrease(report, "flux_pairing_error_nonincreasing", from_h4(hs, flux_max), floor);
  if (!corr.empty()) report.note_rule("corrector_gradient_error", corr.back(), 0.0);
  if (cfg.has("rate_bounds")) assert_rates(report, "lp_error_rate", hs, lp, cfg.reals("rate_bounds", {}));
  log.finish(report, tol);
  report.add("homogenized", "h", 0.0, "lp_norm", lp_norm(u0.solution, op.p));
  report.add("homogenized", "h", 0.0, "table_interpolation_error", table->interpolation_error);
  report.add("homogenized", "h", 0.0, "on_demand_solves", static_cast<double>(table->on_demand_solves()));
  report.extras["macro_resolution"] = res;
  return report;
}

ExperimentReport run_k_study(const ExperimentConfig& cfg) {
  const FluxOperator& op = cfg.require_operator();
  const int dim = op.dim;
  ExperimentReport report = start(cfg);
  const Vec xi = check_dim(cfg.vector("xi", unit_vec(dim, 0)), dim, "xi");
  const std::vector<int> ks = cfg.integers("k_list", {1, 2, 4, 8});
  const std::vector<int> hs = cfg.integers("h_list", {2, 4});
  std::vector<PiecewisePartition> partitions;
  std::vector<int> multiples = hs;
  for (int k : ks) {
    partitions.emplace_back(dim, k);
    multiples.push_back(partitions.back().boxes_per_axis());
  }
  const int res = macro_resolution(cfg, multiples, 8 * hs.back());
  const int order = cfg.grids.quadrature_order;
  const TorusGrid macro = TorusGrid::unit(dim, res, order);
  const double tol = cfg.solver.residual_tol;

  const std::size_t nh = hs.size(), nk = ks.size();
  const bool two_guess = cfg.flag("two_guess", false);
  // tasks [0, nh): reference u_h; then (k, h) pairs, k-major
  auto runs = parallel_map(nh + nk * nh, cfg.threads, [&](std::size_t t) {
    WeakProblem problem;
    if (t < nh) {
      problem = build_oscillating_problem(op, xi, hs[t], macro);
    } else {
      const std::size_t k = (t - nh) / nh, h = (t - nh) % nh;
      problem = build_transmission_problem(PiecewiseFluxOperator(op, partitions[k]), xi, hs[h], macro);
    }
    return audited_solve(problem, cfg, t, two_guess, op.p);
  });
  AuditLog log;
  for (const CellRun& r : runs) log.add(r.audit, r.guess_agreement);

  std::vector<double> dmax;
  for (std::size_t k = 0; k < nk; ++k) {
    double worst = 0.0;
    for (std::size_t h = 0; h < nh; ++h) {
      const CellRun& rk = runs[nh + k * nh + h];
      const double d = lp_norm(gradient(rk.result.solution) - gradient(runs[h].result.solution), op.p);
      report.add("D", "k", ks[k], h_metric("D", hs[h]), d);
      worst = std::max(worst, d);
    }
    report.add("D", "k", ks[k], "max_h", worst);
    dmax.push_back(worst);
  }

  // b^k - b on a seeded (y, tau) sample
  const TorusGrid cell = TorusGrid::unit(dim, cfg.grids.cell_resolution, order);
  const auto ny = static_cast<std::size_t>(cfg.integer("y_samples", 16));
  const auto nt = static_cast<std::size_t>(cfg.integer("tau_samples", 4));
  std::vector<std::pair<Point, Vec>> pts;
  std::mt19937_64 rng(split_seed(cfg.seed, 0xb9ull));
  std::uniform_real_distribution<double> uy(0.0, 1.0), ut(-1.0, 1.0);
  const double radius = 1.0 + xi.norm();
  for (std::size_t i = 0; i < ny * nt; ++i) {
    Point y(dim);
    Vec tau(dim);
    for (int d = 0; d < dim; ++d) {
      y(d) = uy(rng);
      tau(d) = radius * ut(rng);
    }
    pts.emplace_back(y, tau);
  }
  auto exact = parallel_map(pts.size(), cfg.threads, [&](std::size_t i) {
    return homogenized_flux(op, pts[i].first, pts[i].second, cell, cfg.solver);
  });
  auto frozen = parallel_map(pts.size() * nk, cfg.threads, [&](std::size_t t) {
    const std::size_t i = t % pts.size(), k = t / pts.size();
    const Point rep = partitions[k].representative(partitions[k].locate(pts[i].first));
    return homogenized_flux(op, rep, pts[i].second, cell, cfg.solver);
  });
  std::vector<double> gaps;
  for (std::size_t k = 0; k < nk; ++k) {
    double gap = 0.0;
    for (std::size_t i = 0; i < pts.size(); ++i) gap = std::max(gap, (frozen[k * pts.size() + i] - exact[i]).norm());
    report.add("b_gap", "k", ks[k], "max_abs", gap);
    gaps.push_back(gap);
  }

  const double floor = 10.0 * tol;
  assert_decrease(report, "D_nonincreasing", dmax, floor);
  const bool decays = dmax.back() < dmax.front() / 4.0 || dmax.back() <= floor;
  report.assert_rule("D_decay", dmax.back(), dmax.front() / 4.0, decays);
  if (cfg.has("tolerance")) {
    const double t = cfg.real("tolerance", 0.0);
    report.assert_rule("D_final_within_tolerance", dmax.back(), t, dmax.back() <= t);
  }
  assert_decrease(report, "b_gap_nonincreasing", gaps, floor);
  log.finish(report, tol);
  report.extras["macro_resolution"] = res;
  return report;
}

ExperimentReport run_experiment(const ExperimentConfig& cfg) {
  const auto t0 = std::chrono::steady_clock::now();
  ExperimentReport report;
  switch (cfg.kind) {
    case ExperimentKind::theorem1: report = run_theorem1(cfg); break;
    case ExperimentKind::theorem1_L1: report = run_theorem1_L1(cfg); break;
    case ExperimentKind::theorem2: report = run_theorem2(cfg); break;
    case ExperimentKind::k_study: report = run_k_study(cfg); break;
    case ExperimentKind::verify_op: report = run_verify_operator(cfg); break;
    case ExperimentKind::verify_b: report = run_verify_b(cfg); break;
    case ExperimentKind::cell_solve: report = run_cell_solve(cfg); break;
    case ExperimentKind::homogenize: report = run_homogenize(cfg); break;
    case ExperimentKind::tabulate: report = run_tabulate(cfg); break;
  }
  report.runtime_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return report;
}

}  // namespace homog
