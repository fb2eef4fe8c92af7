#pragma once

#include "homog/config.hpp"
#include "homog/report.hpp"
#include "homog/solver.hpp"

namespace homog {

/// Post-solve checks shared by every driver.
struct SolveAudit {
  double reassembled_residual = 0.0;
  bool energy_monotone = true;
};

SolveAudit audit_solve(const WeakProblem& problem, const SolveResult& result);

/// solve() that throws NotConverged instead of returning an unconverged result.
SolveResult checked_solve(const WeakProblem& problem, const SolverConfig& config,
                          const std::optional<PeriodicScalarField>& guess = std::nullopt);

ExperimentReport run_cell_solve(const ExperimentConfig& config);
ExperimentReport run_homogenize(const ExperimentConfig& config);
ExperimentReport run_tabulate(const ExperimentConfig& config);
ExperimentReport run_verify_operator(const ExperimentConfig& config);
ExperimentReport run_verify_b(const ExperimentConfig& config);
ExperimentReport run_theorem1(const ExperimentConfig& config);
ExperimentReport run_theorem1_L1(const ExperimentConfig& config);
ExperimentReport run_theorem2(const ExperimentConfig& config);
ExperimentReport run_k_study(const ExperimentConfig& config);

/// Dispatch on config.kind; fills runtime_seconds.
ExperimentReport run_experiment(const ExperimentConfig& config);

}  // namespace homog
