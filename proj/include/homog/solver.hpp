#pragma once

#include "homog/flux.hpp"
#include "homog/periodic_field.hpp"

#include <memory>
#include <optional>
#include <vector>

namespace homog {

/// Flux law F(x, zeta) bound to the quadrature points of one grid.
///
/// `qp` indexes TorusGrid::quad_point; implementations may precompute
/// per-point coefficients. zeta is the full gradient xi + Du.
class FluxClosure {
 public:
  virtual ~FluxClosure() = default;

  virtual Vec flux(std::size_t qp, const Vec& zeta) const = 0;
  /// dF/dzeta. Default: central finite differences of flux().
  virtual Mat jacobian(std::size_t qp, const Vec& zeta) const;
  /// Frozen-coefficient (Picard) modulus. Default: symmetric part of the Jacobian.
  virtual Mat secant(std::size_t qp, const Vec& zeta) const;
  /// Energy density whose zeta-gradient is flux(); nullopt for non-potential laws.
  virtual std::optional<double> energy(std::size_t qp, const Vec& zeta) const;
  /// True when the Jacobian vanishes at zeta = 0 (p > 2, eps = 0).
  virtual bool degenerate_at_zero() const { return false; }
};

/// lambda_q (eps^2 + |zeta|^2)^{(p-2)/2} zeta with one coefficient per quadrature point.
class PLaplaceClosure final : public FluxClosure {
 public:
  PLaplaceClosure(std::vector<double> lambda, double p, double epsilon);

  Vec flux(std::size_t qp, const Vec& zeta) const override;
  Mat jacobian(std::size_t qp, const Vec& zeta) const override;
  Mat secant(std::size_t qp, const Vec& zeta) const override;
  std::optional<double> energy(std::size_t qp, const Vec& zeta) const override;
  bool degenerate_at_zero() const override { return p_ > 2.0 && epsilon_ == 0.0; }

  double lambda(std::size_t qp) const { return lambda_[qp]; }

 private:
  std::vector<double> lambda_;
  double p_;
  double epsilon_;
};

/// Closure from a plain callable F(x, zeta); non-potential, FD Jacobian.
class FunctionClosure final : public FluxClosure {
 public:
  using Fn = std::function<Vec(const Point&, const Vec&)>;
  FunctionClosure(TorusGrid grid, Fn fn) : grid_(std::move(grid)), fn_(std::move(fn)) {}
  Vec flux(std::size_t qp, const Vec& zeta) const override { return fn_(grid_.quad_point(qp), zeta); }

 private:
  TorusGrid grid_;
  Fn fn_;
};

/// Find u in mean-zero periodic Q1 with int (F(x, xi + Du), D phi) = 0 for all phi.
struct WeakProblem {
  TorusGrid grid;
  std::shared_ptr<const FluxClosure> flux;
  Vec xi;
};

struct SolverConfig {
  double residual_tol = 1e-10;
  int max_newton = 50;
  double armijo = 1e-4;
  double backtrack = 0.5;
  int max_halvings = 30;
  double linear_tol = 1e-12;
  int linear_max_iter = 200000;
  /// Consecutive damped Newton steps before one Picard step is taken.
  int picard_after = 3;

  void validate() const;
};

struct SolveResult {
  PeriodicScalarField solution;
  double residual_norm = 0.0;
  int iterations = 0;
  int linear_iterations = 0;
  int picard_steps = 0;
  std::vector<double> energy_trace;
  bool converged = false;
  /// |Y|^{-1} int F(x, xi + Du) dx.
  Vec mean_flux;
  Vec xi;
};

class NotConverged : public std::runtime_error {
 public:
  NotConverged(const std::string& what, SolveResult result)
      : std::runtime_error(what), result_(std::make_shared<SolveResult>(std::move(result))) {}
  const SolveResult& result() const { return *result_; }

 private:
  std::shared_ptr<SolveResult> result_;
};

/// Damped Newton with Armijo backtracking on the energy (or the residual norm for
/// non-potential laws), Picard fallback, projected Jacobi-CG linear solves.
/// Throws SingularLinearization when neither Newton nor Picard yields an SPD system.
SolveResult solve(const WeakProblem& problem, const SolverConfig& config = {},
                  const std::optional<PeriodicScalarField>& initial_guess = std::nullopt);

/// Assembled weak residual R_i = int (F(x, xi + Du), D phi_i) for a given u.
Eigen::VectorXd assemble_residual(const WeakProblem& problem, const PeriodicScalarField& u);

/// sqrt(sum_i R_i^2 / w_i) with w_i the nodal quadrature weight.
double residual_dual_norm(const TorusGrid& grid, const Eigen::VectorXd& residual);

/// Discrete energy sum_q w_q psi(x_q, xi + Du), nullopt for non-potential laws.
std::optional<double> assemble_energy(const WeakProblem& problem, const PeriodicScalarField& u);

/// xi + Du at every quadrature point.
QuadVectorField total_gradient(const WeakProblem& problem, const PeriodicScalarField& u);
/// F(x, xi + Du) at every quadrature point.
QuadVectorField flux_field(const WeakProblem& problem, const PeriodicScalarField& u);

// ---------------------------------------------------------------------------
// Problem builders

/// Closure z -> a(y, z, .) on a cell grid over Z.
std::shared_ptr<const FluxClosure> cell_closure(const FluxOperator& op, const Point& y,
                                                const TorusGrid& cell_grid);

/// Cell problem for b(y, tau); the result's mean_flux is the averaged flux b(y, tau).
SolveResult solve_cell_problem(const FluxOperator& op, const Point& y, const Vec& tau,
                               const TorusGrid& cell_grid, const SolverConfig& config = {},
                               const std::optional<PeriodicScalarField>& initial_guess = std::nullopt);

/// Oscillating problem with closure x -> a(x, h x mod Z, .), coefficients evaluated
/// exactly at quadrature points. Requires >= 8h nodes per axis.
WeakProblem build_oscillating_problem(const FluxOperator& op, const Vec& xi, int h,
                                      const TorusGrid& grid);

/// Oscillating problem with an arbitrary macro-point map: a(y_of(x), h x mod Z, .).
WeakProblem build_oscillating_problem(const FluxOperator& op, const Vec& xi, int h,
                                      const TorusGrid& grid,
                                      const std::function<Point(const Point&)>& y_of);

/// w(x) = (tau, x) + h^{-1} v(h x); the affine slope is kept as metadata.
struct CorrectorExpansion {
  PeriodicScalarField oscillatory;
  Vec slope;
  int h = 1;

  /// tau + D(h^{-1} v(h .)) at the quadrature points of the target grid.
  QuadVectorField gradient() const;
};

CorrectorExpansion corrector_expansion(const SolveResult& cell, int h, const TorusGrid& target);

}  // namespace homog
