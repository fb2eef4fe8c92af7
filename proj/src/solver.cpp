#include "homog/solver.hpp"

#include <cmath>
#include <sstream>

namespace homog {

// ---------------------------------------------------------------------------
// closures

Mat FluxClosure::jacobian(std::size_t qp, const Vec& zeta) const {
  const auto n = zeta.size();
  Mat J(n, n);
  const double step = 1e-6 * (1.0 + zeta.norm());
  for (Eigen::Index j = 0; j < n; ++j) {
    Vec plus = zeta, minus = zeta;
    plus(j) += step;
    minus(j) -= step;
    J.col(j) = (flux(qp, plus) - flux(qp, minus)) / (2.0 * step);
  }
  return J;
}

Mat FluxClosure::secant(std::size_t qp, const Vec& zeta) const {
  const Mat J = jacobian(qp, zeta);
  return 0.5 * (J + J.transpose());
}

std::optional<double> FluxClosure::energy(std::size_t, const Vec&) const { return std::nullopt; }

PLaplaceClosure::PLaplaceClosure(std::vector<double> lambda, double p, double epsilon)
    : lambda_(std::move(lambda)), p_(p), epsilon_(epsilon) {
  if (!(p > 1.0)) throw ConfigError("p must be > 1");
  if (p < 2.0 && !(epsilon > 0.0)) throw ConfigError("p < 2 requires epsilon > 0");
}

Vec PLaplaceClosure::flux(std::size_t qp, const Vec& zeta) const {
  return plaplace_flux(lambda_[qp], p_, epsilon_, zeta);
}

Mat PLaplaceClosure::jacobian(std::size_t qp, const Vec& zeta) const {
  return plaplace_jacobian(lambda_[qp], p_, epsilon_, zeta);
}

Mat PLaplaceClosure::secant(std::size_t qp, const Vec& zeta) const {
  const auto n = zeta.size();
  const double s = epsilon_ * epsilon_ + zeta.squaredNorm();
  const double mu = (p_ == 2.0 || s == 0.0) ? (p_ == 2.0 ? lambda_[qp] : 0.0)
                                            : lambda_[qp] * std::pow(s, (p_ - 2.0) / 2.0);
  return mu * Mat::Identity(n, n);
}

std::optional<double> PLaplaceClosure::energy(std::size_t qp, const Vec& zeta) const {
  return plaplace_energy(lambda_[qp], p_, epsilon_, zeta);
}

void SolverConfig::validate() const {
  if (!(residual_tol > 0.0) || !(linear_tol > 0.0) || !(armijo > 0.0) || !(backtrack > 0.0 && backtrack < 1.0))
    throw ConfigError("solver tolerances must be positive");
  if (max_newton < 1 || max_halvings < 0 || linear_max_iter < 1 || picard_after < 1)
    throw ConfigError("solver iteration limits must be positive");
}

// ---------------------------------------------------------------------------
// assembly

namespace {

/// Physical Q1 shape gradients at the reference quadrature points plus the loops
/// shared by residual, energy and the matrix-free linearized operator.
class Assembler {
 public:
  explicit Assembler(const WeakProblem& problem)
      : prob_(problem), grid_(problem.grid), ref_(problem.grid.reference()), dim_(problem.grid.dim()) {
    if (!prob_.flux) throw ConfigError("weak problem has no flux closure");
    if (prob_.xi.size() != dim_) throw ConfigError("forcing direction dimension mismatch");
    grads_.resize(static_cast<std::size_t>(ref_.points) * ref_.corners * dim_);
    for (int q = 0; q < ref_.points; ++q)
      for (int a = 0; a < ref_.corners; ++a)
        for (int d = 0; d < dim_; ++d) {
          const std::size_t k = (static_cast<std::size_t>(q) * ref_.corners + a) * dim_ + d;
          grads_[k] = ref_.dshape[k] / grid_.spacing(d);
        }
    cell_nodes_.resize(grid_.num_cells());
    for (std::size_t c = 0; c < grid_.num_cells(); ++c) cell_nodes_[c] = grid_.cell_nodes(c);
    cell_volume_ = grid_.cell_volume();
  }

  std::size_t nodes() const { return grid_.num_nodes(); }
  std::size_t points() const { return grid_.num_quad_points(); }
  int dim() const { return dim_; }

  double weight(int q) const { return ref_.weight[q] * cell_volume_; }
  double grad(int q, int a, int d) const {
    return grads_[(static_cast<std::size_t>(q) * ref_.corners + a) * dim_ + d];
  }

  /// zeta_q = xi + Du at every quadrature point (dim x points).
  Eigen::MatrixXd total_gradient(const Eigen::VectorXd& u) const {
    Eigen::MatrixXd z(dim_, static_cast<Eigen::Index>(points()));
    for (std::size_t c = 0; c < grid_.num_cells(); ++c) {
      const auto& nd = cell_nodes_[c];
      for (int q = 0; q < ref_.points; ++q) {
        const auto col = static_cast<Eigen::Index>(c * ref_.points + q);
        for (int d = 0; d < dim_; ++d) {
          double s = prob_.xi(d);
          for (int a = 0; a < ref_.corners; ++a) s += grad(q, a, d) * u(static_cast<Eigen::Index>(nd[a]));
          z(d, col) = s;
        }
      }
    }
    return z;
  }

  struct State {
    Eigen::MatrixXd zeta;
    Eigen::VectorXd residual;
    std::optional<double> energy;
  };

  State evaluate(const Eigen::VectorXd& u) const {
    State st;
    st.zeta = total_gradient(u);
    st.residual = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(nodes()));
    double energy = 0.0;
    bool potential = true;
    for (std::size_t c = 0; c < grid_.num_cells(); ++c) {
      const auto& nd = cell_nodes_[c];
      for (int q = 0; q < ref_.points; ++q) {
        const std::size_t qp = c * ref_.points + q;
        const Vec zeta = st.zeta.col(static_cast<Eigen::Index>(qp));
        const Vec f = prob_.flux->flux(qp, zeta);
        const double w = weight(q);
        for (int a = 0; a < ref_.corners; ++a) {
          double s = 0.0;
          for (int d = 0; d < dim_; ++d) s += grad(q, a, d) * f(d);
          st.residual(static_cast<Eigen::Index>(nd[a])) += w * s;
        }
        if (potential) {
          const auto psi = prob_.flux->energy(qp, zeta);
          if (psi)
            energy += w * *psi;
          else
            potential = false;
        }
      }
    }
    if (potential) st.energy = energy;
    return st;
  }

  /// Per-point symmetric moduli (dim*dim each).
  std::vector<double> linearize(const Eigen::MatrixXd& zeta, bool picard) const {
    std::vector<double> k(points() * dim_ * dim_);
    for (std::size_t qp = 0; qp < points(); ++qp) {
      const Vec z = zeta.col(static_cast<Eigen::Index>(qp));
      Mat m = picard ? prob_.flux->secant(qp, z) : prob_.flux->jacobian(qp, z);
      m = 0.5 * (m + m.transpose());
      for (int i = 0; i < dim_; ++i)
        for (int j = 0; j < dim_; ++j) k[(qp * dim_ + i) * dim_ + j] = m(i, j);
    }
    return k;
  }

  void apply(const std::vector<double>& k, const Eigen::VectorXd& x, Eigen::VectorXd& y) const {
    y.setZero(static_cast<Eigen::Index>(nodes()));
    double xl[4], g[2], kg[2];
    for (std::size_t c = 0; c < grid_.num_cells(); ++c) {
      const auto& nd = cell_nodes_[c];
      for (int a = 0; a < ref_.corners; ++a) xl[a] = x(static_cast<Eigen::Index>(nd[a]));
      for (int q = 0; q < ref_.points; ++q) {
        const std::size_t qp = c * ref_.points + q;
        for (int d = 0; d < dim_; ++d) {
          g[d] = 0.0;
          for (int a = 0; a < ref_.corners; ++a) g[d] += grad(q, a, d) * xl[a];
        }
        const double* km = &k[qp * dim_ * dim_];
        const double w = weight(q);
        for (int i = 0; i < dim_; ++i) {
          kg[i] = 0.0;
          for (int j = 0; j < dim_; ++j) kg[i] += km[i * dim_ + j] * g[j];
          kg[i] *= w;
        }
        for (int a = 0; a < ref_.corners; ++a) {
          double s = 0.0;
          for (int d = 0; d < dim_; ++d) s += grad(q, a, d) * kg[d];
          y(static_cast<Eigen::Index>(nd[a])) += s;
        }
      }
    }
  }

  Eigen::VectorXd diagonal(const std::vector<double>& k) const {
    Eigen::VectorXd diag = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(nodes()));
    for (std::size_t c = 0; c < grid_.num_cells(); ++c) {
      const auto& nd = cell_nodes_[c];
      for (int q = 0; q < ref_.points; ++q) {
        const std::size_t qp = c * ref_.points + q;
        const double* km = &k[qp * dim_ * dim_];
        for (int a = 0; a < ref_.corners; ++a) {
          double s = 0.0;
          for (int i = 0; i < dim_; ++i)
            for (int j = 0; j < dim_; ++j) s += grad(q, a, i) * km[i * dim_ + j] * grad(q, a, j);
          diag(static_cast<Eigen::Index>(nd[a])) += weight(q) * s;
        }
      }
    }
    return diag;
  }

  Vec mean_flux(const Eigen::MatrixXd& zeta) const {
    Vec m = Vec::Zero(dim_);
    for (std::size_t c = 0; c < grid_.num_cells(); ++c)
      for (int q = 0; q < ref_.points; ++q) {
        const std::size_t qp = c * ref_.points + q;
        m += weight(q) * prob_.flux->flux(qp, zeta.col(static_cast<Eigen::Index>(qp)));
      }
    return m / grid_.measure();
  }

 private:
  const WeakProblem& prob_;
  const TorusGrid& grid_;
  const ReferenceCell& ref_;
  int dim_;
  std::vector<double> grads_;
  std::vector<std::array<std::size_t, 4>> cell_nodes_;
  double cell_volume_ = 1.0;
};

void project_mean_zero(Eigen::VectorXd& v) { v.array() -= v.mean(); }

struct CgOutcome {
  int iterations = 0;
  bool breakdown = false;
};

/// Jacobi-preconditioned CG on the mean-zero subspace.
CgOutcome projected_cg(const Assembler& asmb, const std::vector<double>& k, const Eigen::VectorXd& rhs,
                       Eigen::VectorXd& x, double rel_tol, int max_iter) {
  CgOutcome out;
  const Eigen::Index n = rhs.size();
  Eigen::VectorXd diag = asmb.diagonal(k);
  Eigen::VectorXd inv = Eigen::VectorXd::Ones(n);
  for (Eigen::Index i = 0; i < n; ++i)
    if (diag(i) > 0.0) inv(i) = 1.0 / diag(i);
  Eigen::VectorXd r = rhs;
  project_mean_zero(r);
  x.setZero(n);
  const double bnorm = r.norm();
  if (bnorm == 0.0) return out;
  Eigen::VectorXd z = inv.cwiseProduct(r);
  project_mean_zero(z);
  Eigen::VectorXd p = z, Ap(n);
  double rz = r.dot(z);
  for (int it = 0; it < max_iter; ++it) {
    asmb.apply(k, p, Ap);
    const double pAp = p.dot(Ap);
    out.iterations = it + 1;
    if (!(pAp > 0.0)) {
      out.breakdown = true;
      return out;
    }
    const double alpha = rz / pAp;
    x.noalias() += alpha * p;
    r.noalias() -= alpha * Ap;
    if (r.norm() <= rel_tol * bnorm) break;
    z = inv.cwiseProduct(r);
    project_mean_zero(z);
    const double rz_new = r.dot(z);
    p = z + (rz_new / rz) * p;
    rz = rz_new;
  }
  project_mean_zero(x);
  return out;
}

}  // namespace

Eigen::VectorXd assemble_residual(const WeakProblem& problem, const PeriodicScalarField& u) {
  if (u.grid() != problem.grid) throw ConfigError("field grid differs from problem grid");
  return Assembler(problem).evaluate(u.values()).residual;
}

double residual_dual_norm(const TorusGrid& grid, const Eigen::VectorXd& residual) {
  return std::sqrt(residual.squaredNorm() / grid.cell_volume());
}

std::optional<double> assemble_energy(const WeakProblem& problem, const PeriodicScalarField& u) {
  if (u.grid() != problem.grid) throw ConfigError("field grid differs from problem grid");
  return Assembler(problem).evaluate(u.values()).energy;
}

QuadVectorField total_gradient(const WeakProblem& problem, const PeriodicScalarField& u) {
  if (u.grid() != problem.grid) throw ConfigError("field grid differs from problem grid");
  return {problem.grid, Assembler(problem).total_gradient(u.values())};
}

QuadVectorField flux_field(const WeakProblem& problem, const PeriodicScalarField& u) {
  const QuadVectorField z = total_gradient(problem, u);
  Eigen::MatrixXd f(z.vectors().rows(), z.vectors().cols());
  for (Eigen::Index qp = 0; qp < f.cols(); ++qp)
    f.col(qp) = problem.flux->flux(static_cast<std::size_t>(qp), z.vectors().col(qp));
  return {problem.grid, std::move(f)};
}

SolveResult solve(const WeakProblem& problem, const SolverConfig& config,
                  const std::optional<PeriodicScalarField>& initial_guess) {
  config.validate();
  const Assembler asmb(problem);
  const TorusGrid& grid = problem.grid;

  Eigen::VectorXd u = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(grid.num_nodes()));
  if (initial_guess) {
    if (initial_guess->grid() != grid) throw ConfigError("initial guess grid differs from problem grid");
    u = initial_guess->values();
    project_mean_zero(u);
  }

  SolveResult result{PeriodicScalarField::zeros(grid), 0.0, 0, 0, 0, {}, false, Vec(), Vec()};
  result.xi = problem.xi;
  Assembler::State st = asmb.evaluate(u);
  double res = residual_dual_norm(grid, st.residual);
  if (st.energy) result.energy_trace.push_back(*st.energy);

  bool picard_next = problem.flux->degenerate_at_zero();
  int damped = 0;
  for (int pass = 1; pass <= config.max_newton; ++pass) {
    result.iterations = pass;
    if (res <= config.residual_tol) {
      result.converged = true;
      break;
    }
    if (pass == config.max_newton) break;
    const bool picard = picard_next;
    picard_next = false;

    const std::vector<double> k = asmb.linearize(st.zeta, picard);
    const double eta =
        std::min(1e-2, std::max(config.linear_tol, 0.1 * config.residual_tol / res));
    Eigen::VectorXd delta;
    const CgOutcome cg = projected_cg(asmb, k, -st.residual, delta, eta, config.linear_max_iter);
    result.linear_iterations += cg.iterations;
    if (cg.breakdown) {
      if (picard) throw SingularLinearization("linearized system is not positive definite; regularize epsilon");
      picard_next = true;
      continue;
    }

    const double slope = st.residual.dot(delta);
    double step = 1.0;
    bool accepted = false;
    int halvings = 0;
    Assembler::State trial;
    double trial_res = res;
    for (; halvings <= config.max_halvings; ++halvings, step *= config.backtrack) {
      trial = asmb.evaluate(u + step * delta);
      trial_res = residual_dual_norm(grid, trial.residual);
      if (st.energy && trial.energy) {
        const double e0 = *st.energy, e1 = *trial.energy;
        const bool armijo = e1 <= e0 + config.armijo * step * slope;
        // Near the solution the energy decrease sinks below roundoff of the sum.
        const bool flat = std::abs(e1 - e0) <= 1e-14 * (1.0 + std::abs(e0)) && trial_res < res;
        if (armijo || flat) {
          accepted = true;
          break;
        }
      } else if (trial_res <= (1.0 - config.armijo * step) * res) {
        accepted = true;
        break;
      }
    }
    if (!accepted) {
      if (picard) break;
      picard_next = true;
      continue;
    }
    if (picard) ++result.picard_steps;
    u += step * delta;
    project_mean_zero(u);
    st = std::move(trial);
    res = trial_res;
    if (st.energy) result.energy_trace.push_back(*st.energy);
    damped = halvings > 0 ? damped + 1 : 0;
    if (damped >= config.picard_after) {
      picard_next = true;
      damped = 0;
    }
  }
  if (!result.converged && res <= config.residual_tol) result.converged = true;

  result.solution = PeriodicScalarField(grid, u, true);
  result.residual_norm = res;
  result.mean_flux = asmb.mean_flux(st.zeta);
  return result;
}

// ---------------------------------------------------------------------------
// builders

std::shared_ptr<const FluxClosure> cell_closure(const FluxOperator& op, const Point& y,
                                                const TorusGrid& cell_grid) {
  op.validate();
  if (cell_grid.dim() != op.dim) throw ConfigError("cell grid dimension differs from operator dim");
  std::vector<double> lambda(cell_grid.num_quad_points());
  for (std::size_t qp = 0; qp < lambda.size(); ++qp) lambda[qp] = op.coefficient(y, cell_grid.quad_point(qp));
  return std::make_shared<PLaplaceClosure>(std::move(lambda), op.p, op.epsilon);
}

SolveResult solve_cell_problem(const FluxOperator& op, const Point& y, const Vec& tau,
                               const TorusGrid& cell_grid, const SolverConfig& config,
                               const std::optional<PeriodicScalarField>& initial_guess) {
  WeakProblem problem{cell_grid, cell_closure(op, y, cell_grid), tau};
  return solve(problem, config, initial_guess);
}

WeakProblem build_oscillating_problem(const FluxOperator& op, const Vec& xi, int h, const TorusGrid& grid,
                                      const std::function<Point(const Point&)>& y_of) {
  op.validate();
  if (h < 1) throw ConfigError("oscillation factor h must be >= 1");
  if (grid.dim() != op.dim) throw ConfigError("grid dimension differs from operator dim");
  for (int d = 0; d < grid.dim(); ++d)
    if (grid.resolution(d) < 8 * h)
      throw ConfigError("oscillating problem needs >= 8h nodes per axis");
  std::vector<double> lambda(grid.num_quad_points());
  for (std::size_t qp = 0; qp < lambda.size(); ++qp) {
    const Point x = grid.quad_point(qp);
    lambda[qp] = op.coefficient(y_of(x), static_cast<double>(h) * x);
  }
  return {grid, std::make_shared<PLaplaceClosure>(std::move(lambda), op.p, op.epsilon), xi};
}

WeakProblem build_oscillating_problem(const FluxOperator& op, const Vec& xi, int h, const TorusGrid& grid) {
  return build_oscillating_problem(op, xi, h, grid, [](const Point& x) { return x; });
}

QuadVectorField CorrectorExpansion::gradient() const {
  return homog::gradient(oscillatory) + constant_vectors(oscillatory.grid(), slope);
}

CorrectorExpansion corrector_expansion(const SolveResult& cell, int h, const TorusGrid& target) {
  if (!cell.converged) throw ConfigError("corrector expansion needs a converged cell solution");
  PeriodicScalarField w = sample_oscillated(cell.solution, h, target);
  return {PeriodicScalarField(target, w.values() / static_cast<double>(h)), cell.xi, h};
}

}  // namespace homog
