#include "homog/periodic_field.hpp"

#include <cmath>
#include <numbers>

namespace homog {

PeriodicScalarField::PeriodicScalarField(TorusGrid grid, Eigen::VectorXd values, bool mean_zero)
    : grid_(std::move(grid)), values_(std::move(values)), mean_zero_(mean_zero) {
  if (values_.size() != static_cast<Eigen::Index>(grid_.num_nodes()))
    throw ConfigError("field size does not match grid node count");
  if (!values_.allFinite()) throw ConfigError("field values must be finite");
  if (mean_zero_) {
    const double mean = values_.mean();
    const double scale = values_.size() ? values_.cwiseAbs().maxCoeff() : 0.0;
    if (std::abs(mean) > 1e-10 * (1.0 + scale))
      throw ConfigError("field flagged mean-zero has nonzero mean");
  }
}

PeriodicScalarField PeriodicScalarField::from_function(
    const TorusGrid& grid, const std::function<double(const Point&)>& f) {
  Eigen::VectorXd v(static_cast<Eigen::Index>(grid.num_nodes()));
  for (std::size_t i = 0; i < grid.num_nodes(); ++i) v(static_cast<Eigen::Index>(i)) = f(grid.node_point(i));
  return {grid, std::move(v)};
}

QuadVectorField::QuadVectorField(TorusGrid grid, Eigen::MatrixXd vectors)
    : grid_(std::move(grid)), vectors_(std::move(vectors)) {
  if (vectors_.rows() != grid_.dim() ||
      vectors_.cols() != static_cast<Eigen::Index>(grid_.num_quad_points()))
    throw ConfigError("quadrature field shape does not match grid");
  if (!vectors_.allFinite()) throw ConfigError("quadrature field values must be finite");
}

bool Box::contains(const Point& x) const {
  for (Eigen::Index d = 0; d < x.size(); ++d)
    if (x(d) < lo(d) || x(d) > hi(d)) return false;
  return true;
}

double TestFunction::operator()(const Point& x) const {
  if (!support.contains(x)) return 0.0;
  auto coef = [&](std::size_t i) { return i < coefficients.size() ? coefficients[i] : 0.0; };
  const double px = x(0);
  const double py = x.size() > 1 ? x(1) : 0.0;
  switch (kind) {
    case Kind::polynomial:
      return coef(0) + coef(1) * px + coef(2) * py + coef(3) * px * py + coef(4) * px * px +
             coef(5) * py * py;
    case Kind::trigonometric:
      return coef(0) * std::sin(2.0 * std::numbers::pi * (coef(1) * px + coef(2) * py) + coef(3));
    case Kind::bump: {
      double v = coef(0);
      for (Eigen::Index d = 0; d < x.size(); ++d) {
        const double half = 0.5 * (support.hi(d) - support.lo(d));
        const double s = (x(d) - 0.5 * (support.hi(d) + support.lo(d))) / half;
        if (std::abs(s) >= 1.0) return 0.0;
        v *= std::exp(1.0 - 1.0 / (1.0 - s * s));
      }
      return v;
    }
  }
  return 0.0;
}

namespace {

Box unit_box(int dim) {
  return {Point::Zero(dim), Point::Ones(dim)};
}

}  // namespace

TestFunction polynomial_test(int dim, std::vector<double> coefficients, std::string label) {
  return {TestFunction::Kind::polynomial, std::move(coefficients), unit_box(dim), std::move(label)};
}

TestFunction trig_test(int dim, double amplitude, double kx, double ky, double phase,
                       std::string label) {
  return {TestFunction::Kind::trigonometric, {amplitude, kx, ky, phase}, unit_box(dim),
          std::move(label)};
}

TestFunction bump_test(Box support, double amplitude, std::string label) {
  return {TestFunction::Kind::bump, {amplitude}, std::move(support), std::move(label)};
}

std::vector<TestFunction> default_test_bank(int dim) {
  const double quarter = std::numbers::pi / 2.0;
  std::vector<TestFunction> bank;
  bank.push_back(polynomial_test(dim, {1.0}, "one"));
  bank.push_back(polynomial_test(dim, {0.0, 1.0}, "x"));
  if (dim == 2) {
    bank.push_back(polynomial_test(dim, {0.0, 0.0, 1.0}, "y"));
    bank.push_back(trig_test(dim, 1.0, 1.0, 0.0, 0.0, "sin_x"));
    bank.push_back(trig_test(dim, 1.0, 1.0, 0.0, quarter, "cos_x"));
    bank.push_back(trig_test(dim, 1.0, 0.0, 1.0, 0.0, "sin_y"));
    bank.push_back(trig_test(dim, 1.0, 0.0, 1.0, quarter, "cos_y"));
  } else {
    bank.push_back(polynomial_test(dim, {0.0, 0.0, 0.0, 0.0, 1.0}, "x2"));
    bank.push_back(trig_test(dim, 1.0, 1.0, 0.0, 0.0, "sin_x"));
    bank.push_back(trig_test(dim, 1.0, 1.0, 0.0, quarter, "cos_x"));
    bank.push_back(trig_test(dim, 1.0, 2.0, 0.0, 0.0, "sin_2x"));
    bank.push_back(trig_test(dim, 1.0, 2.0, 0.0, quarter, "cos_2x"));
  }
  bank.push_back(bump_test({Point::Constant(dim, 0.2), Point::Constant(dim, 0.8)}, 1.0, "bump"));
  return bank;
}

double mean_value(const PeriodicScalarField& u) {
  // The Gauss integral of the Q1 interpolant on a uniform torus equals the nodal average.
  return u.values().mean();
}

PeriodicScalarField remove_mean(const PeriodicScalarField& u) {
  Eigen::VectorXd v = u.values().array() - u.values().mean();
  return {u.grid(), std::move(v), true};
}

PeriodicScalarField sample_oscillated(const PeriodicScalarField& u, int h, const TorusGrid& target) {
  if (h < 1) throw ConfigError("oscillation factor h must be >= 1");
  if (target.dim() != u.grid().dim()) throw ConfigError("target grid dimension mismatch");
  for (int d = 0; d < target.dim(); ++d)
    if (target.resolution(d) < 4 * h)
      throw ConfigError("target grid under-resolves the oscillation (need >= 4h nodes per axis)");
  Eigen::VectorXd w(static_cast<Eigen::Index>(target.num_nodes()));
  const TorusGrid& src = u.grid();
  for (std::size_t i = 0; i < target.num_nodes(); ++i) {
    // Integer node arithmetic keeps hx mod Y exact on the node lattice.
    Point x(target.dim());
    const std::size_t k[2] = {i % target.resolution(0), i / target.resolution(0)};
    for (int d = 0; d < target.dim(); ++d) {
      const long n = target.resolution(d);
      const long m = (static_cast<long>(h) * static_cast<long>(k[d])) % n;
      x(d) = src.length(d) * static_cast<double>(m) / static_cast<double>(n);
    }
    w(static_cast<Eigen::Index>(i)) = u.interpolate(x);
  }
  return {target, std::move(w)};
}

PeriodicScalarField resample(const PeriodicScalarField& u, const TorusGrid& target) {
  if (target.dim() != u.grid().dim()) throw ConfigError("target grid dimension mismatch");
  Eigen::VectorXd w(static_cast<Eigen::Index>(target.num_nodes()));
  for (std::size_t i = 0; i < target.num_nodes(); ++i)
    w(static_cast<Eigen::Index>(i)) = u.interpolate(target.node_point(i));
  return {target, std::move(w)};
}

namespace {

void check_support(const TorusGrid& g, const TestFunction& phi) {
  for (int d = 0; d < g.dim(); ++d) {
    if (phi.support.lo.size() <= d || phi.support.hi.size() <= d)
      throw ConfigError("test function support dimension mismatch");
    if (phi.support.lo(d) < 0.0 || phi.support.hi(d) > g.length(d) ||
        phi.support.lo(d) >= phi.support.hi(d))
      throw ConfigError("test function support must lie inside the grid domain");
  }
}

}  // namespace

double weak_pairing(const PeriodicScalarField& w, const TestFunction& phi) {
  const TorusGrid& g = w.grid();
  check_support(g, phi);
  const ReferenceCell& ref = g.reference();
  double sum = 0.0;
  for (std::size_t c = 0; c < g.num_cells(); ++c) {
    const auto nodes = g.cell_nodes(c);
    double cell_sum = 0.0;
    for (int q = 0; q < ref.points; ++q) {
      const std::size_t qp = c * ref.points + q;
      double wq = 0.0;
      for (int a = 0; a < ref.corners; ++a) wq += ref.value[q * ref.corners + a] * w[nodes[a]];
      cell_sum += ref.weight[q] * wq * phi(g.quad_point(qp));
    }
    sum += cell_sum;
  }
  return sum * g.cell_volume();
}

double integral(const TorusGrid& grid, const TestFunction& phi) {
  check_support(grid, phi);
  double sum = 0.0;
  for (std::size_t qp = 0; qp < grid.num_quad_points(); ++qp)
    sum += grid.quad_weight(qp) * phi(grid.quad_point(qp));
  return sum;
}

double weak_pairing(const QuadVectorField& f, const TestFunction& phi, int component) {
  const TorusGrid& g = f.grid();
  check_support(g, phi);
  double sum = 0.0;
  for (std::size_t qp = 0; qp < g.num_quad_points(); ++qp)
    sum += g.quad_weight(qp) * f.vectors()(component, static_cast<Eigen::Index>(qp)) *
           phi(g.quad_point(qp));
  return sum;
}

QuadVectorField gradient(const PeriodicScalarField& u) {
  const TorusGrid& g = u.grid();
  const ReferenceCell& ref = g.reference();
  const int dim = g.dim();
  Eigen::MatrixXd out(dim, static_cast<Eigen::Index>(g.num_quad_points()));
  for (std::size_t c = 0; c < g.num_cells(); ++c) {
    const auto nodes = g.cell_nodes(c);
    for (int q = 0; q < ref.points; ++q) {
      const auto col = static_cast<Eigen::Index>(c * ref.points + q);
      for (int d = 0; d < dim; ++d) {
        double s = 0.0;
        for (int a = 0; a < ref.corners; ++a)
          s += ref.dshape[(q * ref.corners + a) * dim + d] * u[nodes[a]];
        out(d, col) = s / g.spacing(d);
      }
    }
  }
  return {g, std::move(out)};
}

std::vector<double> equi_integrability_profile(const PeriodicScalarField& u,
                                               const std::vector<double>& thresholds) {
  for (std::size_t i = 1; i < thresholds.size(); ++i)
    if (!(thresholds[i] > thresholds[i - 1]))
      throw ConfigError("thresholds must be strictly increasing");
  const double w = u.grid().cell_volume();
  std::vector<double> out;
  out.reserve(thresholds.size());
  for (double t : thresholds) {
    double s = 0.0;
    for (Eigen::Index i = 0; i < u.values().size(); ++i)
      if (u.values()(i) >= t) s += std::abs(u.values()(i));
    out.push_back(s * w);
  }
  return out;
}

PeriodicScalarField truncate_at(const PeriodicScalarField& u, double t) {
  Eigen::VectorXd v = (u.values().array() >= t).select(0.0, u.values());
  return {u.grid(), std::move(v)};
}

double lp_norm(const PeriodicScalarField& u, double p) {
  if (!(p >= 1.0)) throw ConfigError("L^p norm requires p >= 1");
  const double w = u.grid().cell_volume();
  return std::pow(u.values().array().abs().pow(p).sum() * w, 1.0 / p);
}

double lp_norm(const QuadVectorField& f, double p) {
  if (!(p >= 1.0)) throw ConfigError("L^p norm requires p >= 1");
  const TorusGrid& g = f.grid();
  double s = 0.0;
  for (std::size_t qp = 0; qp < g.num_quad_points(); ++qp)
    s += g.quad_weight(qp) * std::pow(f.vectors().col(static_cast<Eigen::Index>(qp)).norm(), p);
  return std::pow(s, 1.0 / p);
}

namespace {

void require_same_grid(const TorusGrid& a, const TorusGrid& b) {
  if (a != b) throw ConfigError("field arithmetic requires identical grids");
}

}  // namespace

PeriodicScalarField operator-(const PeriodicScalarField& a, const PeriodicScalarField& b) {
  require_same_grid(a.grid(), b.grid());
  return {a.grid(), a.values() - b.values()};
}

PeriodicScalarField operator+(const PeriodicScalarField& a, const PeriodicScalarField& b) {
  require_same_grid(a.grid(), b.grid());
  return {a.grid(), a.values() + b.values()};
}

PeriodicScalarField operator*(double s, const PeriodicScalarField& a) {
  return {a.grid(), s * a.values(), a.mean_zero()};
}

QuadVectorField operator-(const QuadVectorField& a, const QuadVectorField& b) {
  require_same_grid(a.grid(), b.grid());
  return {a.grid(), a.vectors() - b.vectors()};
}

QuadVectorField operator+(const QuadVectorField& a, const QuadVectorField& b) {
  require_same_grid(a.grid(), b.grid());
  return {a.grid(), a.vectors() + b.vectors()};
}

QuadVectorField constant_vectors(const TorusGrid& grid, const Vec& v) {
  Eigen::MatrixXd m = v.replicate(1, static_cast<Eigen::Index>(grid.num_quad_points()));
  return {grid, std::move(m)};
}

}  // namespace homog
