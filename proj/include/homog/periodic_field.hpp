#pragma once

#include "homog/torus_grid.hpp"

#include <functional>
#include <string>
#include <vector>

namespace homog {

/// Nodal values of a Y-periodic function. Values are immutable once built.
class PeriodicScalarField {
 public:
  PeriodicScalarField(TorusGrid grid, Eigen::VectorXd values, bool mean_zero = false);

  static PeriodicScalarField zeros(const TorusGrid& grid, bool mean_zero = true) {
    return {grid, Eigen::VectorXd::Zero(static_cast<Eigen::Index>(grid.num_nodes())), mean_zero};
  }
  static PeriodicScalarField constant(const TorusGrid& grid, double c) {
    return {grid, Eigen::VectorXd::Constant(static_cast<Eigen::Index>(grid.num_nodes()), c)};
  }
  static PeriodicScalarField from_function(const TorusGrid& grid,
                                           const std::function<double(const Point&)>& f);

  const TorusGrid& grid() const { return grid_; }
  const Eigen::VectorXd& values() const { return values_; }
  double operator[](std::size_t node) const { return values_(static_cast<Eigen::Index>(node)); }
  bool mean_zero() const { return mean_zero_; }

  double interpolate(const Point& x) const { return grid_.interpolate(values_, x); }
  Vec interpolate_gradient(const Point& x) const { return grid_.interpolate_gradient(values_, x); }

 private:
  TorusGrid grid_;
  Eigen::VectorXd values_;
  bool mean_zero_;
};

/// One vector per quadrature point of a grid, stored column-wise (dim x points).
class QuadVectorField {
 public:
  QuadVectorField(TorusGrid grid, Eigen::MatrixXd vectors);
  const TorusGrid& grid() const { return grid_; }
  const Eigen::MatrixXd& vectors() const { return vectors_; }
  Vec at(std::size_t qp) const { return vectors_.col(static_cast<Eigen::Index>(qp)); }

 private:
  TorusGrid grid_;
  Eigen::MatrixXd vectors_;
};

/// Support box for test functions: [lo, hi] per axis.
struct Box {
  Point lo;
  Point hi;
  bool contains(const Point& x) const;
};

/// Smooth test function phi on the domain.
///
/// polynomial:    coefficients {c0, cx, cy, cxy, cxx, cyy}, missing entries are 0.
/// trigonometric: coefficients {amplitude, kx, ky, phase}; amplitude*sin(2pi(kx x + ky y) + phase).
/// bump:          coefficients {amplitude}; exp(1 - 1/(1-s^2)) product over axes, vanishes
///                on the boundary of its support.
struct TestFunction {
  enum class Kind { polynomial, trigonometric, bump };
  Kind kind = Kind::polynomial;
  std::vector<double> coefficients{1.0};
  Box support;
  std::string label;

  double operator()(const Point& x) const;
};

TestFunction polynomial_test(int dim, std::vector<double> coefficients, std::string label);
TestFunction trig_test(int dim, double amplitude, double kx, double ky, double phase,
                       std::string label);
TestFunction bump_test(Box support, double amplitude, std::string label);

/// The default 8-function bank. 2D: 1, x, y, sin/cos(2pi x), sin/cos(2pi y), interior bump.
/// 1D: 1, x, x^2, sin/cos(2pi x), sin/cos(4pi x), interior bump.
std::vector<TestFunction> default_test_bank(int dim);

/// Quadrature mean |Y|^{-1} int_Y u.
double mean_value(const PeriodicScalarField& u);

/// u - mean(u), flagged mean-zero.
PeriodicScalarField remove_mean(const PeriodicScalarField& u);

/// w(x) = u(h x mod Y) on `target`, by periodic multilinear interpolation of u.
/// Requires integer h >= 1 and target resolution >= 4h per axis.
PeriodicScalarField sample_oscillated(const PeriodicScalarField& u, int h, const TorusGrid& target);

/// Interpolate u onto another grid over the same rectangle.
PeriodicScalarField resample(const PeriodicScalarField& u, const TorusGrid& target);

/// Quadrature value of int w phi dx (Gauss points of w's grid, phi evaluated exactly).
double weak_pairing(const PeriodicScalarField& w, const TestFunction& phi);
/// Quadrature value of int phi dx on the grid.
double integral(const TorusGrid& grid, const TestFunction& phi);
/// int (F, phi e_component) dx for a quadrature vector field.
double weak_pairing(const QuadVectorField& f, const TestFunction& phi, int component);

/// Gradient of the multilinear interpolant at the quadrature points.
QuadVectorField gradient(const PeriodicScalarField& u);

/// int_{u >= t} |u| dx for each threshold, nodal indicator with cell-volume weights.
std::vector<double> equi_integrability_profile(const PeriodicScalarField& u,
                                               const std::vector<double>& thresholds);

/// u where u < t, 0 where u >= t.
PeriodicScalarField truncate_at(const PeriodicScalarField& u, double t);

/// L^p norm. Nodal fields use the periodic trapezoid rule; quadrature fields use
/// the Euclidean norm of each vector with the Gauss weights.
double lp_norm(const PeriodicScalarField& u, double p);
double lp_norm(const QuadVectorField& f, double p);

PeriodicScalarField operator-(const PeriodicScalarField& a, const PeriodicScalarField& b);
PeriodicScalarField operator+(const PeriodicScalarField& a, const PeriodicScalarField& b);
PeriodicScalarField operator*(double s, const PeriodicScalarField& a);
QuadVectorField operator-(const QuadVectorField& a, const QuadVectorField& b);
QuadVectorField operator+(const QuadVectorField& a, const QuadVectorField& b);

/// Constant vector at every quadrature point of grid.
QuadVectorField constant_vectors(const TorusGrid& grid, const Vec& v);

}  // namespace homog
