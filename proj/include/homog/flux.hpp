#pragma once

#include "homog/types.hpp"

#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace homog {

/// Coefficient lambda(y, z) = y_factor(y) * z_factor(z).
///
/// The z-pattern is 1-periodic in every axis. The y-modulation is either absent,
/// smooth (1 + m sin(2 pi y_0)) or piecewise constant in y_0 with jumps at
/// `piece_breaks`.
struct CoefficientField {
  enum class ZPattern { constant, laminate, checkerboard, trig };
  enum class YModulation { none, smooth, piecewise };

  ZPattern pattern = ZPattern::constant;
  // constant: {c}; laminate / checkerboard: {lambda_1, lambda_2}; trig: {mean}
  std::vector<double> levels{1.0};
  double laminate_fraction = 0.5;  // share of lambda_1 along the laminate axis
  int laminate_axis = 0;
  double trig_amplitude = 0.5;     // trig: mean * (1 + amp sin(2 pi z_0))

  YModulation modulation = YModulation::none;
  double modulation_amplitude = 0.5;
  std::vector<double> piece_breaks{0.5};
  std::vector<double> piece_scales{1.0, 2.0};

  double z_factor(const Point& z) const;
  double y_factor(const Point& y) const;
  double operator()(const Point& y, const Point& z) const { return y_factor(y) * z_factor(z); }

  /// Index of the y-piece containing y (always 0 unless piecewise).
  int piece(const Point& y) const;
  int num_pieces() const;
  bool depends_on_y() const { return modulation != YModulation::none; }
  bool depends_on_z() const;

  double lower_bound() const;
  double upper_bound() const;
  /// Short kind name: constant | laminate_z | checkerboard_z | trig_z | y_modulated | piecewise_y.
  std::string kind_name() const;
  void validate() const;
};

/// a(y, z, xi) = lambda(y, z) (eps^2 + |xi|^2)^{(p-2)/2} xi with declared growth exponents.
struct FluxOperator {
  int dim = 1;
  CoefficientField coefficient;
  double p = 2.0;
  double epsilon = 0.0;
  double alpha = 1.0;
  double beta = 2.0;
  double c1 = 1.0;
  double c2 = 1.0;

  double q() const { return p / (p - 1.0); }
  void validate() const;
};

/// Fills alpha = min{1, p-1}, beta = max{p, 2}, epsilon = 1e-8 (p != 2) or 0, then validates.
FluxOperator make_flux_operator(int dim, CoefficientField coefficient, double p);

/// Pointwise p-Laplacian law; templated so oracles can run it in extended precision.
template <typename Derived>
SmallVector<typename Derived::Scalar> plaplace_flux(typename Derived::Scalar lambda, double p,
                                                    double epsilon,
                                                    const Eigen::MatrixBase<Derived>& xi) {
  using Scalar = typename Derived::Scalar;
  const Scalar s = Scalar(epsilon * epsilon) + xi.squaredNorm();
  if (s == Scalar(0)) return SmallVector<Scalar>::Zero(xi.size());
  if (p == 2.0) return lambda * xi;
  return (lambda * std::pow(s, Scalar((p - 2.0) / 2.0))) * xi;
}

template <typename Derived>
SmallMatrix<typename Derived::Scalar> plaplace_jacobian(typename Derived::Scalar lambda, double p,
                                                        double epsilon,
                                                        const Eigen::MatrixBase<Derived>& xi) {
  using Scalar = typename Derived::Scalar;
  const auto n = xi.size();
  const Scalar s = Scalar(epsilon * epsilon) + xi.squaredNorm();
  if (p == 2.0) return lambda * SmallMatrix<Scalar>::Identity(n, n);
  if (s == Scalar(0)) return SmallMatrix<Scalar>::Zero(n, n);
  const Scalar scale = lambda * std::pow(s, Scalar((p - 2.0) / 2.0));
  return scale * (SmallMatrix<Scalar>::Identity(n, n) + (Scalar(p - 2.0) / s) * (xi * xi.transpose()));
}

/// Potential lambda (eps^2 + |xi|^2)^{p/2} / p whose gradient is plaplace_flux.
template <typename Derived>
typename Derived::Scalar plaplace_energy(typename Derived::Scalar lambda, double p, double epsilon,
                                         const Eigen::MatrixBase<Derived>& xi) {
  using Scalar = typename Derived::Scalar;
  const Scalar s = Scalar(epsilon * epsilon) + xi.squaredNorm();
  if (p == 2.0) return lambda * s / Scalar(2);
  return lambda * std::pow(s, Scalar(p / 2.0)) / Scalar(p);
}

Vec eval_flux(const FluxOperator& op, const Point& y, const Point& z, const Vec& xi);

/// Throws SingularLinearization for the degenerate case xi = 0, eps = 0, p != 2.
Mat eval_flux_jacobian(const FluxOperator& op, const Point& y, const Point& z, const Vec& xi);

double eval_energy_density(const FluxOperator& op, const Point& y, const Point& z, const Vec& xi);

class SingularLinearization : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Stable FNV-1a hash of the canonical operator description.
std::string operator_hash(const FluxOperator& op);

// ---------------------------------------------------------------------------
// Structure-condition verifier

/// Both sides of a two-point condition; ratio = lhs / rhs (0 for degenerate pairs).
struct ConditionTerms {
  double lhs = 0.0;
  double rhs = 0.0;
};

/// |a(xi1) - a(xi2)| against (1+|xi1|+|xi2|)^{p-1-alpha} |xi1-xi2|^alpha.
ConditionTerms continuity_terms(const Vec& a1, const Vec& a2, const Vec& xi1, const Vec& xi2,
                                double p, double alpha);
/// (a(xi1) - a(xi2), xi1 - xi2) against (1+|xi1|+|xi2|)^{p-beta} |xi1-xi2|^beta.
ConditionTerms monotonicity_terms(const Vec& a1, const Vec& a2, const Vec& xi1, const Vec& xi2,
                                  double p, double beta);

struct ConditionRow {
  std::string condition;
  std::size_t samples = 0;
  double min_ratio = 0.0;
  double max_ratio = 0.0;
  bool pass = true;
};

struct ModulusRow {
  double distance = 0.0;
  double omega = 0.0;  // max |a(y1,.)-a(y2,.)|^q / (1+|xi|^p) within a piece
  std::size_t samples = 0;
};

struct ConditionReport {
  std::vector<ConditionRow> rows;
  std::vector<ModulusRow> modulus;
  std::size_t degenerate_pairs = 0;
  double empirical_c1 = 0.0;  // max continuity ratio
  double empirical_c2 = 0.0;  // min monotonicity ratio
  double min_inner_product = 0.0;
  bool monotone = true;
  bool modulus_decays = true;

  std::string to_csv() const;
};

/// Generic pointwise flux a(y, z, xi) with its declared exponents.
struct PointwiseFlux {
  int dim = 1;
  double p = 2.0;
  double alpha = 1.0;
  double beta = 2.0;
  std::function<Vec(const Point& y, const Point& z, const Vec& xi)> eval;
  /// Piece index of y for the y-continuity table.
  std::function<int(const Point& y)> piece = [](const Point&) { return 0; };
};

PointwiseFlux as_pointwise(const FluxOperator& op);

class MonotonicityViolation : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Seeded random check of zero law, continuity, monotonicity, growth, coercivity and the
/// y-modulus. Throws MonotonicityViolation if any inner product is below -1e-12.
ConditionReport verify_structure_conditions(const PointwiseFlux& flux, std::size_t n_samples,
                                            std::uint64_t seed, int threads = 1);
ConditionReport verify_structure_conditions(const FluxOperator& op, std::size_t n_samples,
                                            std::uint64_t seed, int threads = 1);

}  // namespace homog
