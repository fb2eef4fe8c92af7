#include "homog/flux.hpp"

#include "homog/parallel.hpp"
#include "homog/report.hpp"

#include <algorithm>
#include <array>
#include <limits>
#include <numbers>
#include <random>
#include <sstream>

namespace homog {

namespace {

double frac(double v) { return v - std::floor(v); }

}  // namespace

double CoefficientField::z_factor(const Point& z) const {
  switch (pattern) {
    case ZPattern::constant:
      return levels[0];
    case ZPattern::laminate: {
      const int axis = std::min<int>(laminate_axis, static_cast<int>(z.size()) - 1);
      return frac(z(axis)) < laminate_fraction ? levels[0] : levels[1];
    }
    case ZPattern::checkerboard: {
      long parity = 0;
      for (Eigen::Index d = 0; d < z.size(); ++d) parity += static_cast<long>(std::floor(2.0 * frac(z(d))));
      return parity % 2 == 0 ? levels[0] : levels[1];
    }
    case ZPattern::trig:
      return levels[0] * (1.0 + trig_amplitude * std::sin(2.0 * std::numbers::pi * z(0)));
  }
  return levels[0];
}

int CoefficientField::piece(const Point& y) const {
  if (modulation != YModulation::piecewise) return 0;
  int i = 0;
  while (i < static_cast<int>(piece_breaks.size()) && y(0) >= piece_breaks[i]) ++i;
  return i;
}

int CoefficientField::num_pieces() const {
  return modulation == YModulation::piecewise ? static_cast<int>(piece_breaks.size()) + 1 : 1;
}

double CoefficientField::y_factor(const Point& y) const {
  switch (modulation) {
    case YModulation::none:
      return 1.0;
    case YModulation::smooth:
      return 1.0 + modulation_amplitude * std::sin(2.0 * std::numbers::pi * y(0));
    case YModulation::piecewise:
      return piece_scales[piece(y)];
  }
  return 1.0;
}

bool CoefficientField::depends_on_z() const {
  switch (pattern) {
    case ZPattern::constant:
      return false;
    case ZPattern::laminate:
    case ZPattern::checkerboard:
      return levels[0] != levels[1];
    case ZPattern::trig:
      return trig_amplitude != 0.0;
  }
  return true;
}

namespace {

std::pair<double, double> z_bounds(const CoefficientField& c) {
  switch (c.pattern) {
    case CoefficientField::ZPattern::constant:
      return {c.levels[0], c.levels[0]};
    case CoefficientField::ZPattern::laminate:
    case CoefficientField::ZPattern::checkerboard:
      return {std::min(c.levels[0], c.levels[1]), std::max(c.levels[0], c.levels[1])};
    case CoefficientField::ZPattern::trig: {
      const double a = std::abs(c.trig_amplitude);
      return {c.levels[0] * (1.0 - a), c.levels[0] * (1.0 + a)};
    }
  }
  return {c.levels[0], c.levels[0]};
}

std::pair<double, double> y_bounds(const CoefficientField& c) {
  switch (c.modulation) {
    case CoefficientField::YModulation::none:
      return {1.0, 1.0};
    case CoefficientField::YModulation::smooth: {
      const double m = std::abs(c.modulation_amplitude);
      return {1.0 - m, 1.0 + m};
    }
    case CoefficientField::YModulation::piecewise: {
      const auto [lo, hi] = std::minmax_element(c.piece_scales.begin(), c.piece_scales.end());
      return {*lo, *hi};
    }
  }
  return {1.0, 1.0};
}

}  // namespace

double CoefficientField::lower_bound() const { return z_bounds(*this).first * y_bounds(*this).first; }
double CoefficientField::upper_bound() const { return z_bounds(*this).second * y_bounds(*this).second; }

std::string CoefficientField::kind_name() const {
  if (modulation == YModulation::smooth) return "y_modulated";
  if (modulation == YModulation::piecewise) return "piecewise_y";
  switch (pattern) {
    case ZPattern::constant:
      return "constant";
    case ZPattern::laminate:
      return "laminate_z";
    case ZPattern::checkerboard:
      return "checkerboard_z";
    case ZPattern::trig:
      return "trig_z";
  }
  return "constant";
}

void CoefficientField::validate() const {
  const std::size_t need = (pattern == ZPattern::laminate || pattern == ZPattern::checkerboard) ? 2 : 1;
  if (levels.size() != need)
    throw ConfigError("coefficient.levels must have " + std::to_string(need) + " entries for " +
                      kind_name());
  for (double l : levels)
    if (!(l > 0.0) || !std::isfinite(l)) throw ConfigError("coefficient.levels must be positive");
  if (pattern == ZPattern::laminate && !(laminate_fraction > 0.0 && laminate_fraction < 1.0))
    throw ConfigError("coefficient.fraction must lie in (0,1)");
  if (pattern == ZPattern::laminate && (laminate_axis < 0 || laminate_axis > 1))
    throw ConfigError("coefficient.axis must be 0 or 1");
  if (pattern == ZPattern::trig && !(std::abs(trig_amplitude) < 1.0))
    throw ConfigError("coefficient.amplitude must satisfy |amp| < 1");
  if (modulation == YModulation::smooth && !(std::abs(modulation_amplitude) < 1.0))
    throw ConfigError("coefficient.modulation must satisfy |m| < 1");
  if (modulation == YModulation::piecewise) {
    if (piece_scales.size() != piece_breaks.size() + 1)
      throw ConfigError("coefficient.piece_scales must have one more entry than piece_breaks");
    for (std::size_t i = 0; i < piece_breaks.size(); ++i)
      if (!(piece_breaks[i] > (i ? piece_breaks[i - 1] : 0.0) && piece_breaks[i] < 1.0))
        throw ConfigError("coefficient.piece_breaks must be increasing inside (0,1)");
    for (double s : piece_scales)
      if (!(s > 0.0)) throw ConfigError("coefficient.piece_scales must be positive");
  }
  if (!(lower_bound() > 0.0)) throw ConfigError("coefficient is not uniformly elliptic");
}

void FluxOperator::validate() const {
  if (dim != 1 && dim != 2) throw ConfigError("operator.dim must be 1 or 2");
  if (!(p > 1.0) || !std::isfinite(p)) throw ConfigError("operator.p must be > 1");
  if (!(epsilon >= 0.0)) throw ConfigError("operator.epsilon must be >= 0");
  if (!(alpha >= 0.0 && alpha <= std::min(1.0, p - 1.0) + 1e-15))
    throw ConfigError("operator.alpha must satisfy 0 <= alpha <= min{1, p-1}");
  if (!(beta >= std::max(p, 2.0) - 1e-15) || !std::isfinite(beta))
    throw ConfigError("operator.beta must satisfy max{p, 2} <= beta < inf");
  if (!(c1 > 0.0) || !(c2 > 0.0)) throw ConfigError("operator.c1 and operator.c2 must be positive");
  coefficient.validate();
}

FluxOperator make_flux_operator(int dim, CoefficientField coefficient, double p) {
  FluxOperator op;
  op.dim = dim;
  op.coefficient = std::move(coefficient);
  op.p = p;
  op.alpha = std::min(1.0, p - 1.0);
  op.beta = std::max(p, 2.0);
  op.epsilon = p == 2.0 ? 0.0 : 1e-8;
  op.validate();
  return op;
}

Vec eval_flux(const FluxOperator& op, const Point& y, const Point& z, const Vec& xi) {
  return plaplace_flux(op.coefficient(y, z), op.p, op.epsilon, xi);
}

Mat eval_flux_jacobian(const FluxOperator& op, const Point& y, const Point& z, const Vec& xi) {
  if (op.p != 2.0 && op.epsilon == 0.0 && xi.squaredNorm() == 0.0)
    throw SingularLinearization("flux Jacobian is singular at xi = 0 with epsilon = 0; regularize");
  if (op.p < 2.0 && op.epsilon == 0.0)
    throw SingularLinearization("p < 2 requires epsilon > 0 for the Jacobian");
  return plaplace_jacobian(op.coefficient(y, z), op.p, op.epsilon, xi);
}

double eval_energy_density(const FluxOperator& op, const Point& y, const Point& z, const Vec& xi) {
  return plaplace_energy(op.coefficient(y, z), op.p, op.epsilon, xi);
}

ConditionTerms continuity_terms(const Vec& a1, const Vec& a2, const Vec& xi1, const Vec& xi2,
                                double p, double alpha) {
  const double d = (xi1 - xi2).norm();
  const double base = 1.0 + xi1.norm() + xi2.norm();
  return {(a1 - a2).norm(), std::pow(base, p - 1.0 - alpha) * std::pow(d, alpha) * (d > 0.0)};
}

ConditionTerms monotonicity_terms(const Vec& a1, const Vec& a2, const Vec& xi1, const Vec& xi2,
                                  double p, double beta) {
  const double d = (xi1 - xi2).norm();
  const double base = 1.0 + xi1.norm() + xi2.norm();
  return {(a1 - a2).dot(xi1 - xi2), std::pow(base, p - beta) * std::pow(d, beta)};
}

PointwiseFlux as_pointwise(const FluxOperator& op) {
  PointwiseFlux f;
  f.dim = op.dim;
  f.p = op.p;
  f.alpha = op.alpha;
  f.beta = op.beta;
  f.eval = [op](const Point& y, const Point& z, const Vec& xi) { return eval_flux(op, y, z, xi); };
  const CoefficientField coef = op.coefficient;
  f.piece = [coef](const Point& y) { return coef.piece(y); };
  return f;
}

namespace {

struct PairSample {
  bool degenerate = false;
  double zero_norm = 0.0;
  double continuity = 0.0;
  double monotonicity = 0.0;
  double inner = 0.0;
  double growth = 0.0;
  double coercivity = 0.0;
};

Vec random_xi(std::mt19937_64& rng, int dim) {
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> expo(-2.0, 1.0);
  const double scale = std::pow(10.0, expo(rng));
  Vec xi(dim);
  for (int d = 0; d < dim; ++d) xi(d) = scale * normal(rng);
  return xi;
}

Point random_point(std::mt19937_64& rng, int dim) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Point x(dim);
  for (int d = 0; d < dim; ++d) x(d) = u(rng);
  return x;
}

constexpr std::array<double, 6> kModulusLadder{0.25, 0.125, 0.0625, 0.03125, 0.015625, 0.0078125};

}  // namespace

ConditionReport verify_structure_conditions(const PointwiseFlux& flux, std::size_t n_samples,
                                            std::uint64_t seed, int threads) {
  if (n_samples < 1) throw ConfigError("verifier needs n_samples >= 1");
  const int dim = flux.dim;
  const double p = flux.p;
  auto pairs = parallel_map(n_samples, threads, [&](std::size_t i) {
    std::mt19937_64 rng(split_seed(seed, i));
    const Point y = random_point(rng, dim);
    const Point z = random_point(rng, dim);
    const Vec xi1 = random_xi(rng, dim);
    // every 64th pair is degenerate so the exclusion path is always exercised
    const Vec xi2 = (i % 64 == 63) ? xi1 : random_xi(rng, dim);
    PairSample s;
    s.zero_norm = flux.eval(y, z, zero_vec(dim)).norm();
    const Vec a1 = flux.eval(y, z, xi1);
    const Vec a2 = flux.eval(y, z, xi2);
    s.growth = a1.norm() / (1.0 + std::pow(xi1.norm(), p - 1.0));
    s.coercivity = std::pow(xi1.norm(), p) / (1.0 + a1.dot(xi1));
    if ((xi1 - xi2).norm() == 0.0) {
      s.degenerate = true;
      return s;
    }
    const ConditionTerms c = continuity_terms(a1, a2, xi1, xi2, p, flux.alpha);
    const ConditionTerms m = monotonicity_terms(a1, a2, xi1, xi2, p, flux.beta);
    s.continuity = c.lhs / c.rhs;
    s.monotonicity = m.lhs / m.rhs;
    s.inner = m.lhs;
    return s;
  });

  ConditionReport report;
  const double inf = std::numeric_limits<double>::infinity();
  ConditionRow zero{"zero_law", n_samples, inf, 0.0, true};
  ConditionRow cont{"continuity", 0, inf, 0.0, true};
  ConditionRow mono{"monotonicity", 0, inf, 0.0, true};
  ConditionRow inner{"monotonicity_inner_product", 0, inf, -inf, true};
  ConditionRow growth{"growth", n_samples, inf, 0.0, true};
  ConditionRow coer{"coercivity", n_samples, inf, 0.0, true};
  for (const PairSample& s : pairs) {
    zero.min_ratio = std::min(zero.min_ratio, s.zero_norm);
    zero.max_ratio = std::max(zero.max_ratio, s.zero_norm);
    growth.min_ratio = std::min(growth.min_ratio, s.growth);
    growth.max_ratio = std::max(growth.max_ratio, s.growth);
    coer.min_ratio = std::min(coer.min_ratio, s.coercivity);
    coer.max_ratio = std::max(coer.max_ratio, s.coercivity);
    if (s.degenerate) {
      ++report.degenerate_pairs;
      continue;
    }
    ++cont.samples;
    ++mono.samples;
    ++inner.samples;
    cont.min_ratio = std::min(cont.min_ratio, s.continuity);
    cont.max_ratio = std::max(cont.max_ratio, s.continuity);
    mono.min_ratio = std::min(mono.min_ratio, s.monotonicity);
    mono.max_ratio = std::max(mono.max_ratio, s.monotonicity);
    inner.min_ratio = std::min(inner.min_ratio, s.inner);
    inner.max_ratio = std::max(inner.max_ratio, s.inner);
  }
  if (inner.samples == 0) {
    cont.min_ratio = cont.max_ratio = mono.min_ratio = mono.max_ratio = 0.0;
    inner.min_ratio = inner.max_ratio = 0.0;
  }
  zero.pass = zero.max_ratio == 0.0;
  cont.pass = std::isfinite(cont.max_ratio);
  inner.pass = inner.samples == 0 || inner.min_ratio > 0.0;
  mono.pass = inner.pass && std::isfinite(mono.max_ratio);
  growth.pass = std::isfinite(growth.max_ratio);
  coer.pass = std::isfinite(coer.max_ratio);
  report.monotone = inner.pass;
  report.min_inner_product = inner.min_ratio;
  report.empirical_c1 = cont.max_ratio;
  report.empirical_c2 = mono.min_ratio;

  if (inner.samples > 0 && inner.min_ratio < -1e-12) {
    std::ostringstream msg;
    msg << "monotonicity violated: inner product " << inner.min_ratio;
    throw MonotonicityViolation(msg.str());
  }

  // y-continuity modulus within pieces
  const std::size_t per_level = std::max<std::size_t>(16, n_samples / (4 * kModulusLadder.size()));
  const double q = p / (p - 1.0);
  auto omegas = parallel_map(kModulusLadder.size() * per_level, threads, [&](std::size_t i) {
    const double delta = kModulusLadder[i / per_level];
    std::mt19937_64 rng(split_seed(seed ^ 0x5bd1e995ull, i % per_level));
    std::normal_distribution<double> normal(0.0, 1.0);
    for (int attempt = 0; attempt < 64; ++attempt) {
      const Point y1 = random_point(rng, dim);
      Vec dir(dim);
      for (int d = 0; d < dim; ++d) dir(d) = normal(rng);
      if (dir.norm() == 0.0) continue;
      const Point y2 = y1 + delta * dir.normalized();
      if ((y2.array() < 0.0).any() || (y2.array() >= 1.0).any()) continue;
      if (flux.piece(y1) != flux.piece(y2)) continue;
      const Point z = random_point(rng, dim);
      const Vec xi = random_xi(rng, dim);
      const double diff = (flux.eval(y1, z, xi) - flux.eval(y2, z, xi)).norm();
      return std::pow(diff, q) / (1.0 + std::pow(xi.norm(), p));
    }
    return 0.0;
  });
  std::vector<double> omega_seq;
  for (std::size_t level = 0; level < kModulusLadder.size(); ++level) {
    ModulusRow row{kModulusLadder[level], 0.0, per_level};
    for (std::size_t j = 0; j < per_level; ++j) row.omega = std::max(row.omega, omegas[level * per_level + j]);
    report.modulus.push_back(row);
    omega_seq.push_back(row.omega);
  }
  report.modulus_decays = non_increasing_with_wobble(omega_seq, 0.10, 1, 1e-14) &&
                          omega_seq.back() <= omega_seq.front();
  ConditionRow ymod{"y_continuity", kModulusLadder.size() * per_level, inf, 0.0, report.modulus_decays};
  for (double w : omega_seq) {
    ymod.min_ratio = std::min(ymod.min_ratio, w);
    ymod.max_ratio = std::max(ymod.max_ratio, w);
  }
  report.rows = {zero, cont, mono, inner, growth, coer, ymod};
  return report;
}

ConditionReport verify_structure_conditions(const FluxOperator& op, std::size_t n_samples,
                                            std::uint64_t seed, int threads) {
  op.validate();
  return verify_structure_conditions(as_pointwise(op), n_samples, seed, threads);
}

std::string ConditionReport::to_csv() const {
  std::ostringstream os;
  os << "condition,samples,min_ratio,max_ratio,pass\r\n";
  for (const auto& r : rows)
    os << r.condition << ',' << r.samples << ',' << format_real(r.min_ratio) << ','
       << format_real(r.max_ratio) << ',' << (r.pass ? "true" : "false") << "\r\n";
  for (const auto& m : modulus)
    os << "y_modulus_" << format_real(m.distance) << ',' << m.samples << ',' << format_real(m.omega)
       << ',' << format_real(m.omega) << ',' << (modulus_decays ? "true" : "false") << "\r\n";
  return os.str();
}

}  // namespace homog
