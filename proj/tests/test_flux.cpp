#include "doctest.h"

#include "homog/flux.hpp"

#include <cmath>
#include <random>

using namespace homog;

namespace {

CoefficientField laminate(double l1, double l2) {
  CoefficientField c;
  c.pattern = CoefficientField::ZPattern::laminate;
  c.levels = {l1, l2};
  return c;
}

CoefficientField checker(double l1, double l2) {
  CoefficientField c;
  c.pattern = CoefficientField::ZPattern::checkerboard;
  c.levels = {l1, l2};
  return c;
}

Point pt(double a, double b) {
  Point p(2);
  p << a, b;
  return p;
}

Point pt(double a) {
  Point p(1);
  p << a;
  return p;
}

}  // namespace

TEST_CASE("operator defaults follow the growth exponents") {
  const FluxOperator a = make_flux_operator(2, CoefficientField{}, 3.0);
  CHECK(a.alpha == 1.0);
  CHECK(a.beta == 3.0);
  CHECK(a.epsilon == 1e-8);
  const FluxOperator b = make_flux_operator(1, CoefficientField{}, 1.5);
  CHECK(b.alpha == doctest::Approx(0.5));
  CHECK(b.beta == 2.0);
  CHECK(make_flux_operator(1, CoefficientField{}, 2.0).epsilon == 0.0);
  CHECK(a.q() == doctest::Approx(1.5));
  CHECK_THROWS_AS(make_flux_operator(1, CoefficientField{}, 1.0), ConfigError);
  CHECK_THROWS_AS(make_flux_operator(3, CoefficientField{}, 2.0), ConfigError);
}

TEST_CASE("coefficient patterns") {
  const CoefficientField lam = laminate(1.0, 4.0);
  CHECK(lam.z_factor(pt(0.25)) == 1.0);
  CHECK(lam.z_factor(pt(0.75)) == 4.0);
  CHECK(lam.z_factor(pt(1.25)) == 1.0);
  const CoefficientField ch = checker(1.0, 4.0);
  CHECK(ch.z_factor(pt(0.25, 0.25)) == 1.0);
  CHECK(ch.z_factor(pt(0.75, 0.25)) == 4.0);
  CHECK(ch.z_factor(pt(0.75, 0.75)) == 1.0);
  CHECK(ch.lower_bound() == 1.0);
  CHECK(ch.upper_bound() == 4.0);
  CHECK(ch.kind_name() == "checkerboard_z");

  CoefficientField pw = lam;
  pw.modulation = CoefficientField::YModulation::piecewise;
  pw.piece_breaks = {0.5};
  pw.piece_scales = {1.0, 3.0};
  CHECK(pw.piece(pt(0.2)) == 0);
  CHECK(pw.piece(pt(0.7)) == 1);
  CHECK(pw(pt(0.7), pt(0.75)) == 12.0);
  CHECK(pw.num_pieces() == 2);
  CHECK(pw.depends_on_y());
  CHECK(pw.kind_name() == "piecewise_y");

  CoefficientField bad = lam;
  bad.levels = {1.0, -1.0};
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("zero law holds exactly") {
  for (double p : {1.5, 2.0, 3.0, 4.0}) {
    const FluxOperator op = make_flux_operator(2, checker(1.0, 4.0), p);
    const Vec a = eval_flux(op, pt(0.5, 0.5), pt(0.3, 0.7), zero_vec(2));
    CHECK(a.norm() == 0.0);
  }
}

TEST_CASE("p = 2 flux is linear") {
  const FluxOperator op = make_flux_operator(2, checker(1.0, 4.0), 2.0);
  Vec xi(2);
  xi << 0.3, -1.2;
  const Vec a = eval_flux(op, pt(0.1, 0.1), pt(0.75, 0.25), xi);
  CHECK((a - 4.0 * xi).norm() <= 1e-15);
}

TEST_CASE("Jacobian matches extended-precision finite differences") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  for (double p : {1.5, 2.0, 2.5, 3.0, 4.0}) {
    for (int trial = 0; trial < 20; ++trial) {
      SmallVector<long double> xi(2);
      xi << u(rng), u(rng);
      const long double lam = 1.7L;
      const double eps = 1e-3;
      const auto J = plaplace_jacobian(lam, p, eps, xi);
      const long double h = 1e-7L;
      for (int d = 0; d < 2; ++d) {
        SmallVector<long double> e = SmallVector<long double>::Zero(2);
        e(d) = h;
        const SmallVector<long double> col =
            (plaplace_flux(lam, p, eps, SmallVector<long double>(xi + e)) -
             plaplace_flux(lam, p, eps, SmallVector<long double>(xi - e))) / (2.0L * h);
        for (int r = 0; r < 2; ++r)
          CHECK(static_cast<double>(std::abs(col(r) - J(r, d))) <= 1e-8 * (1.0 + static_cast<double>(std::abs(J(r, d)))));
      }
    }
  }
}

TEST_CASE("energy density is a potential for the flux") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  for (double p : {1.5, 2.0, 3.0, 4.0}) {
    const FluxOperator op = make_flux_operator(2, checker(1.0, 4.0), p);
    for (int trial = 0; trial < 10; ++trial) {
      Vec xi(2);
      xi << u(rng), u(rng);
      const Point y = pt(0.5, 0.5), z = pt(0.3, 0.6);
      const Vec a = eval_flux(op, y, z, xi);
      for (int d = 0; d < 2; ++d) {
        Vec e = Vec::Zero(2);
        e(d) = 1e-6;
        const double fd = (eval_energy_density(op, y, z, xi + e) - eval_energy_density(op, y, z, xi - e)) / 2e-6;
        CHECK(fd == doctest::Approx(a(d)).epsilon(1e-6));
      }
    }
  }
}

TEST_CASE("degenerate Jacobians are reported") {
  FluxOperator op = make_flux_operator(2, CoefficientField{}, 3.0);
  op.epsilon = 0.0;
  CHECK_THROWS_AS(eval_flux_jacobian(op, pt(0.5, 0.5), pt(0.5, 0.5), zero_vec(2)), SingularLinearization);
  CHECK_NOTHROW(eval_flux_jacobian(op, pt(0.5, 0.5), pt(0.5, 0.5), unit_vec(2, 0)));
  op.p = 1.5;
  op.alpha = 0.5;
  op.beta = 2.0;
  CHECK_THROWS_AS(eval_flux_jacobian(op, pt(0.5, 0.5), pt(0.5, 0.5), unit_vec(2, 0)), SingularLinearization);
}

TEST_CASE("structure conditions hold across the exponent range") {
  for (double p : {1.5, 2.0, 3.0, 4.0}) {
    CoefficientField c = checker(1.0, 4.0);
    c.modulation = CoefficientField::YModulation::smooth;
    const FluxOperator op = make_flux_operator(2, c, p);
    const ConditionReport r = verify_structure_conditions(op, 640, 3, 2);
    for (const auto& row : r.rows) CHECK_MESSAGE(row.pass, row.condition << " p=" << p);
    CHECK(r.degenerate_pairs == 10);
    CHECK(r.monotone);
    CHECK(r.min_inner_product > 0.0);
    CHECK(r.modulus_decays);
    CHECK(r.modulus.size() == 6);
  }
}

TEST_CASE("p = 2 constant coefficient gives inner products lambda |dxi|^2") {
  CoefficientField c;
  c.levels = {2.5};
  const FluxOperator op = make_flux_operator(2, c, 2.0);
  const ConditionReport r = verify_structure_conditions(op, 256, 9);
  for (const auto& row : r.rows)
    if (row.condition == "monotonicity") {
      CHECK(row.min_ratio == doctest::Approx(2.5).epsilon(1e-12));
      CHECK(row.max_ratio == doctest::Approx(2.5).epsilon(1e-12));
    }
  CHECK(r.empirical_c2 == doctest::Approx(2.5).epsilon(1e-12));
}

TEST_CASE("piecewise coefficients keep the y-modulus within pieces") {
  CoefficientField c = laminate(1.0, 4.0);
  c.modulation = CoefficientField::YModulation::piecewise;
  const FluxOperator op = make_flux_operator(1, c, 3.0);
  const ConditionReport r = verify_structure_conditions(op, 256, 4);
  for (const auto& m : r.modulus) CHECK(m.omega == 0.0);
}

TEST_CASE("verifier output is independent of the worker count") {
  const FluxOperator op = make_flux_operator(2, checker(1.0, 4.0), 3.0);
  CHECK(verify_structure_conditions(op, 300, 8, 1).to_csv() == verify_structure_conditions(op, 300, 8, 4).to_csv());
}

TEST_CASE("a non-monotone law is rejected") {
  PointwiseFlux f;
  f.dim = 1;
  f.eval = [](const Point&, const Point&, const Vec& xi) -> Vec { return -xi; };
  CHECK_THROWS_AS(verify_structure_conditions(f, 64, 1), MonotonicityViolation);
}
