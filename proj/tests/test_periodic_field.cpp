#include "doctest.h"

#include "homog/periodic_field.hpp"

#include <cmath>
#include <numbers>
#include <random>

using namespace homog;

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

PeriodicScalarField random_field(const TorusGrid& g, unsigned seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Eigen::VectorXd v(static_cast<Eigen::Index>(g.num_nodes()));
  for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = u(rng);
  return {g, v};
}

}  // namespace

TEST_CASE("field construction validates values and the mean-zero flag") {
  const TorusGrid g = TorusGrid::line(8);
  Eigen::VectorXd v = Eigen::VectorXd::Ones(8);
  CHECK_THROWS_AS(PeriodicScalarField(g, v, true), ConfigError);
  v(3) = std::nan("");
  CHECK_THROWS_AS(PeriodicScalarField(g, v), ConfigError);
  CHECK_THROWS_AS(PeriodicScalarField(g, Eigen::VectorXd::Zero(7)), ConfigError);
  CHECK(remove_mean(PeriodicScalarField::constant(g, 3.0)).mean_zero());
}

TEST_CASE("oscillated sampling preserves the mean exactly") {
  for (int dim : {1, 2}) {
    const TorusGrid base = TorusGrid::unit(dim, 12);
    for (unsigned seed = 0; seed < 20; ++seed) {
      const PeriodicScalarField u = random_field(base, seed);
      for (int h : {2, 3, 5, 8}) {
        const TorusGrid target = TorusGrid::unit(dim, 12 * h);
        const PeriodicScalarField w = sample_oscillated(u, h, target);
        CHECK(std::abs(mean_value(w) - mean_value(u)) <= 1e-13);
      }
    }
  }
}

TEST_CASE("oscillated sampling evaluates u(h x) at the nodes") {
  const TorusGrid base = TorusGrid::line(16);
  const auto u = PeriodicScalarField::from_function(base, [](const Point& x) { return std::sin(kTwoPi * x(0)); });
  const TorusGrid target = TorusGrid::line(48);
  const PeriodicScalarField w = sample_oscillated(u, 3, target);
  for (std::size_t n = 0; n < target.num_nodes(); ++n)
    CHECK(w[n] == doctest::Approx(u.interpolate(target.wrap(3.0 * target.node_point(n)))));
  CHECK_THROWS_AS(sample_oscillated(u, 0, target), ConfigError);
  CHECK_THROWS_AS(sample_oscillated(u, 16, target), ConfigError);
}

TEST_CASE("gradient at cell midpoints converges at second order") {
  auto error_at = [](int n) {
    const TorusGrid g = TorusGrid::line(n, 1);
    const auto u = PeriodicScalarField::from_function(g, [](const Point& x) { return std::sin(kTwoPi * x(0)); });
    const QuadVectorField du = gradient(u);
    double err = 0.0;
    for (std::size_t qp = 0; qp < g.num_quad_points(); ++qp)
      err = std::max(err, std::abs(du.at(qp)(0) - kTwoPi * std::cos(kTwoPi * g.quad_point(qp)(0))));
    return err;
  };
  const double e32 = error_at(32), e64 = error_at(64);
  CHECK(e32 / e64 == doctest::Approx(4.0).epsilon(0.05));
  CHECK(e64 <= 5.0 / (64.0 * 64.0) * kTwoPi * kTwoPi * kTwoPi);
}

TEST_CASE("lp norm of a sine on the trapezoid rule") {
  const TorusGrid g = TorusGrid::line(256);
  const auto u = PeriodicScalarField::from_function(g, [](const Point& x) { return std::sin(kTwoPi * x(0)); });
  CHECK(std::abs(lp_norm(u, 2.0) - std::sqrt(0.5)) <= 1e-10);
  // int |sin|^4 = 3/8
  CHECK(std::abs(lp_norm(u, 4.0) - std::pow(3.0 / 8.0, 0.25)) <= 1e-10);
  CHECK_THROWS_AS(lp_norm(u, 0.5), ConfigError);
}

TEST_CASE("lp norm satisfies the triangle inequality and homogeneity") {
  const TorusGrid g = TorusGrid::square(10);
  for (unsigned s = 0; s < 10; ++s) {
    const PeriodicScalarField a = random_field(g, s), b = random_field(g, 100 + s);
    for (double p : {1.0, 1.5, 2.0, 3.0}) {
      CHECK(lp_norm(a + b, p) <= lp_norm(a, p) + lp_norm(b, p) + 1e-12);
      CHECK(lp_norm(-2.5 * a, p) == doctest::Approx(2.5 * lp_norm(a, p)));
      CHECK(lp_norm(gradient(a) + gradient(b), p) <= lp_norm(gradient(a), p) + lp_norm(gradient(b), p) + 1e-12);
    }
  }
}

TEST_CASE("weak pairing against polynomials is exact for interpolants of affine data") {
  const TorusGrid g = TorusGrid::line(16);
  const PeriodicScalarField one = PeriodicScalarField::constant(g, 1.0);
  CHECK(weak_pairing(one, polynomial_test(1, {0.0, 1.0}, "x")) == doctest::Approx(0.5).epsilon(1e-14));
  CHECK(weak_pairing(one, polynomial_test(1, {0.0, 0.0, 0.0, 0.0, 1.0}, "x2")) ==
        doctest::Approx(1.0 / 3.0).epsilon(1e-14));
  CHECK(integral(g, trig_test(1, 1.0, 1.0, 0.0, 0.0, "s")) == doctest::Approx(0.0).epsilon(1e-14));
}

TEST_CASE("test functions outside the domain are rejected") {
  const TorusGrid g = TorusGrid::line(16);
  Point lo(1), hi(1);
  lo << 0.5;
  hi << 1.5;
  CHECK_THROWS_AS(weak_pairing(PeriodicScalarField::constant(g, 1.0), bump_test({lo, hi}, 1.0, "b")), ConfigError);
}

TEST_CASE("default banks have eight labelled functions") {
  for (int dim : {1, 2}) {
    const auto bank = default_test_bank(dim);
    CHECK(bank.size() == 8);
    for (const auto& f : bank) CHECK(!f.label.empty());
  }
}

TEST_CASE("bump test function vanishes outside its support") {
  Point lo = Point::Constant(2, 0.2), hi = Point::Constant(2, 0.8);
  const TestFunction b = bump_test({lo, hi}, 2.0, "bump");
  Point c = Point::Constant(2, 0.5), out = Point::Constant(2, 0.1);
  CHECK(b(c) == doctest::Approx(2.0));
  CHECK(b(out) == 0.0);
}

TEST_CASE("equi-integrability profile and truncation agree") {
  const TorusGrid g = TorusGrid::line(64);
  for (int h : {2, 4, 8, 16}) {
    const auto spike = PeriodicScalarField::from_function(g, [h](const Point& x) {
      return x(0) * h < 1.0 - 1e-12 ? static_cast<double>(h) : 0.0;
    });
    const std::vector<double> ts{0.25, 0.5 * h, 2.0 * h};
    const auto prof = equi_integrability_profile(spike, ts);
    CHECK(prof[0] == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(prof[1] == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(prof[2] == 0.0);
    for (std::size_t k = 0; k < ts.size(); ++k)
      CHECK(std::abs(lp_norm(truncate_at(spike, ts[k]) - spike, 1.0) - prof[k]) <= 1e-14);
  }
  CHECK_THROWS_AS(equi_integrability_profile(PeriodicScalarField::constant(g, 1.0), {2.0, 1.0}), ConfigError);
}

TEST_CASE("resample onto a refined grid keeps nodal values") {
  const TorusGrid coarse = TorusGrid::square(6);
  const PeriodicScalarField u = random_field(coarse, 7);
  const TorusGrid fine = TorusGrid::square(12);
  const PeriodicScalarField r = resample(u, fine);
  for (int i = 0; i < 6; ++i)
    for (int j = 0; j < 6; ++j) CHECK(r[fine.node_index(2 * i, 2 * j)] == doctest::Approx(u[coarse.node_index(i, j)]));
  CHECK(mean_value(r) == doctest::Approx(mean_value(u)));
}
