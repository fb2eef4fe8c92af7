#include "doctest.h"

#include "homog/homogenizer.hpp"
#include "homog/parallel.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <thread>

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

Point pt(double a) {
  Point y(1);
  y << a;
  return y;
}

Point pt(double a, double b) {
  Point y(2);
  y << a, b;
  return y;
}

std::filesystem::path scratch(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("homog_test_" + name);
  std::filesystem::remove_all(dir);
  return dir;
}

}  // namespace

TEST_CASE("partition boxes satisfy the diameter bound") {
  for (int dim : {1, 2}) {
    for (int k : {1, 2, 3, 5}) {
      const PiecewisePartition part(dim, k);
      CHECK(part.diameter() <= 1.0 / k + 1e-15);
      for (std::size_t i = 0; i < part.size(); ++i) {
        const Point c = part.representative(i);
        CHECK(part.locate(c) == i);
        CHECK(part.bounds(i).contains(c));
      }
    }
  }
  CHECK(PiecewisePartition(1, 4).size() == 4);
  CHECK(PiecewisePartition(2, 1).size() == 4);
  CHECK(PiecewisePartition(2, 1).boxes_per_axis() == 2);
  CHECK(PiecewisePartition(2, 1).locate(pt(0.999999, 0.0)) == 1);
  CHECK(PiecewisePartition(1, 2).locate(pt(1.0)) == 1);
  CHECK_THROWS_AS(PiecewisePartition(1, 0), ConfigError);
}

TEST_CASE("piecewise operator freezes y at the piece center") {
  CoefficientField c = laminate(1.0, 3.0);
  c.modulation = CoefficientField::YModulation::smooth;
  const FluxOperator op = make_flux_operator(1, c, 3.0);
  const PiecewiseFluxOperator ak = build_piecewise_operator(op, 4);
  for (double y : {0.01, 0.3, 0.55, 0.99}) {
    const double center = (std::floor(y * 4.0) + 0.5) / 4.0;
    const double lam = c.y_factor(pt(center)) * c.z_factor(pt(0.2));
    CHECK(ak.coefficient(pt(y), pt(0.2)) == doctest::Approx(lam).epsilon(1e-15));
    const Vec xi = Vec::Constant(1, 1.3);
    const double expected = lam * std::pow(op.epsilon * op.epsilon + 1.69, 0.5) * 1.3;
    CHECK(ak.eval(pt(y), pt(0.2), xi)(0) == doctest::Approx(expected).epsilon(1e-14));
  }
}

TEST_CASE("homogenized flux for constant and laminate cells") {
  CoefficientField c;
  c.levels = {2.5};
  const FluxOperator cst = make_flux_operator(2, c, 3.0);
  const Vec tau = Vec::Constant(2, 0.6);
  const Vec b = homogenized_flux(cst, pt(0.5, 0.5), tau, TorusGrid::square(8));
  CHECK((b - eval_flux(cst, pt(0.5, 0.5), pt(0.1, 0.1), tau)).norm() <= 1e-9);

  // laminate normal to axis 0 in 2D: harmonic mean across, arithmetic along
  const FluxOperator lam = make_flux_operator(2, laminate(1.0, 4.0), 2.0);
  const Vec across = homogenized_flux(lam, pt(0.5, 0.5), unit_vec(2, 0), TorusGrid::square(16));
  const Vec along = homogenized_flux(lam, pt(0.5, 0.5), unit_vec(2, 1), TorusGrid::square(16));
  CHECK(across(0) == doctest::Approx(1.6).epsilon(1e-8));
  CHECK(along(1) == doctest::Approx(2.5).epsilon(1e-8));
  CHECK(std::abs(across(1)) <= 1e-10);
}

TEST_CASE("table interpolation converges at second order in the tau spacing") {
  const FluxOperator op = make_flux_operator(1, laminate(1.0, 4.0), 3.0);
  const PiecewisePartition part(1, 1);
  const TorusGrid cell = TorusGrid::line(32);
  auto error = [&](int res) {
    TableOptions o;
    o.tau_box = 2.0;
    o.tau_resolution = res;
    o.held_out = 0;
    const HomogenizedTable t = tabulate_b(op, part, cell, {}, o);
    double worst = 0.0;
    for (int i = 0; i < 41; ++i) {
      const Vec tau = Vec::Constant(1, -1.9 + 3.8 * i / 40.0);
      const double exact = homogenized_flux(op, part.representative(0), tau, cell)(0);
      worst = std::max(worst, std::abs(t.interpolate(0, tau)(0) - exact));
    }
    return worst;
  };
  const double e1 = error(9), e2 = error(17), e3 = error(33);
  CHECK(std::log2(e1 / e2) == doctest::Approx(2.0).epsilon(0.15));
  CHECK(std::log2(e2 / e3) == doctest::Approx(2.0).epsilon(0.15));
}

TEST_CASE("table nodes reproduce exact cell solves") {
  const FluxOperator op = make_flux_operator(1, laminate(1.0, 4.0), 2.0);
  TableOptions o;
  o.tau_box = 1.0;
  o.tau_resolution = 5;
  o.held_out = 4;
  const HomogenizedTable t = tabulate_b(op, PiecewisePartition(1, 1), TorusGrid::line(16), {}, o);
  CHECK(t.tau_count() == 5);
  CHECK(!t.partial());
  CHECK(t.held_out_samples == 4);
  CHECK(t.interpolation_error <= 1e-10);  // linear law: interpolation is exact
  for (std::size_t j = 0; j < t.tau_count(); ++j)
    CHECK(t.value(0, j)(0) == doctest::Approx(1.6 * t.tau_node(j)(0)).epsilon(1e-9));
  CHECK(t.value(0, 2).norm() <= 1e-14);
}

TEST_CASE("table save and load round trip with hash validation") {
  const FluxOperator op = make_flux_operator(2, checker(1.0, 2.0), 3.0);
  TableOptions o;
  o.tau_box = 1.0;
  o.tau_resolution = 3;
  o.held_out = 0;
  const HomogenizedTable t = tabulate_b(op, PiecewisePartition(2, 1), TorusGrid::square(8), {}, o);
  const auto dir = scratch("table");
  t.save(dir);
  CHECK(std::filesystem::exists(dir / "manifest.json"));
  CHECK(std::filesystem::exists(dir / "values.bin"));
  const HomogenizedTable back = HomogenizedTable::load(dir, op);
  CHECK(back.values() == t.values());
  CHECK(back.tau_box() == t.tau_box());
  CHECK(back.partition().size() == t.partition().size());
  CHECK(back.operator_hash() == t.operator_hash());

  FluxOperator other = op;
  other.p = 3.5;
  CHECK_THROWS_AS(HomogenizedTable::load(dir, other), ConfigError);
  std::filesystem::resize_file(dir / "values.bin", 8);
  CHECK_THROWS_AS(HomogenizedTable::load(dir, op), ConfigError);
  CHECK_THROWS_AS(HomogenizedTable::load(scratch("missing"), op), ConfigError);
}

TEST_CASE("lookups outside the box solve on demand exactly once") {
  const FluxOperator op = make_flux_operator(1, laminate(1.0, 4.0), 3.0);
  TableOptions o;
  o.tau_box = 1.0;
  o.tau_resolution = 3;
  o.held_out = 0;
  auto t = std::make_shared<HomogenizedTable>(tabulate_b(op, PiecewisePartition(1, 1), TorusGrid::line(16), {}, o));
  const Vec far = Vec::Constant(1, 3.0);
  CHECK(!t->covers(far));
  std::vector<Vec> got(8);
  std::vector<std::thread> pool;
  for (int i = 0; i < 8; ++i) pool.emplace_back([&, i] { got[i] = t->evaluate(pt(0.3), far); });
  for (auto& th : pool) th.join();
  CHECK(t->on_demand_solves() == 1);
  const Vec exact = homogenized_flux(op, pt(0.5), far, TorusGrid::line(16));
  for (const Vec& g : got) CHECK((g - exact).norm() <= 1e-9);

  t->set_on_demand(false);
  CHECK_THROWS_AS(t->evaluate(pt(0.3), Vec::Constant(1, -5.0)), OutOfTableRange);
}

TEST_CASE("y-independent operators have b^k = b") {
  const FluxOperator op = make_flux_operator(1, laminate(1.0, 4.0), 3.0);
  const TorusGrid cell = TorusGrid::line(32);
  const Vec tau = Vec::Constant(1, 0.7);
  const Vec b = homogenized_flux(op, pt(0.5), tau, cell);
  for (int k : {1, 3}) {
    const PiecewiseFluxOperator ak = build_piecewise_operator(op, k);
    for (double y : {0.1, 0.8}) {
      const Vec bk = homogenized_flux(op, ak.frozen_point(pt(y)), tau, cell);
      CHECK((bk - b).norm() <= 1e-12);
    }
  }
}

TEST_CASE("homogenized problem for a y-independent operator has a zero solution") {
  const FluxOperator op = make_flux_operator(1, laminate(1.0, 4.0), 3.0);
  TableOptions o;
  o.tau_box = 2.0;
  o.tau_resolution = 9;
  o.held_out = 0;
  auto t = std::make_shared<const HomogenizedTable>(
      tabulate_b(op, PiecewisePartition(1, 1), TorusGrid::line(16), {}, o));
  const WeakProblem problem = build_homogenized_problem(t, Vec::Constant(1, 1.0), TorusGrid::line(32));
  const SolveResult r = solve(problem);
  CHECK(r.converged);
  CHECK(lp_norm(gradient(r.solution), 3.0) <= 1e-10);
}

TEST_CASE("1D homogenized problem with y-modulation keeps a constant flux") {
  CoefficientField c = laminate(1.0, 4.0);
  c.modulation = CoefficientField::YModulation::smooth;
  c.modulation_amplitude = 0.5;
  const FluxOperator op = make_flux_operator(1, c, 3.0);
  TableOptions o;
  o.tau_box = 3.0;
  o.tau_resolution = 61;
  o.held_out = 0;
  auto t = std::make_shared<const HomogenizedTable>(
      tabulate_b(op, PiecewisePartition(1, 1), TorusGrid::line(16), {}, o));
  const TorusGrid macro = TorusGrid::line(64);
  const WeakProblem problem = build_homogenized_problem(t, Vec::Constant(1, 1.0), macro, true);
  const SolveResult r = solve(problem);
  CHECK(r.converged);
  const QuadVectorField f = flux_field(problem, r.solution);
  const int q = macro.points_per_cell();
  for (std::size_t e = 0; e < macro.num_cells(); ++e) {
    double avg = 0.0;
    for (int k = 0; k < q; ++k) avg += macro.quad_weight(e * q + k) * f.at(e * q + k)(0);
    CHECK(std::abs(avg / macro.cell_volume() - r.mean_flux(0)) <= 1e-6 * std::abs(r.mean_flux(0)));
  }
}

TEST_CASE("p = 2 property report: constant ratio equals lambda") {
  CoefficientField c;
  c.levels = {1.5};
  const FluxOperator op = make_flux_operator(2, c, 2.0);
  const BEvaluator b = direct_evaluator(op, TorusGrid::square(4), {});
  PropertyOptions o;
  o.samples = 128;
  o.seed = 5;
  const PropertyReport r = verify_b_properties(b, o);
  CHECK(r.monotone);
  CHECK(r.zero_law);
  CHECK(r.min_monotonicity_ratio == doctest::Approx(1.5).epsilon(1e-9));
  CHECK(r.degenerate_pairs == 2);
  CHECK(r.holder_stable);
  CHECK(r.samples == 128);
}

TEST_CASE("checkerboard property report is stable and rotation invariant") {
  const FluxOperator op = make_flux_operator(2, checker(1.0, 4.0), 3.0);
  const BEvaluator b = direct_evaluator(op, TorusGrid::square(8), {});
  PropertyOptions o;
  o.samples = 192;
  o.check_rotation = true;
  o.rotation_samples = 4;
  o.modulus_samples_per_level = 2;
  const PropertyReport r = verify_b_properties(b, o);
  CHECK(r.monotone);
  CHECK(r.zero_law);
  CHECK(r.holder_stable);
  CHECK(r.rotation_equivariant);
  CHECK(r.rotation_deviation <= 1e-8);
  CHECK(r.degenerate_pairs == 3);
  CHECK(r.modulus_decays);
  CHECK(r.to_csv().find("rotation") != std::string::npos);
}

TEST_CASE("a laminate is not rotation equivariant") {
  const FluxOperator op = make_flux_operator(2, laminate(1.0, 4.0), 2.0);
  const BEvaluator b = direct_evaluator(op, TorusGrid::square(8), {});
  CHECK(rotation_equivariance_deviation(b, pt(0.5, 0.5), 4, 1, 1.0, 1) > 1e-3);
}

TEST_CASE("a non-monotone evaluator is rejected") {
  BEvaluator bad;
  bad.dim = 1;
  bad.eval = [](const Point&, const Vec& tau) -> Vec { return -tau; };
  PropertyOptions o;
  o.samples = 16;
  CHECK_THROWS_AS(verify_b_properties(bad, o), MonotonicityViolation);
}

TEST_CASE("tabulation is thread-count independent") {
  const FluxOperator op = make_flux_operator(2, checker(1.0, 4.0), 3.0);
  TableOptions o;
  o.tau_box = 1.0;
  o.tau_resolution = 3;
  o.held_out = 2;
  const HomogenizedTable a = tabulate_b(op, PiecewisePartition(2, 1), TorusGrid::square(8), {}, o);
  o.threads = 4;
  const HomogenizedTable b = tabulate_b(op, PiecewisePartition(2, 1), TorusGrid::square(8), {}, o);
  CHECK(a.values() == b.values());
  CHECK(a.interpolation_error == b.interpolation_error);
}
