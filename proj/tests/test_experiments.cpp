#include "doctest.h"

#include "homog/experiments.hpp"

#include <string>

using namespace homog;
using nlohmann::json;

namespace {

ExperimentReport run(const std::string& text, int threads = 1) {
  return run_experiment(parse_config(json::parse(text), 1, threads));
}

std::vector<double> metric(const ExperimentReport& r, const std::string& series, const std::string& name) {
  std::vector<double> out;
  for (const ReportRow& row : r.rows)
    if (row.series == series && row.metric == name) out.push_back(row.value);
  return out;
}

const Verdict* verdict(const ExperimentReport& r, const std::string& rule) {
  for (const Verdict& v : r.verdicts)
    if (v.rule == rule) return &v;
  return nullptr;
}

}  // namespace

TEST_CASE("constant fields pair exactly with their mean") {
  const ExperimentReport r = run(R"({"experiment": "theorem1",
    "grids": {"field_resolution": 16},
    "parameters": {"dim": 2, "field": "constant", "constant": 2.5, "h_list": [1, 2, 3]}})");
  CHECK(r.all_passed());
  std::size_t n = 0;
  for (const ReportRow& row : r.rows)
    if (row.metric == "pairing_error") {
      CHECK(row.value <= 1e-12);
      ++n;
    }
  CHECK(n > 0);
}

TEST_CASE("oscillated indicator pairings shrink") {
  const ExperimentReport r = run(R"({"experiment": "theorem1",
    "grids": {"field_resolution": 32},
    "parameters": {"dim": 1, "field": "indicator", "h_list": [2, 16], "tolerance": 1.0}})");
  std::size_t n = 0, strict = 0;
  for (const ReportRow& a : r.rows) {
    if (a.metric != "pairing_error" || a.parameter_value != 2.0) continue;
    for (const ReportRow& b : r.rows)
      if (b.series == a.series && b.metric == a.metric && b.parameter_value == 16.0) {
        CHECK(b.value <= a.value + 1e-15);
        if (b.value < a.value) ++strict;
        ++n;
      }
  }
  CHECK(n > 0);
  CHECK(strict > 0);
}

TEST_CASE("L1 families separate bounded and concentrating sequences") {
  const ExperimentReport r = run(R"({"experiment": "theorem1_L1",
    "grids": {"field_resolution": 64},
    "parameters": {"h_list": [2, 4, 8, 16]}})");
  CHECK(r.all_passed());
  REQUIRE(verdict(r, "bounded_profile_vanishes"));
  REQUIRE(verdict(r, "spike_not_equi_integrable"));
}

TEST_CASE("z-independent coefficients make the oscillating and homogenized problems agree") {
  const ExperimentReport r = run(R"({"experiment": "theorem2",
    "operator": {"dim": 1, "p": 2, "coefficient": {"pattern": "constant", "levels": [2],
                 "modulation": "smooth", "modulation_amplitude": 0.5}},
    "grids": {"cell_resolution": 8, "macro_resolution": 64},
    "parameters": {"h_list": [1, 2, 4], "tau_resolution": 5}})");
  CHECK(r.all_passed());
  for (double e : metric(r, "theorem2", "lp_error")) CHECK(e <= 1e-9);
}

TEST_CASE("y-independent operators give D = 0 in the k study") {
  const ExperimentReport r = run(R"({"experiment": "k_study",
    "operator": {"dim": 1, "p": 3, "coefficient": {"pattern": "laminate", "levels": [1, 4]}},
    "grids": {"cell_resolution": 16, "macro_resolution": 32},
    "parameters": {"k_list": [1, 2], "h_list": [2], "y_samples": 2, "tau_samples": 2}})");
  CHECK(r.all_passed());
  for (double d : metric(r, "D", "max_h")) CHECK(d <= 1e-12);
}

TEST_CASE("partitions aligned with piecewise jumps give D = 0") {
  const ExperimentReport r = run(R"({"experiment": "k_study",
    "operator": {"dim": 1, "p": 2, "coefficient": {"pattern": "laminate", "levels": [1, 4],
                 "modulation": "piecewise", "piece_breaks": [0.5], "piece_scales": [1, 3]}},
    "grids": {"cell_resolution": 16, "macro_resolution": 32},
    "parameters": {"k_list": [2, 4], "h_list": [2], "y_samples": 2, "tau_samples": 2}})");
  for (double d : metric(r, "D", "max_h")) CHECK(d <= 1e-9);
  for (double g : metric(r, "b_gap", "max_abs")) CHECK(g <= 1e-9);
}

TEST_CASE("reports do not depend on the thread count") {
  const std::string cfg = R"({"experiment": "theorem2",
    "operator": {"dim": 1, "p": 3, "coefficient": {"pattern": "laminate", "levels": [1, 4]}},
    "grids": {"cell_resolution": 16, "macro_resolution": 64},
    "parameters": {"h_list": [1, 2, 4], "tau_resolution": 9, "two_guess": true}})";
  const ExperimentReport a = run(cfg, 1), b = run(cfg, 3);
  CHECK(to_csv(a) == to_csv(b));
  CHECK(verdicts_json(a) == verdicts_json(b));
  CHECK(a.config_hash == b.config_hash);
}

TEST_CASE("cell solves report b and compare to expectations") {
  const ExperimentReport r = run(R"({"experiment": "homogenize",
    "operator": {"dim": 1, "p": 2, "coefficient": {"pattern": "laminate", "levels": [1, 4]}},
    "grids": {"cell_resolution": 32},
    "parameters": {"tau": [[1], [2]], "expected_b": [[1.6], [3.2]]}})");
  CHECK(r.all_passed());
  CHECK(r.extras["b"][1][0].get<double>() == doctest::Approx(3.2).epsilon(1e-9));
  const ExperimentReport wrong = run(R"({"experiment": "homogenize",
    "operator": {"dim": 1, "p": 2, "coefficient": {"pattern": "laminate", "levels": [1, 4]}},
    "grids": {"cell_resolution": 32},
    "parameters": {"tau": [[1]], "expected_b": [[2.5]]}})");
  CHECK(!wrong.all_passed());
}

TEST_CASE("an exhausted iteration budget raises NotConverged") {
  CHECK_THROWS_AS(run(R"({"experiment": "homogenize",
    "operator": {"dim": 2, "p": 4, "coefficient": {"pattern": "checkerboard", "levels": [1, 100]}},
    "grids": {"cell_resolution": 12},
    "parameters": {"solver": {"max_newton": 1}}})"), NotConverged);
}

TEST_CASE("operator verification passes on a valid operator") {
  const ExperimentReport r = run(R"({"experiment": "verify_op",
    "operator": {"dim": 2, "p": 3, "coefficient": {"pattern": "checkerboard", "levels": [1, 4],
                 "modulation": "smooth"}},
    "parameters": {"samples": 200}})");
  CHECK(r.all_passed());
}

TEST_CASE("audits are part of every solving experiment") {
  const ExperimentReport r = run(R"({"experiment": "theorem2",
    "operator": {"dim": 1, "p": 2, "coefficient": {"pattern": "laminate", "levels": [1, 4]}},
    "grids": {"cell_resolution": 16, "macro_resolution": 32},
    "parameters": {"h_list": [1, 2], "two_guess": true}})");
  REQUIRE(verdict(r, "solver_reassembled_residual"));
  REQUIRE(verdict(r, "solver_energy_nonincreasing"));
  REQUIRE(verdict(r, "two_guess_agreement"));
  CHECK(verdict(r, "two_guess_agreement")->status == Verdict::Status::pass);
}
