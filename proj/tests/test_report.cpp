#include "doctest.h"

#include "homog/report.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>

using namespace homog;

TEST_CASE("reals use scientific notation with fifteen significant digits") {
  CHECK(format_real(1.0) == "1.00000000000000e+00");
  CHECK(format_real(-0.000125) == "-1.25000000000000e-04");
}

TEST_CASE("fnv1a matches reference vectors") {
  CHECK(fnv1a_hex("") == "cbf29ce484222325");
  CHECK(fnv1a_hex("a") == "af63dc4c8601ec8c");
  CHECK(fnv1a_hex("foobar") == "85944171f73967e8");
}

TEST_CASE("csv rows echo the config hash with CRLF line endings") {
  ExperimentReport r;
  r.experiment = "demo";
  r.config_hash = "abc";
  r.add("s", "h", 2.0, "err", 0.5);
  r.add("s", "h", 4.0, "err", 0.25);
  const std::string csv = to_csv(r);
  CHECK(csv.rfind("config_hash,series,parameter,parameter_value,metric,value\r\n", 0) == 0);
  CHECK(csv.find("abc,s,h,2.00000000000000e+00,err,5.00000000000000e-01\r\n") != std::string::npos);
  CHECK_THROWS_AS(r.add("s", "h", 8.0, "err", std::nan("")), std::runtime_error);
  CHECK_THROWS_AS(r.add("s", "h", 8.0, "err", INFINITY), std::runtime_error);
}

TEST_CASE("verdicts distinguish pass, fail and not asserted") {
  ExperimentReport r;
  r.note_rule("informational", 1.0, 0.0);
  CHECK(r.all_passed());
  r.assert_rule("ok", 0.1, 1.0, true);
  CHECK(r.all_passed());
  const auto j = verdicts_json(r);
  CHECK(j[0]["pass"].is_null());
  CHECK(j[1]["pass"].get<bool>());
  r.assert_rule("bad", 2.0, 1.0, false);
  CHECK(!r.all_passed());
}

TEST_CASE("non-increasing check allows one small wobble") {
  CHECK(non_increasing_with_wobble({4.0, 2.0, 1.0, 0.5}));
  CHECK(non_increasing_with_wobble({4.0, 2.0, 2.1, 1.0}));
  CHECK(!non_increasing_with_wobble({4.0, 2.0, 2.5, 1.0}));
  CHECK(!non_increasing_with_wobble({4.0, 4.2, 4.3, 1.0}));
  CHECK(non_increasing_with_wobble({1e-16, 3e-16, 2e-16}, 0.10, 1, 1e-12));
  CHECK(non_increasing_with_wobble({}));
}

TEST_CASE("written reports contain csv, verdicts, timing and a plot script") {
  ExperimentReport r;
  r.experiment = "demo";
  r.config_hash = "abc";
  r.add("s", "h", 2.0, "err", 0.5);
  r.assert_rule("ok", 0.1, 1.0, true);
  r.runtime_seconds = 0.25;
  const auto dir = std::filesystem::temp_directory_path() / "homog_report_test";
  std::filesystem::remove_all(dir);
  write_report(dir, r);
  for (const char* f : {"report.csv", "verdict.json", "timing.json", "plot.gp"}) CHECK(std::filesystem::exists(dir / f));
  std::ifstream in(dir / "verdict.json");
  nlohmann::json j;
  in >> j;
  CHECK(j["pass"].get<bool>());
  CHECK(j["verdicts"][0]["rule"] == "ok");
  std::filesystem::remove(dir / "plot.gp");
  write_report(dir, r, false);
  CHECK(!std::filesystem::exists(dir / "plot.gp"));
}
