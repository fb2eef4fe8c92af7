#include "doctest.h"

#include "json.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>

namespace fs = std::filesystem;

namespace {

fs::path scratch() {
  static const fs::path dir = [] {
    fs::path d = fs::temp_directory_path() / "homog_cli_test";
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

fs::path write(const std::string& name, const std::string& text) {
  const fs::path p = scratch() / name;
  std::ofstream(p) << text;
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

struct Outcome {
  int code = -1;
  std::string err;
};

Outcome cli(const std::string& args) {
  const fs::path err = scratch() / "stderr.txt";
  const std::string cmd = std::string(HOMOG_CLI) + " " + args + " > /dev/null 2> " + err.string();
  const int status = std::system(cmd.c_str());
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, slurp(err)};
}

const char* kLaminate = R"({
  "operator": {"dim": 1, "p": 2, "coefficient": {"pattern": "laminate", "levels": [1, 4]}},
  "grids": {"cell_resolution": 32},
  "parameters": {"tau": [[1]], "expected_b": [[1.6]]}
})";

}  // namespace

TEST_CASE("homogenize writes b and exits 0") {
  const fs::path out = scratch() / "hom";
  const Outcome o = cli("homogenize --config " + write("lam.json", kLaminate).string() + " --out " + out.string());
  CHECK(o.code == 0);
  const auto v = nlohmann::json::parse(slurp(out / "verdict.json"));
  CHECK(v["results"]["b"][0][0].get<double>() == doctest::Approx(1.6).epsilon(1e-9));
  CHECK(fs::exists(out / "report.csv"));
  CHECK(fs::exists(out / "timing.json"));
  CHECK(!fs::exists(out / "corrector_0.bin"));
}

TEST_CASE("shipped checkerboard config gives b close to 2 I") {
  const fs::path out = scratch() / "checker";
  const Outcome o = cli("homogenize --config " + std::string(HOMOG_CONFIGS) + "/cell/checker.json --out " + out.string());
  CHECK(o.code == 0);
  const auto v = nlohmann::json::parse(slurp(out / "verdict.json"));
  CHECK(std::abs(v["results"]["b"][0][0].get<double>() - 2.0) <= 0.03 * 2.0);
  CHECK(std::abs(v["results"]["b"][0][1].get<double>()) <= 1e-8);
}

TEST_CASE("a missing exponent exits 2 with a one-line diagnostic") {
  const Outcome o = cli("cell-solve --config " +
                        write("nop.json", R"({"operator": {"dim": 1, "coefficient": {"pattern": "constant"}}})").string() +
                        " --out " + (scratch() / "nop").string());
  CHECK(o.code == 2);
  CHECK(o.err.find("operator.p") != std::string::npos);
  CHECK(o.err.find('\n') == o.err.size() - 1);
}

TEST_CASE("config errors exit 2") {
  CHECK(cli("theorem1 --config " + (scratch() / "absent.json").string()).code == 2);
  CHECK(cli("theorem1 --config " + write("bad.json", "{ not json").string()).code == 2);
  CHECK(cli("theorem1 --config " + write("unk.json", R"({"bogus": 1})").string()).code == 2);
  CHECK(cli("theorem2 --config " + write("lam2.json", kLaminate).string() + " --threads 0").code == 2);
  CHECK(cli("k-study").code == 2);
  CHECK(cli("theorem1 --config " + write("mismatch.json", R"({"experiment": "k_study"})").string()).code == 2);
}

TEST_CASE("a failed verdict exits 1") {
  const std::string wrong = R"({
    "operator": {"dim": 1, "p": 2, "coefficient": {"pattern": "laminate", "levels": [1, 4]}},
    "grids": {"cell_resolution": 32},
    "parameters": {"tau": [[1]], "expected_b": [[2.5]]}
  })";
  CHECK(cli("homogenize --config " + write("wrong.json", wrong).string() + " --out " + (scratch() / "w").string())
            .code == 1);
}

TEST_CASE("non-convergence exits 3") {
  const std::string stiff = R"({
    "operator": {"dim": 2, "p": 4, "coefficient": {"pattern": "checkerboard", "levels": [1, 100]}},
    "grids": {"cell_resolution": 12},
    "parameters": {"solver": {"max_newton": 1}}
  })";
  CHECK(cli("cell-solve --config " + write("stiff.json", stiff).string() + " --out " + (scratch() / "s").string())
            .code == 3);
}

TEST_CASE("cell-solve saves correctors and the seed reaches the hash") {
  const fs::path a = scratch() / "cs1", b = scratch() / "cs2";
  const std::string cfg = write("cs.json", kLaminate).string();
  CHECK(cli("cell-solve --config " + cfg + " --out " + a.string() + " --seed 1").code == 0);
  CHECK(cli("cell-solve --config " + cfg + " --out " + b.string() + " --seed 2").code == 0);
  CHECK(fs::exists(a / "corrector_0.bin"));
  CHECK(fs::exists(a / "corrector_0.csv"));
  const auto va = nlohmann::json::parse(slurp(a / "verdict.json"));
  const auto vb = nlohmann::json::parse(slurp(b / "verdict.json"));
  CHECK(va["config_hash"] != vb["config_hash"]);
}
