#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <sstream>

#include "cavlab/cli.hpp"
#include "cavlab/parallel.hpp"

using namespace cavlab;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

fs::path make_dir(const std::string& name) {
  const auto dir = fs::temp_directory_path() / "cavlab_cli_test" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string write_file(const fs::path& dir, const std::string& name, const std::string& text) {
  const auto p = dir / name;
  std::ofstream out(p);
  out << text;
  return p.string();
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("enumerate: reference classes in the report") {
  const auto dir = make_dir("enum");
  const auto cfg = write_file(dir, "c.json",
                              R"({"shape": {"p":1, "q":3}, "N_max": 200, "out_dir": ")" +
                                  (dir / "out").string() + R"("})");
  CHECK(run_cli({"enumerate", "--config", cfg}) == 0);
  const auto report = json::parse(slurp(dir / "out" / "classes.json"));
  bool saw28 = false, saw112 = false;
  for (const auto& cls : report.at("classes")) {
    if (cls.at("N") == 28) {
      saw28 = true;
      CHECK(cls.at("case") == "Case2(+)");
    }
    if (cls.at("N") == 112) {
      saw112 = true;
      CHECK(cls.at("case") == "Case1(-,-)");
    }
  }
  CHECK(saw28);
  CHECK(saw112);
  CHECK(fs::exists(dir / "out" / "manifest.json"));
}

TEST_CASE("enumerate: empty result is still success") {
  const auto dir = make_dir("enum_empty");
  const auto cfg = write_file(dir, "c.json",
                              R"({"shape": {"p":1, "q":1}, "N_max": 2, "out_dir": ")" +
                                  (dir / "out").string() + R"("})");
  CHECK(run_cli({"enumerate", "--config", cfg}) == 0);
}

TEST_CASE("config errors exit with code 2") {
  const auto dir = make_dir("cfg_err");
  SUBCASE("malformed JSON") {
    const auto cfg = write_file(dir, "bad.json", "{\"shape\": {\"p\": 1,\n\"q\": }");
    CHECK(run_cli({"enumerate", "--config", cfg}) == 2);
  }
  SUBCASE("unknown key") {
    const auto cfg = write_file(dir, "unk.json", R"({"shape": {"p":1}, "nope": 3})");
    CHECK(run_cli({"enumerate", "--config", cfg}) == 2);
  }
  SUBCASE("p, q not coprime") {
    const auto cfg = write_file(dir, "gcd.json", R"({"shape": {"p":2, "q":4}})");
    CHECK(run_cli({"enumerate", "--config", cfg}) == 2);
  }
  SUBCASE("loop too coarse") {
    const auto cfg = write_file(
        dir, "loop.json",
        R"({"shape": {"p":1, "q":1}, "N": 5, "loop": {"segments": 2}, "out_dir": ")" +
            (dir / "out").string() + R"("})");
    CHECK(run_cli({"loop", "--config", cfg}) == 2);
  }
  SUBCASE("missing subcommand") { CHECK(run_cli({}) == 2); }
}

TEST_CASE("domain errors exit with code 3") {
  const auto dir = make_dir("domain_err");
  SUBCASE("no class at this N") {
    const auto cfg = write_file(dir, "c.json",
                                R"({"shape": {"p":1, "q":3}, "N": 113, "out_dir": ")" +
                                    (dir / "out").string() + R"("})");
    CHECK(run_cli({"enumerate", "--config", cfg}) == 3);
  }
  SUBCASE("slope suite at an absurd deformation scale") {
    const auto cfg = write_file(
        dir, "c.json",
        R"({"shape": {"p":1, "q":3}, "grid": {"base_intervals": 64}, "epsilons": [0.5],
            "verify": {"suites": ["slopes"], "slope_Ns": [112]}, "out_dir": ")" +
            (dir / "out").string() + R"("})");
    CHECK(run_cli({"verify", "--config", cfg}) == 3);
  }
}

TEST_CASE("verify: fast suites pass and reports are byte-identical") {
  const auto dir = make_dir("verify");
  const auto cfg = write_file(
      dir, "c.json",
      R"({"shape": {"p":1, "q":3},
          "verify": {"suites": ["operators", "case5", "partner"],
                     "operator_Ns": [112, 28], "case5_N_max": 2000,
                     "partner_Ns": [28], "partner_samples": 5}})");
  CHECK(run_cli({"verify", "--config", cfg, "--out", (dir / "a").string()}) == 0);
  CHECK(run_cli({"verify", "--config", cfg, "--out", (dir / "b").string()}) == 0);
  const auto ja = slurp(dir / "a" / "verify.json");
  CHECK(ja == slurp(dir / "b" / "verify.json"));
  CHECK(json::parse(ja).at("failed") == 0);
}

TEST_CASE("verify: a failed assertion exits with code 4") {
  const auto dir = make_dir("verify_fail");
  // impossible tolerance forces a controlled failure
  const auto cfg = write_file(
      dir, "c.json",
      R"({"shape": {"p":1, "q":3}, "tolerances": {"partner_deviation": 1e-30},
          "verify": {"suites": ["partner"], "partner_Ns": [28], "partner_samples": 3},
          "out_dir": ")" +
          (dir / "out").string() + R"("})");
  CHECK(run_cli({"verify", "--config", cfg}) == 4);
}

TEST_CASE("loop command writes holonomy data") {
  const auto dir = make_dir("loop");
  const auto cfg = write_file(
      dir, "c.json",
      R"({"shape": {"p":1, "q":1}, "N": 5,
          "loop": {"radius_alpha": 0.012, "radius_beta": 0.02, "segments": 64},
          "out_dir": ")" +
          (dir / "out").string() + R"("})");
  CHECK(run_cli({"loop", "--config", cfg}) == 0);
  const auto report = json::parse(slurp(dir / "out" / "loop.json"));
  CHECK(report.at("signs") == json::array({-1, -1}));
  CHECK(fs::exists(dir / "out" / "loop_points.csv"));
}

TEST_CASE("split honors overrides and the manifest reproduces the run") {
  const auto dir = make_dir("split");
  const auto cfg = write_file(dir, "c.json",
                              R"({"shape": {"p":1, "q":3}, "N": 28,
          "rotated": {"alpha_prime": 0.01, "beta_prime": 0.0}})");
  CHECK(run_cli({"split", "--config", cfg, "--out", (dir / "a").string(), "--beta-prime",
                 "0.02"}) == 0);
  // rerun from the manifest: byte-identical split report
  CHECK(run_cli({"split", "--config", (dir / "a" / "manifest.json").string(), "--out",
                 (dir / "b").string()}) == 0);
  CHECK(slurp(dir / "a" / "split.json") == slurp(dir / "b" / "split.json"));
}

TEST_CASE("loop can export fields at selected points") {
  const auto dir = make_dir("loop_export");
  const auto cfg = write_file(
      dir, "c.json",
      R"({"shape": {"p":1, "q":1}, "N": 5,
          "loop": {"radius_alpha": 0.012, "radius_beta": 0.02, "segments": 32,
                   "export_points": [0, 16]},
          "grid": {"base_intervals": 32}, "export": {"format": "pgm"},
          "out_dir": ")" +
          (dir / "out").string() + R"("})");
  CHECK(run_cli({"loop", "--config", cfg}) == 0);
  CHECK(fs::exists(dir / "out" / "loop_p0_level0.pgm"));
  CHECK(fs::exists(dir / "out" / "loop_p16_level1.pgm"));

  // a loop escaping the invertibility region is a config error
  const auto bad = write_file(dir, "bad.json",
                              R"({"shape": {"p":1, "q":1}, "N": 5,
          "loop": {"radius_alpha": 1.5, "radius_beta": 0.02, "segments": 32},
          "out_dir": ")" +
                                  (dir / "out2").string() + R"("})");
  CHECK(run_cli({"loop", "--config", bad}) == 2);
}

TEST_CASE("split accepts an explicit member subset") {
  const auto dir = make_dir("subset");
  const auto cfg = write_file(dir, "c.json",
                              R"({"shape": {"p":1, "q":4}, "N": 1300,
          "modes": [[2,18],[12,17],[20,15]],
          "rotated": {"alpha_prime": 0.01, "beta_prime": 0.02}, "out_dir": ")" +
                                  (dir / "out").string() + R"("})");
  CHECK(run_cli({"split", "--config", cfg}) == 0);
  const auto report = json::parse(slurp(dir / "out" / "split.json"));
  CHECK(report.at("class").at("size") == 3);
  CHECK(report.at("class").at("case") == "Case3(-)");
  CHECK(report.at("levels").size() == 3);
}

TEST_CASE("mirror suite runs the full-order check and reports the failed bracket") {
  const auto dir = make_dir("mirror");
  const auto cfg = write_file(
      dir, "c.json",
      R"({"shape": {"p":1, "q":4}, "grid": {"base_intervals": 64},
          "verify": {"suites": ["mirror"], "mirror_N": 164,
                     "mirror_epsilons": [0.004, 0.002]},
          "out_dir": ")" +
          (dir / "out").string() + R"("})");
  // the measured deviation ratio is ~0.5, outside the asserted [1/6, 3/8]
  CHECK(run_cli({"verify", "--config", cfg}) == 4);
  const auto report = json::parse(slurp(dir / "out" / "verify.json"));
  CHECK(report.at("failed").get<int>() >= 1);
  bool saw_ratio = false;
  for (const auto& a : report.at("assertions")) {
    const std::string name = a.at("name");
    if (name.find("ratio_0") != std::string::npos) {
      saw_ratio = true;
      CHECK(a.at("value").get<double>() > 0.4);
      CHECK(a.at("value").get<double>() < 0.6);
    }
  }
  CHECK(saw_ratio);
}

TEST_CASE("export member field as CSV") {
  const auto dir = make_dir("export");
  const auto cfg = write_file(dir, "c.json",
                              R"({"shape": {"p":1, "q":3}, "N": 112,
          "grid": {"base_intervals": 24}, "export": {"format": "csv", "member": [2, 6]},
          "out_dir": ")" +
                                  (dir / "out").string() + R"("})");
  CHECK(run_cli({"export", "--config", cfg}) == 0);
  CHECK(fs::exists(dir / "out" / "mode_n2_m6.csv"));
  CHECK(fs::exists(dir / "out" / "mode_n2_m6.csv.meta.txt"));
}

TEST_CASE("CAVLAB_THREADS caps the worker count") {
  setenv("CAVLAB_THREADS", "1", 1);
  CHECK(worker_count() == 1);
  unsetenv("CAVLAB_THREADS");
  CHECK(worker_count() >= 1);
}

TEST_CASE("rerunning straight from a manifest reproduces the results") {
  const auto dir = make_dir("manifest");
  const auto cfg = write_file(dir, "c.json",
                              R"({"shape": {"p":1, "q":3}, "N_max": 120, "out_dir": ")" +
                                  (dir / "out").string() + R"("})");
  REQUIRE(run_cli({"enumerate", "--config", cfg}) == 0);
  CHECK(run_cli({"enumerate", "--config", (dir / "out" / "manifest.json").string(), "--out",
                 (dir / "out2").string()}) == 0);
  CHECK(slurp(dir / "out" / "classes.json") == slurp(dir / "out2" / "classes.json"));
}
