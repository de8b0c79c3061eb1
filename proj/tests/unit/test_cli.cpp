#include "doctest.h"

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sys/wait.h>

#include "proxbridge/config.hpp"
#include "proxbridge/io.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const fs::path kSource = PROXBRIDGE_SOURCE_DIR;

fs::path scratch(const std::string& name) {
  const auto p = fs::temp_directory_path() / ("proxbridge_cli_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

// Exit status of the CLI with stdout and stderr captured to files in `dir`.
int run(const std::string& args, const fs::path& dir) {
  const std::string cmd = std::string("\"") + PROXBRIDGE_CLI_PATH + "\" " + args + " > \"" + (dir / "stdout").string() +
                          "\" 2> \"" + (dir / "stderr").string() + "\"";
  const int raw = std::system(cmd.c_str());
  return WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

fs::path write_config(const fs::path& dir, const std::string& name, const json& j) {
  const auto p = dir / name;
  proxbridge::io::write_json(p, j);
  return p;
}

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("synthesize is byte-identical for a repeated seed") {
  const auto dir = scratch("synth");
  const auto a = dir / "a.csv", b = dir / "b.csv", c = dir / "c.csv";
  REQUIRE(run("synthesize --dgp three_action --n 300 --seed 4 --out " + a.string(), dir) == 0);
  REQUIRE(run("synthesize --dgp three_action --n 300 --seed 4 --out " + b.string(), dir) == 0);
  REQUIRE(run("synthesize --dgp three_action --n 300 --seed 5 --out " + c.string(), dir) == 0);
  CHECK(slurp(a) == slurp(b));
  CHECK(slurp(a) != slurp(c));
  CHECK(fs::exists(proxbridge::io::default_sidecar(a)));
  const json m = proxbridge::io::read_json(dir / "a.csv.manifest.json");
  CHECK(m.at("n") == 300);
  fs::remove_all(dir);
}

TEST_CASE("synthesize with zero rows writes the header only") {
  const auto dir = scratch("synth0");
  const auto a = dir / "a.csv";
  REQUIRE(run("synthesize --dgp unique_binary --n 0 --seed 1 --out " + a.string(), dir) == 0);
  CHECK(slurp(a) == "y,w_1,z_1,a,x_1\n");
  fs::remove_all(dir);
}

TEST_CASE("estimate writes a report with the documented keys") {
  const auto dir = scratch("estimate");
  json cfg = proxbridge::io::read_json(kSource / "configs" / "estimate_oracle.json");
  cfg["output"] = (dir / "report.json").string();
  const auto path = write_config(dir, "cfg.json", cfg);
  REQUIRE(run("estimate --config " + path.string() + " --print-summary", dir) == 0);
  const json r = proxbridge::io::read_json(dir / "report.json");
  for (const char* k : {"estimator", "J", "se", "ci", "alpha", "level", "n", "descriptive", "folds", "config", "run",
                        "data_hash", "oracle_J"}) {
    CHECK_MESSAGE(r.contains(k), k);
  }
  CHECK(r.at("n") == 100000);
  const double j = r.at("J"), se = r.at("se"), truth = r.at("oracle_J");
  CHECK(std::abs(j - truth) <= 4.0 * se);
  CHECK(slurp(dir / "stdout").rfind("dr J=", 0) == 0);
  fs::remove_all(dir);
}

TEST_CASE("estimate on a CSV produced by synthesize") {
  const auto dir = scratch("csv");
  const auto csv = dir / "d.csv";
  REQUIRE(run("synthesize --dgp nonunique_policy --n 2000 --seed 7 --out " + csv.string(), dir) == 0);
  json cfg = proxbridge::io::read_json(kSource / "configs" / "estimate_csv.json");
  cfg["data"]["csv"] = csv.string();
  cfg["output"] = (dir / "r.json").string();
  const auto path = write_config(dir, "cfg.json", cfg);
  REQUIRE(run("estimate --config " + path.string(), dir) == 0);
  const json r = proxbridge::io::read_json(dir / "r.json");
  CHECK(r.at("n") == 2000);
  CHECK(std::isfinite(r.at("J").get<double>()));
  fs::remove_all(dir);
}

TEST_CASE("bad config exits with code 2 and a JSON error") {
  const auto dir = scratch("bad");
  json cfg = proxbridge::io::read_json(kSource / "configs" / "estimate_oracle.json");
  cfg["estimator"]["unknown_key"] = 1;
  cfg["output"] = (dir / "r.json").string();
  const auto path = write_config(dir, "cfg.json", cfg);
  CHECK(run("estimate --config " + path.string(), dir) == 2);
  const std::string err = slurp(dir / "stderr");
  const auto line = err.substr(err.rfind('{', err.find("\"error\"")));
  const json j = json::parse(line.substr(0, line.find('\n')));
  CHECK(j.at("error").at("kind") == "config_error");
  CHECK(j.at("error").at("message").get<std::string>().find("unknown_key") != std::string::npos);
  CHECK_FALSE(fs::exists(dir / "r.json"));
  fs::remove_all(dir);
}

TEST_CASE("validate-config accepts the bundled configs and rejects a broken one") {
  const auto dir = scratch("validate");
  for (const auto& e : fs::directory_iterator(kSource / "configs")) {
    INFO(e.path().string());
    CHECK(run("validate-config --config " + e.path().string(), dir) == 0);
  }
  const auto path = write_config(dir, "bad.json", json{{"study", "rate"}, {"dgp", "unique_binary"}});
  CHECK(run("validate-config --config " + path.string(), dir) == 2);
  fs::remove_all(dir);
}

TEST_CASE("single-cell study writes a one-row table") {
  const auto dir = scratch("study1");
  const json cfg = {{"study", "coverage"}, {"dgp", "unique_binary"}, {"sizes", {400}}, {"replications", 1},
                    {"seed", 2},           {"estimator", {{"type", "dr"}, {"oracle", true}}},
                    {"output_dir", (dir / "out").string()}};
  const auto path = write_config(dir, "cfg.json", cfg);
  REQUIRE(run("study --config " + path.string(), dir) == 0);
  const std::string cells = slurp(dir / "out" / "cells.csv");
  CHECK(std::count(cells.begin(), cells.end(), '\n') == 2);
  const std::string reps = slurp(dir / "out" / "replications.csv");
  CHECK(std::count(reps.begin(), reps.end(), '\n') == 2);
  CHECK(fs::exists(dir / "out" / "summary.json"));
  fs::remove_all(dir);
}

TEST_CASE("identity study passes") {
  const auto dir = scratch("ident");
  REQUIRE(run("study --config " + (kSource / "configs" / "study_identities.json").string() + " --out-dir " +
                  (dir / "out").string() + " --print-summary",
              dir) == 0);
  CHECK(proxbridge::io::read_json(dir / "out" / "summary.json").at("pass") == true);
  CHECK(slurp(dir / "stdout") == "identities pass\n");
  fs::remove_all(dir);
}

TEST_CASE("rate smoke study stays within its time budget") {
  const auto dir = scratch("rate");
  const auto t0 = std::chrono::steady_clock::now();
  REQUIRE(run("study --config " + (kSource / "configs" / "study_rate_smoke.json").string() + " --out-dir " +
                  (dir / "out").string(),
              dir) == 0);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  MESSAGE("rate smoke took " << secs << " s");
  CHECK(secs <= 60.0);
  const json s = proxbridge::io::read_json(dir / "out" / "summary.json");
  CHECK(s.at("results").at("slope_defined") == true);
  fs::remove_all(dir);
}

}  // TEST_SUITE
