#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <nlohmann/json.hpp>
#include <sstream>

#include "cli.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Run {
  int code = -1;
  std::string out, err;
};

Run run_cli(std::vector<std::string> args, const std::string& stdin_text = "") {
  args.insert(args.begin(), "eblab");
  std::istringstream in(stdin_text);
  std::ostringstream out, err;
  Run r;
  r.code = eblab::cli::run(args, in, out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("eblab-cli-test-" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write(const fs::path& p, const std::string& text) { std::ofstream(p) << text; }

}  // namespace

TEST_SUITE("cli") {
  TEST_CASE("verify-orthogonality succeeds") {
    const fs::path dir = scratch("ortho");
    const Run r = run_cli({"verify-orthogonality", "--seed", "1", "--out", dir.string(), "--set", "model=gaussian",
                           "--set", "s=1", "--set", "k_max=12"});
    REQUIRE(r.code == eblab::cli::kOk);
    const json j = json::parse(slurp(dir / "orthogonality.json"));
    CHECK(j["result"]["max_k_deviation"].get<double>() <= 1e-7);
    CHECK(j["result"]["max_k1_deviation"].get<double>() <= 1e-7);
    CHECK(j["seed"] == "1");
    const std::string csv = slurp(dir / "orthogonality.csv");
    CHECK(csv.rfind("# eblab orthogonality csv schema v1\n", 0) == 0);
    CHECK(csv.find("# config ") != std::string::npos);
  }

  TEST_CASE("malformed config exits 2 and names the key") {
    const fs::path dir = scratch("bad");
    write(dir / "bad.toml", "command = \"scaling\"\nseed = 1\n[prior]\nhi = 2 3\n");
    const Run r = run_cli({"--config", (dir / "bad.toml").string()});
    CHECK(r.code == eblab::cli::kConfigError);
    const json e = json::parse(r.err);
    CHECK(e["key"] == "prior.hi");
    CHECK(e["exit_code"] == 2);
  }

  TEST_CASE("unknown estimator exits 3") {
    const Run r = run_cli({"simulate-regret", "--seed", "1", "--set", "model=poisson", "--set", "n=10", "--set",
                           "estimator.kind=kernel-smoother"});
    CHECK(r.code == eblab::cli::kUnknownEstimator);
    CHECK(json::parse(r.err)["error"] == "unknown-estimator");
  }

  TEST_CASE("missing seed exits 2") {
    const Run r = run_cli({"robbins-certificate", "--set", "prior.kind=uniform", "--set", "prior.lo=0", "--set",
                           "prior.hi=2", "--set", "n=100"});
    CHECK(r.code == eblab::cli::kConfigError);
    CHECK(json::parse(r.err)["key"] == "seed");
  }

  TEST_CASE("unknown keys are rejected") {
    const Run r = run_cli({"robbins-certificate", "--seed", "1", "--set", "prior.kind=uniform", "--set", "prior.lo=0",
                           "--set", "prior.hi=2", "--set", "n=100", "--set", "replicaets=5"});
    CHECK(r.code == eblab::cli::kConfigError);
    CHECK(json::parse(r.err)["key"] == "replicaets");
  }

  TEST_CASE("scaling reruns are byte-identical") {
    const std::string cfg = R"({"command": "scaling", "model": "poisson", "prior": {"kind": "uniform", "lo": 0, "hi": 2},
      "n_grid": [100, 1000], "replicates": 10})";
    const fs::path a = scratch("scale-a"), b = scratch("scale-b");
    const Run ra = run_cli({"--stdin", "--seed", "77", "--out", a.string()}, cfg);
    const Run rb = run_cli({"--config", "-", "--seed", "77", "--out", b.string(), "--threads", "3"}, cfg);
    REQUIRE(ra.code == 0);
    REQUIRE(rb.code == 0);
    // Thread count is recorded in the config, so compare the data rows.
    auto rows = [](const std::string& s) { return s.substr(s.find("\nn,")); };
    CHECK(rows(slurp(a / "scaling.csv")) == rows(slurp(b / "scaling.csv")));
    const std::string first = slurp(a / "scaling.csv");
    REQUIRE(run_cli({"--stdin", "--seed", "77", "--out", a.string()}, cfg).code == 0);
    CHECK(slurp(a / "scaling.csv") == first);
    const json j = json::parse(slurp(a / "scaling.json"));
    CHECK(j["config"]["prior"]["hi"] == 2);
    CHECK(j["rows"].size() == 2);
  }

  TEST_CASE("environment overrides") {
    const fs::path dir = scratch("env");
    setenv("EBLAB_SET_PRIOR__KIND", "point_mass", 1);
    setenv("EBLAB_SET_PRIOR__LOCATION", "0", 1);
    const Run r = run_cli({"robbins-certificate", "--seed", "5", "--out", dir.string(), "--set", "n=50"});
    unsetenv("EBLAB_SET_PRIOR__KIND");
    unsetenv("EBLAB_SET_PRIOR__LOCATION");
    REQUIRE(r.code == 0);
    const json j = json::parse(slurp(dir / "certificate.json"));
    CHECK(j["rows"][0]["total"] == 0.0);
  }

  TEST_CASE("simulate-regret writes both artifacts") {
    const fs::path dir = scratch("sim");
    const Run r = run_cli({"simulate-regret", "--seed", "3", "--out", dir.string(), "--set", "model=poisson", "--set",
                           "prior.kind=uniform", "--set", "prior.lo=0", "--set", "prior.hi=2", "--set", "n=200", "--set",
                           "replicates=20", "--set", "estimator.kind=robbins"});
    REQUIRE(r.code == 0);
    CHECK(fs::exists(dir / "regret.csv"));
    const json j = json::parse(slurp(dir / "regret.json"));
    CHECK(j["samples"].size() == 20);
    CHECK(j["result"]["estimator"] == "robbins");
  }

  TEST_CASE("lowerbound-audit passes on the Gaussian preset") {
    const fs::path dir = scratch("audit");
    const Run r = run_cli({"lowerbound-audit", "--seed", "2", "--out", dir.string(), "--set", "model=gaussian", "--set",
                           "s=1", "--set", "m=4", "--set", "n=1e4", "--set", "pairs=8"});
    CHECK(r.code == 0);
    const json j = json::parse(slurp(dir / "audit.json"));
    CHECK(j["all_pass"] == true);
    CHECK(j["report"]["tau"]["pass"] == true);
  }

  TEST_CASE("usage errors") {
    CHECK(run_cli({"--no-such-flag"}).code == eblab::cli::kUsage);
    CHECK(run_cli({"frobnicate", "--seed", "1"}).code == eblab::cli::kConfigError);
    CHECK(run_cli({"--help"}).code == eblab::cli::kOk);
  }
}
