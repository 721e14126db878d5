#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

namespace fs = std::filesystem;

namespace {

const fs::path& scratch() {
  static const fs::path dir = [] {
    fs::path d = fs::temp_directory_path() / ("finsler_cli_" + std::to_string(::getpid()));
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

int run(const std::string& args) {
  const std::string cmd = std::string(FINSLER_CLI) + " " + args + " 2>/dev/null";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string config(const std::string& name) { return std::string(FINSLER_CONFIGS) + "/" + name; }

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

fs::path write_config(const std::string& name, const nlohmann::json& j) {
  const fs::path p = scratch() / name;
  std::ofstream(p) << j.dump(2);
  return p;
}

nlohmann::json load(const std::string& name) { return nlohmann::json::parse(slurp(config(name))); }

}  // namespace

TEST(Cli, PassingRunsExitZero) {
  EXPECT_EQ(run("tensors --config " + config("tensors_affine_sphere.json")), 0);
  EXPECT_EQ(run("identities --config " + config("identities_quartic.json")), 0);
  EXPECT_EQ(run("divergence --theorem rund --config " + config("rund_quadratic_metric.json") + " --orders 4,8"), 0);
  // quartic needs the higher orders before its residual drops under 1e-7
  EXPECT_EQ(run("divergence --theorem rund --config " + config("rund_quartic.json") + " --orders 4,8"), 1);
}

TEST(Cli, ArgumentErrorsExitTwo) {
  EXPECT_EQ(run(""), 2);
  EXPECT_EQ(run("tensors"), 2);
  EXPECT_EQ(run("divergence --config " + config("rund_quartic.json")), 2);
  EXPECT_EQ(run("divergence --theorem stokes --config " + config("rund_quartic.json")), 2);
  EXPECT_EQ(run("tensors --config " + (scratch() / "missing.json").string()), 2);
  EXPECT_EQ(run("divergence --theorem rund --orders 4,x --config " + config("rund_quartic.json")), 2);
  EXPECT_EQ(run("divergence --theorem rund --threads 0 --config " + config("rund_quartic.json")), 2);
}

TEST(Cli, ConfigErrorsExitTwo) {
  auto j = load("identities_quartic.json");
  j["frobnicate"] = 1;
  EXPECT_EQ(run("identities --config " + write_config("unknown.json", j).string()), 2);

  j = load("identities_quartic.json");
  j["section"] = {"1", "1"};
  EXPECT_EQ(run("identities --config " + write_config("dim.json", j).string()), 2);

  j = load("identities_quartic.json");
  j["tolerances"] = {{"nonsense", 1e-3}};
  EXPECT_EQ(run("identities --config " + write_config("tol.json", j).string()), 2);

  j = load("identities_quartic.json");
  j["field"]["components"][0] = "y1 +* 2";
  EXPECT_EQ(run("identities --config " + write_config("parse.json", j).string()), 2);

  j = load("identities_quartic.json");
  j["points"] = {{{"x", {0.1, 0.2, 0.3}}, {"y", {1.0, 0.0, 0.0}}}};  // negative quartic form
  EXPECT_EQ(run("identities --config " + write_config("inadmissible.json", j).string()), 2);

  // an explicitly requested check that needs a missing section
  j = load("identities_quartic.json");
  j.erase("section");
  j["points"] = {{{"x", {0.1, 0.2, 0.3}}, {"y", {0.6, 1.0, 1.0}}}};
  j["checks"] = {"corollary"};
  EXPECT_EQ(run("identities --config " + write_config("nosection.json", j).string()), 2);

  // tensors-only check on the identities command
  j = load("identities_quartic.json");
  j["checks"] = {"flat"};
  EXPECT_EQ(run("identities --config " + write_config("wrongcmd.json", j).string()), 2);

  EXPECT_EQ(run("energy --config " + config("rund_quartic.json")), 2);  // no slices
}

TEST(Cli, NumericFailureExitsOne) {
  auto j = load("tensors_affine_sphere.json");
  j["lagrangian"] = {{"id", "quartic"}, {"dim", 4}};
  j["points"] = {{{"x", {0, 0, 0, 0}}, {"y", {0.5, 1, 1, 1}}}};
  j["checks"] = {"mean_cartan_zero"};
  const fs::path out = scratch() / "fail.out";
  EXPECT_EQ(run("tensors --config " + write_config("fail.json", j).string() + " --out " + out.string()), 1);
  const auto rep = nlohmann::json::parse(slurp(out));
  EXPECT_FALSE(rep["passed"].get<bool>());
  EXPECT_FALSE(rep["checks"]["mean_cartan_zero"]["passed"].get<bool>());
}

TEST(Cli, QuarticFinslerGateRefuses) {
  const fs::path out = scratch() / "gate.out";
  EXPECT_EQ(run("divergence --theorem finsler --config " + config("finsler_quartic_gate.json") + " --out " +
                out.string()),
            3);
  const auto rep = nlohmann::json::parse(slurp(out));
  EXPECT_FALSE(rep["gate"]["passed"].get<bool>());
  // forcing past the gate reaches the normal solve, which has no admissible preimage here
  const fs::path forced = scratch() / "gate_forced.out";
  EXPECT_EQ(run("divergence --theorem finsler --force --config " + config("finsler_quartic_gate.json") + " --out " +
                forced.string()),
            1);
  EXPECT_EQ(nlohmann::json::parse(slurp(forced))["error"]["kind"], "legendre");
}

TEST(Cli, EnergyControlRefusedThenForced) {
  EXPECT_EQ(run("energy --orders 4 --config " + config("energy_control_divergence.json") + " --out " +
                (scratch() / "refused.out").string()),
            3);
  const fs::path out = scratch() / "forced_energy.out";
  EXPECT_EQ(run("energy --orders 4 --force --config " + config("energy_control_divergence.json") + " --out " +
                out.string()),
            1);
  const auto rep = nlohmann::json::parse(slurp(out));
  EXPECT_TRUE(rep["audit"]["forced"].get<bool>());
  EXPECT_EQ(rep["audit"]["failures"].size(), 1u);
}

TEST(Cli, ReportsIndependentOfThreadCount) {
  const fs::path a = scratch() / "t1.out", b = scratch() / "t8.out";
  const std::string base = "divergence --theorem finsler --orders 4,8 --config " + config("finsler_affine_slab.json");
  ASSERT_EQ(run(base + " --threads 1 --out " + a.string()), 0);
  ASSERT_EQ(run(base + " --threads 8 --out " + b.string()), 0);
  EXPECT_EQ(slurp(a), slurp(b));
  const auto rep = nlohmann::json::parse(slurp(a));
  EXPECT_FALSE(rep["options"].contains("threads"));
}

TEST(Cli, NumbersUseSeventeenDigits) {
  auto j = load("tensors_affine_sphere.json");
  j["tolerances"] = {{"mean_cartan", 0.1}};
  const fs::path out = scratch() / "digits.out";
  ASSERT_EQ(run("tensors --config " + write_config("digits.json", j).string() + " --out " + out.string()), 0);
  const std::string text = slurp(out);
  EXPECT_NE(text.find("\"tolerance\": 0.10000000000000001"), std::string::npos);
  // keys come out sorted
  EXPECT_LT(text.find("\"check\""), text.find("\"checks\""));
  EXPECT_LT(text.find("\"checks\""), text.find("\"inputs\""));
}

TEST(Cli, TableAndSummaryFiles) {
  auto j = load("rund_quadratic_metric.json");
  const fs::path table = scratch() / "table.csv", summary = scratch() / "summary.txt";
  j["output"] = {{"table", table.string()}, {"summary", summary.string()}};
  const fs::path out = scratch() / "rund.out";
  ASSERT_EQ(run("divergence --theorem rund --orders 4,8 --config " + write_config("tbl.json", j).string() + " --out " +
                out.string()),
            0);
  const std::string csv = slurp(table);
  EXPECT_EQ(csv.rfind("order,volume,boundary,oracle,residual\n", 0), 0u);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 3);
  EXPECT_NE(slurp(summary).find("PASS"), std::string::npos);
  EXPECT_EQ(slurp(out).find("seconds"), std::string::npos);
}

TEST(Cli, SeedScaleOverride) {
  const fs::path a = scratch() / "s1.out", b = scratch() / "s5.out";
  const std::string base = "divergence --theorem finsler --orders 4 --config " + config("finsler_affine_slab.json");
  ASSERT_EQ(run(base + " --out " + a.string()), 0);
  ASSERT_EQ(run(base + " --seed-scale 5 --out " + b.string()), 0);
  const auto ra = nlohmann::json::parse(slurp(a)), rb = nlohmann::json::parse(slurp(b));
  const double ba = ra["rows"][0]["boundary"], bb = rb["rows"][0]["boundary"];
  EXPECT_NEAR(ba, bb, 1e-10 * std::abs(ba));
  EXPECT_EQ(rb["options"]["seed_scale"].get<double>(), 5.0);
}

TEST(Cli, SampledPointsAreReproducible) {
  const fs::path a = scratch() / "smp1.out", b = scratch() / "smp2.out";
  ASSERT_EQ(run("identities --config " + config("identities_friedmann.json") + " --out " + a.string()), 0);
  ASSERT_EQ(run("identities --config " + config("identities_friedmann.json") + " --out " + b.string()), 0);
  EXPECT_EQ(slurp(a), slurp(b));
  const auto rep = nlohmann::json::parse(slurp(a));
  EXPECT_EQ(rep["points"].size(), 20u);
  EXPECT_EQ(rep["checks"]["hud"]["points"].size(), 20u);

  auto j = load("identities_quartic.json");
  j["samples"]["upper"] = {1, 1};
  EXPECT_EQ(run("identities --config " + write_config("smpdim.json", j).string()), 2);
  j = load("identities_quartic.json");
  j.erase("section");
  j.erase("points");
  j["samples"]["y_center"] = {1.0, 0.0, 0.0};  // quartic form is negative around here
  j["samples"]["y_spread"] = 0.01;
  EXPECT_EQ(run("identities --config " + write_config("smpbad.json", j).string()), 2);
}
