// Apache License, Version 2.0, refer to LICENSE.txt

#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "cli.hpp"

namespace dpgm::cli {
namespace {

namespace fs = std::filesystem;

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir = fs::temp_directory_path() /
          ("dpgm_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir);
    fs::create_directories(dir);
  }
  void TearDown() override { fs::remove_all(dir); }

  int run(std::vector<std::string> args) {
    out.str("");
    err.str("");
    return run_cli(args, out, err);
  }
  std::string write_config(const std::string& name, const std::string& text) {
    const fs::path p = dir / name;
    std::ofstream(p) << text;
    return p.string();
  }
  static std::string slurp(const fs::path& p) {
    std::ifstream f(p);
    std::stringstream s;
    s << f.rdbuf();
    return s.str();
  }

  fs::path dir;
  std::ostringstream out;
  std::ostringstream err;
};

TEST_F(Cli, UnknownSubcommandAndFlagsAreConfigErrors) {
  EXPECT_EQ(run({"frobnicate"}), kExitConfig);
  EXPECT_EQ(run({}), kExitConfig);
  EXPECT_EQ(run({"hmc-bench", "--bogus"}), kExitConfig);
  EXPECT_EQ(run({"hmc-bench", "--config", (dir / "missing.json").string()}), kExitConfig);
}

TEST_F(Cli, UnknownConfigKeyIsRejected) {
  const auto cfg = write_config("c.json", R"({"chains": 10, "chainz": 3})");
  EXPECT_EQ(run({"hmc-bench", "--config", cfg, "--out", dir.string()}), kExitConfig);
  EXPECT_NE(err.str().find("chainz"), std::string::npos);
  const auto bad_json = write_config("b.json", "{ not json");
  EXPECT_EQ(run({"hmc-bench", "--config", bad_json, "--out", dir.string()}), kExitConfig);
}

TEST_F(Cli, InvalidThreadCountIsRejected) {
  ::setenv("DPGM_THREADS", "zero", 1);
  const int code = run({"hmc-bench", "--out", dir.string()});
  ::unsetenv("DPGM_THREADS");
  EXPECT_EQ(code, kExitConfig);
  EXPECT_NE(err.str().find("DPGM_THREADS"), std::string::npos);
}

TEST_F(Cli, GradcheckPassesAndReports) {
  ASSERT_EQ(run({"gradcheck", "--out", dir.string()}), kExitOk) << err.str();
  const auto j = nlohmann::json::parse(slurp(dir / "gradcheck.json"));
  EXPECT_TRUE(j.at("pass").get<bool>());
  EXPECT_LT(j.at("max_rel_error").get<double>(), 1e-4);
  EXPECT_GE(j.at("graphs").size(), 10u);
}

TEST_F(Cli, GradcheckWithUselessStepIsNumericalFailure) {
  const auto cfg = write_config("g.json", R"({"h": 1e-13})");
  EXPECT_EQ(run({"gradcheck", "--config", cfg, "--out", dir.string()}), kExitNumerical);
}

TEST_F(Cli, HmcBenchMatchesStandardNormal) {
  ASSERT_EQ(run({"hmc-bench", "--out", dir.string()}), kExitOk) << err.str();
  const auto j = nlohmann::json::parse(slurp(dir / "hmc.json"));
  EXPECT_LT(j.at("mean_abs_error").get<double>(), 0.05);
  EXPECT_LT(j.at("variance_error").get<double>(), 0.1);
  EXPECT_NEAR(j.at("acceptance").get<double>(), 0.67, 0.1);
  EXPECT_LT(j.at("reversibility_error").get<double>(), 1e-10);
}

TEST_F(Cli, OracleSmallRun) {
  const auto cfg = write_config(
      "o.json", R"({"train": 200, "test": 50, "epochs": 3, "eval_k": [1, 5], "methods": ["vae", "rem_v1"]})");
  ASSERT_EQ(run({"oracle", "--config", cfg, "--out", dir.string()}), kExitOk) << err.str();
  const auto j = nlohmann::json::parse(slurp(dir / "loglik.json"));
  EXPECT_TRUE(j.at("methods").contains("vae"));
  EXPECT_TRUE(j.at("methods").contains("rem_v1"));
  const std::string bounds = slurp(dir / "bounds.csv");
  EXPECT_EQ(bounds.substr(0, bounds.find('\n')), "method,k,bound,truth,gap");
  const auto bad = write_config("bad.json", R"({"methods": ["vea"]})");
  EXPECT_EQ(run({"oracle", "--config", bad, "--out", dir.string()}), kExitConfig);
}

TEST_F(Cli, EtmIsDeterministicGivenSeed) {
  const auto cfg = write_config("e.json", R"({"planted": {"docs": 100}, "epochs": 3})");
  const fs::path a = dir / "a", b = dir / "b";
  ASSERT_EQ(run({"etm", "--config", cfg, "--seed", "7", "--out", a.string()}), kExitOk) << err.str();
  ASSERT_EQ(run({"etm", "--config", cfg, "--seed", "7", "--out", b.string()}), kExitOk);
  EXPECT_EQ(slurp(a / "topics.json"), slurp(b / "topics.json"));
  EXPECT_EQ(slurp(a / "train_log.csv"), slurp(b / "train_log.csv"));
  const std::string log = slurp(a / "train_log.csv");
  EXPECT_EQ(log.substr(0, log.find('\n')), "epoch,elbo,perplexity");
}

TEST_F(Cli, RingsimShortRunWritesCoverage) {
  const auto cfg = write_config("r.json", R"({"samples": 200, "eval_samples": 200, "batch": 100})");
  ASSERT_EQ(run({"ringsim", "--config", cfg, "--epochs", "1", "--lambda", "0.1", "--out",
                 dir.string()}),
            kExitOk)
      << err.str();
  const auto j = nlohmann::json::parse(slurp(dir / "coverage.json"));
  EXPECT_TRUE(j.contains("modes"));
  EXPECT_TRUE(j.contains("noisy"));
  EXPECT_TRUE(fs::exists(dir / "samples.csv"));
  EXPECT_TRUE(fs::exists(dir / "train_log.csv"));
}

}  // namespace
}  // namespace dpgm::cli
