#include <gtest/gtest.h>

#include <json.hpp>

#include <sys/wait.h>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#ifndef MPLKIT_CLI
#error "MPLKIT_CLI must name the command-line binary"
#endif

namespace fs = std::filesystem;

namespace {

struct CliRun {
  int code;
  std::string out;
};

CliRun run(const std::string& args) {
  const std::string cmd = std::string(MPLKIT_CLI) + " " + args + " 2>&1";
  FILE* pipe = popen(cmd.c_str(), "r");
  if (pipe == nullptr) return {-1, {}};
  std::string out;
  char buf[4096];
  while (std::fgets(buf, sizeof buf, pipe) != nullptr) out += buf;
  const int status = pclose(pipe);
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, out};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("mplkit_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  fs::path write(const std::string& name, const std::string& body) {
    const fs::path p = dir_ / name;
    std::ofstream(p) << body;
    return p;
  }

  fs::path dir_;
};

}  // namespace

TEST_F(Cli, FitIgFromFile) {
  const auto f = write("xs.txt", "1\n2\n3\n");
  const CliRun r = run("fit-ig --input " + f.string());
  EXPECT_EQ(r.code, 0) << r.out;
  EXPECT_NE(r.out.find("lambda_hat_p   9\n"), std::string::npos) << r.out;
  EXPECT_NE(r.out.find("lambda_hat_mp  6\n"), std::string::npos) << r.out;
}

TEST_F(Cli, FitIgJsonMirrorsTheConsoleFields) {
  const CliRun r = run("fit-ig --data 1,2,3 --json");
  ASSERT_EQ(r.code, 0) << r.out;
  const auto j = nlohmann::json::parse(r.out);
  EXPECT_DOUBLE_EQ(j["lambda_hat_p"].get<double>(), 9.0);
  EXPECT_DOUBLE_EQ(j["lambda_hat_mp"].get<double>(), 6.0);
  EXPECT_DOUBLE_EQ(j["mu_hat"].get<double>(), 2.0);
  for (const char* key : {"s_stat", "loglik_p", "loglik_mp", "n"}) EXPECT_TRUE(j.contains(key)) << key;
}

TEST_F(Cli, FitIgInputErrors) {
  const auto zero = write("zero.txt", "1\n2\n0\n4\n");
  const CliRun bad = run("fit-ig --input " + zero.string());
  EXPECT_EQ(bad.code, 2);
  EXPECT_NE(bad.out.find(":3:"), std::string::npos) << bad.out;

  EXPECT_EQ(run("fit-ig --input " + (dir_ / "missing.txt").string()).code, 2);
  EXPECT_EQ(run("fit-ig --data 2,2,2").code, 3);
  EXPECT_EQ(run("fit-ig").code, 1);
}

TEST_F(Cli, SimulateThenFitBothCurves) {
  const auto data = dir_ / "gev.csv";
  const CliRun sim = run("simulate --model gev --n 20 --seed 3 --out " + data.string());
  ASSERT_EQ(sim.code, 0) << sim.out;
  EXPECT_NE(sim.out.find("seed 3"), std::string::npos);

  const CliRun p = run("fit-gev --input " + data.string() + " --kind p --json");
  const CliRun mp = run("fit-gev --input " + data.string() + " --kind mp --json");
  ASSERT_EQ(p.code, 0) << p.out;
  ASSERT_EQ(mp.code, 0) << mp.out;
  const auto jp = nlohmann::json::parse(p.out);
  const auto jm = nlohmann::json::parse(mp.out);
  EXPECT_TRUE(std::isfinite(jp["xi_hat"].get<double>()));
  EXPECT_TRUE(std::isfinite(jm["xi_hat"].get<double>()));
  ASSERT_TRUE(jm.contains("modification"));
  EXPECT_TRUE(std::isfinite(jm["modification"]["log_det_information"].get<double>()));
  EXPECT_TRUE(std::isfinite(jm["modification"]["log_abs_det_sample_space"].get<double>()));
}

TEST_F(Cli, FitGevHonoursTheBracket) {
  const auto data = dir_ / "gev.csv";
  ASSERT_EQ(run("simulate --n 30 --seed 8 --out " + data.string()).code, 0);
  const CliRun r = run("fit-gev --input " + data.string() + " --kind p --bracket 0.5:5 --json");
  ASSERT_EQ(r.code, 0) << r.out;
  const auto j = nlohmann::json::parse(r.out);
  EXPECT_DOUBLE_EQ(j["bracket"][0].get<double>(), 0.5);
  EXPECT_DOUBLE_EQ(j["bracket"][1].get<double>(), 5.0);
  EXPECT_EQ(run("fit-gev --input " + data.string() + " --bracket 5").code, 1);
}

TEST_F(Cli, FitGevInputErrors) {
  const auto bad_delta = write("d.csv", "y,delta,x1,x2\n1.0,1,1,0.1\n2.0,2,1,0.5\n1.5,1,1,0.7\n3.0,0,1,0.9\n");
  const CliRun r = run("fit-gev --input " + bad_delta.string());
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.out.find(":3:"), std::string::npos) << r.out;

  const auto rank = write("r.csv", "y,delta,x1,x2\n1.0,1,1,2\n2.0,1,1,2\n1.5,1,1,2\n3.0,0,1,2\n");
  EXPECT_EQ(run("fit-gev --input " + rank.string()).code, 2);

  const auto header = write("h.csv", "a,b,c\n1,1,1\n");
  EXPECT_EQ(run("fit-gev --input " + header.string()).code, 2);
}

TEST_F(Cli, FitGevInfeasibleBracket) {
  const auto data = dir_ / "gev.csv";
  ASSERT_EQ(run("simulate --n 20 --seed 1 --out " + data.string()).code, 0);
  // the whole bracket lies where the likelihood is unbounded for n = 20, p = 2
  EXPECT_EQ(run("fit-gev --input " + data.string() + " --bracket 9.5:12").code, 4);
}

TEST_F(Cli, ReplicateDeterministicAcrossWorkers) {
  const CliRun a = run("replicate --table 1 --reps 200 --seed 42 --workers 1 --out " + (dir_ / "a").string());
  const CliRun b = run("replicate --table 1 --reps 200 --seed 42 --workers 3 --out " + (dir_ / "b").string());
  ASSERT_EQ(a.code, 0) << a.out;
  ASSERT_EQ(b.code, 0) << b.out;
  EXPECT_NE(a.out.find("seed 42"), std::string::npos);
  const std::string csv = slurp(dir_ / "a" / "table1.csv");
  EXPECT_EQ(csv, slurp(dir_ / "b" / "table1.csv"));
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "n,estimator,mean,variance,bias,mse,rb_percent,n_converged,n_failed");
}

TEST_F(Cli, ReplicateSmokeTable2) {
  const CliRun r = run("replicate --table 2 --reps 3 --seed 5 --format md --out " + dir_.string());
  ASSERT_EQ(r.code, 0) << r.out;
  EXPECT_NE(r.out.find("failures "), std::string::npos);
  EXPECT_TRUE(fs::exists(dir_ / "table2.md"));
}

TEST_F(Cli, ReplicateUsageAndOutputErrors) {
  EXPECT_EQ(run("replicate --reps 0").code, 1);
  EXPECT_EQ(run("replicate --table 3").code, 1);
  EXPECT_EQ(run("replicate --format xml").code, 1);
  EXPECT_EQ(run("frobnicate").code, 1);
  const auto blocker = write("file", "x");
  EXPECT_EQ(run("replicate --reps 2 --seed 1 --out " + (blocker / "sub").string()).code, 2);
}

TEST_F(Cli, ConfigFilePrecedenceAndValidation) {
  const auto cfg = write("run.cfg", "# table 1 smoke run\nreps = 5\nseed = 77\nformat = md\n");
  const CliRun from_file = run("replicate --table 1 --config " + cfg.string() + " --out " + dir_.string());
  ASSERT_EQ(from_file.code, 0) << from_file.out;
  EXPECT_NE(from_file.out.find("seed 77"), std::string::npos);
  EXPECT_NE(from_file.out.find("5 replications"), std::string::npos);
  EXPECT_TRUE(fs::exists(dir_ / "table1.md"));

  const CliRun flag_wins = run("replicate --table 1 --config " + cfg.string() + " --seed 78 --out " + dir_.string());
  EXPECT_NE(flag_wins.out.find("seed 78"), std::string::npos);

  const auto unknown = write("bad.cfg", "reps = 5\ncolour = blue\n");
  const CliRun bad = run("replicate --config " + unknown.string());
  EXPECT_EQ(bad.code, 1);
  EXPECT_NE(bad.out.find("colour"), std::string::npos);
}

TEST_F(Cli, SeedFromEnvironmentOrGenerated) {
  const std::string args = "replicate --table 1 --reps 2 --out " + dir_.string();
  ::setenv("MPLKIT_SEED", "31", 1);
  const CliRun env = run(args);
  const CliRun flag = run(args + " --seed 32");
  ::unsetenv("MPLKIT_SEED");
  EXPECT_NE(env.out.find("seed 31\n"), std::string::npos) << env.out;
  EXPECT_NE(flag.out.find("seed 32\n"), std::string::npos) << flag.out;
  const CliRun generated = run(args);
  EXPECT_EQ(generated.code, 0);
  EXPECT_EQ(generated.out.rfind("seed ", 0), 0u) << generated.out;
}
