#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <gtest/gtest.h>
#include <sys/wait.h>

namespace fs = std::filesystem;

namespace {

int run(const std::string& args) {
  const std::string cmd = std::string(RETDEN_CLI) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

std::vector<std::vector<std::string>> read_csv(const fs::path& p) {
  std::vector<std::vector<std::string>> rows;
  std::istringstream in(slurp(p));
  for (std::string line; std::getline(in, line);) {
    std::vector<std::string> f;
    std::istringstream ls(line);
    for (std::string part; std::getline(ls, part, ',');) f.push_back(part);
    rows.push_back(f);
  }
  return rows;
}

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("retden_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }
  fs::path dir_;
};

const char* kSmall = "--trials 2 --steps 3000 --workers 2";

}  // namespace

TEST_F(Cli, MissingConfigFailsWithoutOutputs) {
  const auto out = dir_ / "run";
  EXPECT_NE(run("run --config " + (dir_ / "missing.ini").string() + " --out " + out.string()), 0);
  EXPECT_FALSE(fs::exists(out));
}

TEST_F(Cli, UnknownCommandFails) { EXPECT_NE(run("frobnicate"), 0); }

TEST_F(Cli, RunWritesResultRows) {
  const auto out = dir_ / "run";
  ASSERT_EQ(run("run --config table2a-gaussian-q01 " + std::string(kSmall) + " --out " + out.string()), 0);
  for (const char* f : {"results.csv", "trials.csv", "paths.csv", "manifest.ini"}) EXPECT_TRUE(fs::exists(out / f));
  const auto rows = read_csv(out / "results.csv");
  ASSERT_EQ(rows.size(), 6u);
  const std::vector<std::string> stats{"mean", "q0.01", "q0.1", "q0.3", "q0.5"};
  for (std::size_t i = 0; i < stats.size(); ++i) {
    EXPECT_EQ(rows[i + 1][3], stats[i]);
    EXPECT_EQ(rows[i + 1][6], "2");
  }
}

TEST_F(Cli, SeedChangeKeepsSchema) {
  const auto a = dir_ / "a", b = dir_ / "b";
  ASSERT_EQ(run("run --config table2a-qlearning " + std::string(kSmall) + " --seed 1 --out " + a.string()), 0);
  ASSERT_EQ(run("run --config table2a-qlearning " + std::string(kSmall) + " --seed 2 --out " + b.string()), 0);
  const auto ra = read_csv(a / "results.csv"), rb = read_csv(b / "results.csv");
  ASSERT_EQ(ra.size(), rb.size());
  for (std::size_t i = 0; i < ra.size(); ++i) {
    ASSERT_EQ(ra[i].size(), rb[i].size());
    for (std::size_t k : {0u, 1u, 2u, 3u, 6u}) EXPECT_EQ(ra[i][k], rb[i][k]);
  }
  EXPECT_NE(slurp(a / "trials.csv"), slurp(b / "trials.csv"));
}

TEST_F(Cli, ManifestReplayReproducesResults) {
  const auto a = dir_ / "a", b = dir_ / "b";
  ASSERT_EQ(run("run --config table2b-laplace-q01 " + std::string(kSmall) + " --seed 17 --out " + a.string()), 0);
  ASSERT_EQ(run("run --config " + (a / "manifest.ini").string() + " --workers 1 --out " + b.string()), 0);
  EXPECT_EQ(slurp(a / "results.csv"), slurp(b / "results.csv"));
  EXPECT_EQ(slurp(a / "trials.csv"), slurp(b / "trials.csv"));
}

TEST_F(Cli, ReportMatchesResults) {
  const auto a = dir_ / "a";
  ASSERT_EQ(run("run --config table2a-qhat " + std::string(kSmall) + " --out " + a.string()), 0);
  const auto report = dir_ / "report.csv";
  ASSERT_EQ(run("report " + a.string() + " --out " + report.string()), 0);
  EXPECT_EQ(slurp(report), slurp(a / "results.csv"));
}

TEST_F(Cli, GaussianCurveLocationEqualsDelta) {
  const auto out = dir_ / "curve.csv";
  ASSERT_EQ(run("ng-curve --model gaussian --discount 0.9 --out " + out.string()), 0);
  const auto rows = read_csv(out);
  ASSERT_EQ(rows[0], (std::vector<std::string>{"delta", "mu", "sigma"}));
  ASSERT_EQ(rows.size(), 62u);
  for (std::size_t i = 1; i < rows.size(); ++i)
    EXPECT_NEAR(std::stod(rows[i][1]), std::stod(rows[i][0]), 1e-12);
}

TEST_F(Cli, LaplaceCurveIsBounded) {
  const auto out = dir_ / "curve.csv";
  ASSERT_EQ(run("ng-curve --model laplace --params 0 1 --target 0 1 --discount 0.95 --delta-min -50 --delta-max 50 "
                "--points 101 --out " + out.string()), 0);
  const auto rows = read_csv(out);
  ASSERT_EQ(rows.size(), 102u);
  // location direction never exceeds b
  for (std::size_t i = 1; i < rows.size(); ++i) EXPECT_LE(std::abs(std::stod(rows[i][1])), 1.0);
  EXPECT_GT(std::abs(std::stod(rows[1][1])), 0.99);
}

TEST_F(Cli, OracleCheckPassesAndDetectsFault) {
  EXPECT_EQ(run("oracle-check --cases 20"), 0);
  const auto log = dir_ / "fault.txt";
  const std::string cmd = std::string(RETDEN_CLI) + " oracle-check --cases 20 --inject-fault laplace >" +
                          log.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  ASSERT_TRUE(WIFEXITED(status));
  EXPECT_NE(WEXITSTATUS(status), 0);
  const auto text = slurp(log);
  EXPECT_NE(text.find("laplace"), std::string::npos);
  EXPECT_NE(text.find("FAIL"), std::string::npos);
}
