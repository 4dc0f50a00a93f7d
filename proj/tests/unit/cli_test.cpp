#include <gtest/gtest.h>

#include <sys/wait.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "cvalue/cli.hpp"

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

const fs::path kFixtures = CVALUE_FIXTURES_DIR;

struct Outcome {
  int code;
  std::string out;
  std::string err;
};

Outcome run_cli(std::vector<std::string> args) {
  args.insert(args.begin(), "cvalue");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = cvalue::cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

int run_binary(const std::string& args, const fs::path& log) {
  const std::string cmd = std::string(CVALUE_CLI_PATH) + " " + args + " > " + log.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           (std::string("cvalue_cli_") + ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  fs::path dir_;
};

TEST_F(CliTest, BoundOneFixtureMatchesLibrary) {
  const auto r = run_cli({"compare", "--config", (kFixtures / "bound1/config.json").string(), "--out", path("o.json")});
  ASSERT_EQ(r.code, 0) << r.err;
  const json result = json::parse(slurp(path("o.json")));
  const cvalue::Vec y = cvalue::read_vector_csv((kFixtures / "bound1/y.csv").string());
  const auto lib = cvalue::c_value(cvalue::subspace_bound_evaluator(cvalue::SubspaceShrinkageSpec::grand_mean(y, 1.0)));
  EXPECT_NEAR(result["c_value"].get<double>(), lib.c_value, 1e-6);
  EXPECT_EQ(result["method"], "exact_subspace");
  EXPECT_EQ(result["seed"], 11);
  for (const char* key : {"c_value", "bound_curve", "selected_at_alpha", "estimator_summaries", "warnings"}) {
    EXPECT_TRUE(result.contains(key)) << key;
  }
  const std::string expected = lib.c_value > 0.95 ? "alternative" : "default";
  EXPECT_EQ(result["selected_at_alpha"], expected);
}

TEST_F(CliTest, FlagsOverrideConfig) {
  const auto r = run_cli({"compare", "--config", (kFixtures / "bound1/config.json").string(), "--alpha", "0.25",
                          "--seed", "99"});
  ASSERT_EQ(r.code, 0) << r.err;
  const json result = json::parse(r.out);
  EXPECT_EQ(result["alpha"].get<double>(), 0.25);
  EXPECT_EQ(result["seed"], 99);
}

TEST_F(CliTest, IdenticalEstimatorsGiveZero) {
  const auto r = run_cli({"compare", "--config", (kFixtures / "bound1/same.json").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const json result = json::parse(r.out);
  EXPECT_EQ(result["c_value"].get<double>(), 0.0);
  EXPECT_EQ(result["selected_at_alpha"], "default");
}

TEST_F(CliTest, MissingCovarianceFileIsUserError) {
  const auto r = run_cli({"compare", "--config", (kFixtures / "bound1/missing_sigma.json").string()});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("does_not_exist.csv"), std::string::npos) << r.err;
}

TEST_F(CliTest, DimensionMismatchNamesFile) {
  std::ofstream(path("y.csv")) << "value\n1\n2\n3\n";
  std::ofstream(path("s.csv")) << "1,0\n0,1\n";
  std::ofstream(path("c.json")) << R"({"model": {"y": "y.csv", "sigma": "s.csv"},
    "default": {"kind": "mle"}, "alternative": {"kind": "lindley_smith", "tau": 1}})";
  const auto r = run_cli({"compare", "--config", path("c.json")});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("s.csv"), std::string::npos) << r.err;
}

TEST_F(CliTest, BadCellNamesFileAndRow) {
  std::ofstream(path("y.csv")) << "value\n1\n2\nx\n";
  std::ofstream(path("c.json")) << R"({"model": {"y": "y.csv"},
    "default": {"kind": "mle"}, "alternative": {"kind": "lindley_smith", "tau": 1}})";
  const auto r = run_cli({"compare", "--config", path("c.json")});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("y.csv: row 4"), std::string::npos) << r.err;
}

TEST_F(CliTest, SeparableLogisticIsNumericalFailure) {
  std::ofstream(path("x.csv")) << "1\n2\n-1\n-2\n";
  std::ofstream(path("l.csv")) << "value\n1\n1\n-1\n-1\n";
  std::ofstream(path("c.json")) << R"({"model": {"type": "logistic", "x": "x.csv", "labels": "l.csv"},
    "default": {"kind": "logistic_mle"}, "alternative": {"kind": "logistic_map"}})";
  EXPECT_EQ(run_cli({"compare", "--config", path("c.json")}).code, 3);
}

TEST_F(CliTest, FayHerriotWithBerryEsseen) {
  const auto r = run_cli({"compare", "--config", (kFixtures / "fay_herriot/config.json").string(), "--berry-esseen"});
  ASSERT_EQ(r.code, 0) << r.err;
  const json result = json::parse(r.out);
  EXPECT_EQ(result["method"], "affine");
  EXPECT_TRUE(result.contains("berry_esseen"));
  EXPECT_GT(result["estimator_summaries"]["alternative"]["fit"]["tau"].get<double>(), 0.0);
  const double c = result["c_value"].get<double>();
  EXPECT_GE(c, 0.0);
  EXPECT_LE(c, 1.0);
}

TEST_F(CliTest, LogisticFixture) {
  const auto r = run_cli({"compare", "--config", (kFixtures / "logistic/config.json").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const json result = json::parse(r.out);
  EXPECT_EQ(result["method"], "logistic_laplace");
  EXPECT_EQ(result["estimator_summaries"]["alternative"]["estimate"].size(), 3u);
}

TEST_F(CliTest, UsageErrors) {
  EXPECT_EQ(run_cli({}).code, 2);
  EXPECT_EQ(run_cli({"compare"}).code, 2);
  EXPECT_EQ(run_cli({"--help"}).code, 0);
  EXPECT_EQ(run_cli({"compare", "--config", path("nope.json")}).code, 2);
  const auto r = run_cli({"simulate", "bogus"});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("calibration"), std::string::npos) << r.err;
  EXPECT_EQ(run_cli({"simulate", "calibration", "--reps", "0", "--out", path("x")}).code, 2);
}

TEST_F(CliTest, UnknownExperimentBinaryExitCode) {
  EXPECT_EQ(run_binary("simulate bogus", dir_ / "log.txt"), 2);
  EXPECT_NE(slurp(dir_ / "log.txt").find("pitfall"), std::string::npos);
}

TEST_F(CliTest, PitfallRunsAreIdentical) {
  ASSERT_EQ(run_binary("simulate pitfall --seed 7 --out " + path("a"), dir_ / "a.log"), 0) << slurp(dir_ / "a.log");
  ASSERT_EQ(run_binary("simulate pitfall --seed 7 --out " + path("b"), dir_ / "b.log"), 0);
  EXPECT_EQ(slurp(path("a.csv")), slurp(path("b.csv")));
  EXPECT_EQ(slurp(path("a.json")), slurp(path("b.json")));
  EXPECT_EQ(json::parse(slurp(path("a.json")))["config"]["seed"], 7);
}

TEST_F(CliTest, CalibrationRowCount) {
  ASSERT_EQ(run_binary("simulate calibration --n 50 --tau 1 --reps 500 --out " + path("cal"), dir_ / "log.txt"), 0)
      << slurp(dir_ / "log.txt");
  std::ifstream in(path("cal.csv"));
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, cvalue::kRecordCsvHeader);
  std::size_t rows = 0;
  while (std::getline(in, line)) rows += !line.empty();
  EXPECT_EQ(rows, 500u * 5u * 4u);
  EXPECT_NE(slurp(dir_ / "log.txt").find("coverage grid="), std::string::npos);
}

TEST_F(CliTest, SimulateConfigFileAndWorkers) {
  std::ofstream(path("sim.json")) << R"({"seed": 5, "simulation": {"replicates": 20, "grid": [0, 1.7],
    "alphas": [0.5, 0.95]}})";
  const auto a = run_cli({"simulate", "selection", "--config", path("sim.json"), "--out", path("one")});
  ASSERT_EQ(a.code, 0) << a.err;
  const auto b =
      run_cli({"simulate", "selection", "--config", path("sim.json"), "--workers", "4", "--out", path("four")});
  ASSERT_EQ(b.code, 0) << b.err;
  for (const char* ext : {".csv", "_sure.csv", ".json"}) {
    EXPECT_EQ(slurp(path(std::string("one") + ext)), slurp(path(std::string("four") + ext))) << ext;
  }
  const json summary = json::parse(slurp(path("one.json")));
  EXPECT_EQ(summary["config"]["seed"], 5);
  EXPECT_EQ(summary["records"], 20 * 2 * 2);
}

}  // namespace
