#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <sys/wait.h>

namespace fs = std::filesystem;

namespace {

const fs::path kRoot = fs::temp_directory_path() / "bvsgcr_cli_test";

int run(const std::string& args) {
  const std::string cmd = std::string(BVSGCR_CLI_PATH) + " " + args + " > /dev/null 2>&1";
  const int rc = std::system(cmd.c_str());
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

class Cli : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    fs::remove_all(kRoot);
    fs::create_directories(kRoot);
  }
};

}  // namespace

TEST_F(Cli, SimulateFitReportPipeline) {
  const fs::path sim = kRoot / "sim";
  ASSERT_EQ(run("simulate --scenario III --replicates 2 --seed 7 --out " + sim.string()), 0);
  for (const char* f : {"Y.csv", "X.csv", "truth.json", "config.json"}) EXPECT_TRUE(fs::exists(sim / "rep_000" / f)) << f;
  EXPECT_TRUE(fs::exists(sim / "rep_001" / "Y.csv"));
  const fs::path rep = sim / "rep_000";
  ASSERT_EQ(run("fit --data " + rep.string() + " --config " + (rep / "config.json").string() + " --out " +
                (rep / "fit").string() + " --iters 400 --burnin 200 --thin 10 --seed 3"),
            0);
  for (const char* f : {"gamma.csv", "beta.csv", "theta.csv", "graph.csv", "R.csv", "manifest.json"})
    EXPECT_TRUE(fs::exists(rep / "fit" / f)) << f;
  // 20 stored draws plus a header
  const std::string g = slurp(rep / "fit" / "gamma.csv");
  EXPECT_EQ(std::count(g.begin(), g.end(), '\n'), 21);
  ASSERT_EQ(run("report --trace " + (rep / "fit").string() + " --truth " + (rep / "truth.json").string() + " --out " +
                (rep / "report").string()),
            0);
  const std::string r = slurp(rep / "report" / "report.json");
  EXPECT_NE(r.find("\"auc\""), std::string::npos);
  EXPECT_NE(r.find("\"eppi\""), std::string::npos);
  EXPECT_TRUE(fs::exists(rep / "report" / "mppi.csv"));
}

TEST_F(Cli, ReportWithoutTruthHasNoRoc) {
  const fs::path sim = kRoot / "notruth";
  ASSERT_EQ(run("simulate --scenario I --replicates 1 --seed 2 --out " + sim.string()), 0);
  const fs::path rep = sim / "rep_000";
  ASSERT_EQ(run("fit --data " + rep.string() + " --config " + (rep / "config.json").string() + " --out " +
                (rep / "fit").string() + " --iters 100 --burnin 50 --thin 5"),
            0);
  ASSERT_EQ(run("report --trace " + (rep / "fit").string() + " --out " + (rep / "report").string()), 0);
  const std::string r = slurp(rep / "report" / "report.json");
  EXPECT_EQ(r.find("\"auc\""), std::string::npos);
  EXPECT_NE(r.find("\"mppi\""), std::string::npos);
}

TEST_F(Cli, SimulateIsByteDeterministic) {
  const fs::path a = kRoot / "det_a", b = kRoot / "det_b";
  ASSERT_EQ(run("simulate --scenario I --replicates 2 --seed 11 --out " + a.string()), 0);
  ASSERT_EQ(run("simulate --scenario I --replicates 2 --seed 11 --out " + b.string()), 0);
  for (const char* f : {"rep_000/Y.csv", "rep_001/X.csv", "rep_001/truth.json"})
    EXPECT_EQ(slurp(a / f), slurp(b / f)) << f;
}

TEST_F(Cli, SameSeedChainsGiveIdenticalReports) {
  const fs::path sim = kRoot / "twin";
  ASSERT_EQ(run("simulate --scenario I --replicates 1 --seed 5 --out " + sim.string()), 0);
  const fs::path rep = sim / "rep_000";
  for (const char* name : {"f1", "f2"}) {
    ASSERT_EQ(run("fit --data " + rep.string() + " --config " + (rep / "config.json").string() + " --out " +
                  (rep / name).string() + " --iters 200 --burnin 100 --thin 5 --seed 9"),
              0);
    ASSERT_EQ(run("report --trace " + (rep / name).string() + " --truth " + (rep / "truth.json").string() +
                  " --out " + (rep / (std::string(name) + "_r")).string()),
              0);
  }
  EXPECT_EQ(slurp(rep / "f1_r" / "mppi.csv"), slurp(rep / "f2_r" / "mppi.csv"));
  EXPECT_EQ(slurp(rep / "f1" / "beta.csv"), slurp(rep / "f2" / "beta.csv"));
}

TEST_F(Cli, ExitCodes) {
  EXPECT_EQ(run("simulate --scenario I --replicates 0 --out " + (kRoot / "zero").string()), 2);
  EXPECT_EQ(run("simulate --scenario VII --out " + (kRoot / "bad").string()), 2);
  EXPECT_EQ(run("frobnicate"), 2);
  // missing response file
  const fs::path empty = kRoot / "empty";
  fs::create_directories(empty);
  const fs::path sim = kRoot / "cfgsrc";
  ASSERT_EQ(run("simulate --scenario I --replicates 1 --out " + sim.string()), 0);
  EXPECT_EQ(run("fit --data " + empty.string() + " --config " + (sim / "rep_000" / "config.json").string() +
                " --out " + (kRoot / "nofit").string()),
            3);
  // unknown config field
  std::ofstream(kRoot / "bad.json") << R"({"responses": [], "bogus": 1})";
  EXPECT_EQ(run("fit --data " + (sim / "rep_000").string() + " --config " + (kRoot / "bad.json").string() +
                " --out " + (kRoot / "nofit2").string()),
            2);
}
