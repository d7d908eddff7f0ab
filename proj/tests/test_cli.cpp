#include <gtest/gtest.h>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <sys/wait.h>

#include <json.hpp>

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const fs::path kCli = BOXVERIFY_CLI;

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() / ("boxverify_cli_" + std::to_string(::getpid()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  int cli(const std::string& args) {
    const std::string cmd = kCli.string() + " " + args + " >" + (dir_ / "stdout").string() + " 2>" +
                            (dir_ / "stderr").string();
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  }
  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  fs::path dir_;
};

}  // namespace

TEST_F(CliTest, PerfectStrategyFourReachesFullCorloc) {
  ASSERT_EQ(cli("synth --benchmark separable --images 40 --seed 3 --out " + path("d.json")), 0);
  ASSERT_EQ(cli("run --dataset " + path("d.json") + " --class object --strategy IV --annotator perfect --seed 1 --out " +
                path("a")),
            0)
      << slurp(dir_ / "stderr");
  const json summary = json::parse(slurp(dir_ / "a/summary.json"));
  EXPECT_DOUBLE_EQ(summary["classes"]["object"]["corloc"].get<double>(), 1.0);
  EXPECT_TRUE(fs::exists(dir_ / "a/object/checkpoint.json"));
  EXPECT_EQ(slurp(dir_ / "a/curves.csv").rfind("label,iteration,verifications,seconds,corloc,fixed_fraction", 0), 0u);

  // Same seed, same bytes.
  ASSERT_EQ(cli("run --dataset " + path("d.json") + " --class object --strategy IV --annotator perfect --seed 1 --out " +
                path("b")),
            0);
  const std::string log = slurp(dir_ / "a/object/events.jsonl");
  EXPECT_FALSE(log.empty());
  EXPECT_EQ(log, slurp(dir_ / "b/object/events.jsonl"));
  EXPECT_EQ(slurp(dir_ / "a/summary.json"), slurp(dir_ / "b/summary.json"));

  // recover over the finished run reports the same event count.
  ASSERT_EQ(cli("recover --dataset " + path("d.json") + " --checkpoint " + path("a/object/checkpoint.json") +
                " --log " + path("a/object/events.jsonl")),
            0);
  const json rec = json::parse(slurp(dir_ / "stdout"));
  EXPECT_EQ(rec["events"].get<std::size_t>(), static_cast<std::size_t>(std::count(log.begin(), log.end(), '\n')));
  EXPECT_TRUE(rec["finished"].get<bool>());
}

TEST_F(CliTest, UsageErrors) {
  ASSERT_EQ(cli("synth --benchmark separable --images 5 --out " + path("d.json")), 0);
  EXPECT_EQ(cli("run --dataset " + path("d.json") + " --class object --strategy II --annotator perfect --question ypcmm --out " +
                path("o")),
            2);
  EXPECT_NE(slurp(dir_ / "stderr").find("ypcmm"), std::string::npos);
  EXPECT_NE(cli("run --dataset " + path("missing.json") + " --class object --out " + path("o")), 0);
  EXPECT_EQ(cli("run --dataset " + path("d.json") + " --out " + path("o")), 2);
  EXPECT_EQ(cli("run --dataset " + path("d.json") + " --class nope --out " + path("o")), 2);
  EXPECT_EQ(cli("run --dataset " + path("d.json") + " --class object --annotator perfect --noise-tau 0.1 --out " + path("o")), 2);
  EXPECT_NE(cli("run --dataset " + path("d.json") + " --class object --all --out " + path("o")), 0);
}
