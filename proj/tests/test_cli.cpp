#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "mmslab/cli.hpp"

using namespace mmslab;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code;
  std::string out, err;
};

Run run_cli(std::vector<std::string> args)
{
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

fs::path scratch_dir()
{
  const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
  auto dir = fs::temp_directory_path() / (std::string("mmslab_cli_") + info->name());
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

void write(const fs::path& p, const std::string& text)
{
  std::ofstream(p) << text;
}

} // namespace

TEST(Cli, UsageErrorsExitTwo)
{
  EXPECT_EQ(run_cli({}).code, 2);
  EXPECT_EQ(run_cli({"frobnicate"}).code, 2);
  EXPECT_EQ(run_cli({"ot", "solve", "--space", "/nonexistent.json", "--mu", "a", "--nu", "b"}).code, 2);
  EXPECT_EQ(run_cli({"--help"}).code, 0);
}

TEST(Cli, SpacePipeline)
{
  const auto dir = scratch_dir();
  const auto d = dir.string();
  auto r = run_cli({"--out-dir", d, "space", "build", "--kind", "circle", "--n", "16", "--out", "s.json", "--form-out", "f.json"});
  ASSERT_EQ(r.code, 0) << r.err;
  ASSERT_TRUE(fs::exists(dir / "s.json"));
  const auto s = (dir / "s.json").string();

  EXPECT_EQ(run_cli({"space", "validate", s}).code, 0);
  EXPECT_EQ(run_cli({"hopflax", "--space", s, "--field", "expr:sin(2*pi*x)", "--times", "0.1,0.4"}).code, 0);
  // A negative tolerance turns every pair into a violation.
  EXPECT_EQ(run_cli({"hopflax", "--space", s, "--field", "expr:sin(2*pi*x)", "--times", "0.1", "--tol", "-1"}).code, 1);

  r = run_cli({"ot", "solve", "--space", s, "--mu", "expr:1 + 0.5*cos(2*pi*x)", "--nu", "expr:1"});
  EXPECT_EQ(r.code, 0) << r.err;
  const auto j = io::json::parse(r.out);
  EXPECT_GT(j["w2"].get<double>(), 0.0);

  EXPECT_EQ(run_cli({"jko", "run", "--space", s, "--mu0", "expr:1 + 0.5*cos(2*pi*x)", "--step", "0.01", "--t", "0.02"}).code, 0);
  EXPECT_EQ(run_cli({"--seed", "4", "entropy", "report", "--space", s, "--mu", "expr:1 + 0.5*cos(2*pi*x)", "--samples", "8"}).code, 0);

  write(dir / "f0.json", "[1, 2, 1, 2, 1, 2, 1, 2, 1, 2, 1, 2, 1, 2, 1, 2]");
  EXPECT_EQ(run_cli({"heat", "run", "--form", (dir / "f.json").string(), "--f0", (dir / "f0.json").string(), "--t", "0.01",
                 "--steps", "5"})
                .code,
            0);

  write(dir / "bad.json", R"({"measure": [1, -1], "edges": [{"i": 0, "j": 1, "w": 1}]})");
  EXPECT_EQ(run_cli({"space", "validate", (dir / "bad.json").string()}).code, 1);
}

TEST(Cli, RunScenariosExitCodeFollowsChecks)
{
  const auto dir = scratch_dir();
  write(dir / "good.toml", R"(
name = "good"
experiment = "gamma_monotone"
[space]
kind = "circle"
n = 32
)");
  write(dir / "strict.toml", R"(
name = "strict"
experiment = "gamma_monotone"
[space]
kind = "circle"
n = 32
[knobs]
final_tol = 1e-12
)");
  write(dir / "broken.toml", "experiment = \"gamma_monotone\"\n[knobs]\nrungs = [4, 2]\n");
  const auto out = (dir / "out").string();
  auto r = run_cli({"--out-dir", out, "--threads", "2", "run", (dir / "good.toml").string()});
  EXPECT_EQ(r.code, 0) << r.out << r.err;
  EXPECT_TRUE(fs::exists(dir / "out" / "good" / "report.json"));
  EXPECT_TRUE(fs::exists(dir / "out" / "good" / "series.csv"));

  r = run_cli({"--out-dir", out, "run", (dir / "good.toml").string(), (dir / "strict.toml").string()});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.out.find("FAIL strict"), std::string::npos);

  r = run_cli({"run", (dir / "broken.toml").string()});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("knobs.rungs"), std::string::npos);
}
