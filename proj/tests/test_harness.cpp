#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "mmslab/harness.hpp"
#include "support.hpp"

using namespace mmslab;
using namespace mmslab::harness;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir()
{
  const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
  auto dir = fs::temp_directory_path() / (std::string("mmslab_") + info->test_suite_name() + "_" + info->name());
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p)
{
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string error_of(const std::string& toml)
{
  try {
    parse_scenario(toml, "test.toml");
  } catch (const Error& e) {
    return e.what();
  }
  return "";
}

SpaceSpec circle(std::size_t n)
{
  SpaceSpec s;
  s.kind = SpaceKind::circle;
  s.n = n;
  return s;
}

} // namespace

TEST(Seeds, DerivedStreamsDiffer)
{
  EXPECT_NE(derive_seed(1, "ot", 0), derive_seed(1, "ot", 1));
  EXPECT_NE(derive_seed(1, "ot", 0), derive_seed(1, "heat", 0));
  EXPECT_NE(derive_seed(1, "ot", 0), derive_seed(2, "ot", 0));
  EXPECT_EQ(derive_seed(7, "x", 3), derive_seed(7, "x", 3));
}

TEST(ParallelMap, OrderAndFirstErrorByIndex)
{
  const auto v = parallel_map(50, 4, [](std::size_t k) { return k * k; });
  for (std::size_t k = 0; k < v.size(); ++k) EXPECT_EQ(v[k], k * k);
  try {
    parallel_map(20, 4, [](std::size_t k) -> int {
      if (k == 7 || k == 13) fail("bad ", k);
      return 0;
    });
    FAIL() << "no error";
  } catch (const Error& e) {
    EXPECT_STREQ(e.what(), "bad 7");
  }
}

TEST(Scenario, ParsesKnobsAndDefaults)
{
  const auto sc = parse_scenario(R"toml(
name = "id"
experiment = "identify"
seed = 9
[space]
kind = "circle"
n = 64
[initial]
density = "1 + 0.5*cos(2*pi*x)"
[knobs]
ladder = [32, 64]
h = [4e-3, 2e-3, 1e-3]
t_end = 0.05
n_steps = 100
ede_samples = 10
reference_h = 1e-3
)toml");
  EXPECT_EQ(sc.name, "id");
  EXPECT_EQ(sc.experiment, Experiment::identify);
  EXPECT_EQ(sc.seed, 9u);
  EXPECT_EQ(sc.identify.ladder, (std::vector<std::size_t>{32, 64}));
  EXPECT_EQ(sc.identify.h_ladder.size(), 3u);
  EXPECT_EQ(sc.identify.base.kind, SpaceKind::circle);
  EXPECT_EQ(sc.identify.heat_steps, 100u);

  const auto d = parse_scenario("experiment = \"property_suites\"\n");
  EXPECT_EQ(d.name, "scenario");
  EXPECT_FALSE(d.seed.has_value());
  EXPECT_EQ(d.property.suites.size(), 4u);
}

TEST(Scenario, ErrorsNameTheKey)
{
  EXPECT_NE(error_of("experiment = \"identify\"\n[knobs]\nt_end = \"soon\"\n").find("knobs.t_end"), std::string::npos);
  EXPECT_NE(error_of("experiment = \"identify\"\n[knobs]\nt_end = -1.0\n").find("knobs.t_end"), std::string::npos);
  EXPECT_NE(error_of("experiment = \"identify\"\n[knobs]\nladder = [64, 32]\n").find("knobs.ladder"), std::string::npos);
  EXPECT_NE(error_of("experiment = \"identify\"\n[knobs]\nreference_n = 48\n").find("knobs.reference_n"), std::string::npos);
  EXPECT_NE(error_of("experiment = \"brenier\"\n[knobs]\nladdr = [1]\n").find("knobs.laddr"), std::string::npos);
  EXPECT_NE(error_of("experiment = \"sideways\"\n").find("experiment"), std::string::npos);
  EXPECT_NE(error_of("name = \"x\"\n").find("experiment"), std::string::npos);
  EXPECT_NE(error_of("experiment = \"brenier\"\n[space]\nkind = \"sphere\"\n").find("space.kind"), std::string::npos);
  EXPECT_NE(error_of("experiment = \"gamma_monotone\"\n[initial]\nfield = \"1 + \"\n").find("expression"), std::string::npos);
  EXPECT_NE(error_of("experiment = \"property_suites\"\n[knobs]\nsuites = [\"ot\", \"nope\"]\n").find("knobs.suites"),
            std::string::npos);
}

TEST(Scenario, MalformedTomlReportsPosition)
{
  const auto msg = error_of("experiment = \"identify\"\n[knobs\nt_end = 1\n");
  EXPECT_NE(msg.find("test.toml:2:"), std::string::npos) << msg;
}

TEST(Fourier, SingleModesMatchClosedForm)
{
  const double t = 0.05, pi = mmslab::testing::kPi;
  const auto c = build_space(circle(32));
  const auto f0 = evaluate_on(Expression("1 + 0.5*cos(2*pi*x)"), c.labels);
  const auto ft = *fourier_heat(c, f0, t);
  for (std::size_t i = 0; i < c.size(); ++i)
    EXPECT_NEAR(ft[i], 1.0 + 0.5 * std::exp(-4 * pi * pi * t) * std::cos(2 * pi * c.labels[i][0]), 1e-13);

  SpaceSpec ts;
  ts.kind = SpaceKind::torus2d;
  ts.n = 8;
  const auto tor = build_space(ts);
  const auto g0 = evaluate_on(Expression("sin(2*pi*x)*cos(4*pi*y)"), tor.labels);
  const auto gt = *fourier_heat(tor, g0, t);
  for (std::size_t i = 0; i < tor.size(); ++i) EXPECT_NEAR(gt[i], std::exp(-20 * pi * pi * t) * g0[i], 1e-13);

  SpaceSpec iv;
  iv.kind = SpaceKind::interval;
  iv.n = 4;
  EXPECT_FALSE(fourier_heat(build_space(iv), std::vector<double>(4, 1.0), t).has_value());
}

TEST(LatticeOracle, TwoPointSplit)
{
  Matrix cost(2, 2);
  cost(0, 1) = cost(1, 0) = 3.0;
  EXPECT_DOUBLE_EQ(harness::detail::lattice_transport_oracle(cost, {4, 0}, {2, 2}, 4), 1.5);
  EXPECT_DOUBLE_EQ(harness::detail::lattice_transport_oracle(cost, {1, 3}, {1, 3}, 4), 0.0);
}

TEST(Report, ChecksCarryTolerancesAndVerdicts)
{
  Report r;
  r.check_le("a", 1.0, 2.0);
  r.check_ge("b", 1.0, 2.0);
  r.check_decreasing("c", {3.0, 2.0, 2.0}, true);
  r.check_decreasing("d", {3.0, 2.0, 2.0}, false);
  r.check_decreasing("e", {1e-3, 0.0, 0.0}, true, {}, 1e-12);
  EXPECT_TRUE(r.find("a")->passed);
  EXPECT_FALSE(r.find("b")->passed);
  EXPECT_FALSE(r.find("c")->passed);
  EXPECT_TRUE(r.find("d")->passed);
  EXPECT_TRUE(r.find("e")->passed);
  EXPECT_FALSE(r.passed());
  const auto j = r.to_json();
  EXPECT_EQ(j["checks"][0]["tolerance"].get<double>(), 2.0);
  EXPECT_FALSE(j["passed"].get<bool>());
  r.add_series("s", 1.0, 0.5);
  EXPECT_EQ(r.series_csv(), "x,y,series\n1,0.5,s\n");
}

TEST(Experiments, HopfLaxSuiteHasNoViolations)
{
  HopfLaxSuiteParams p;
  p.trials = 30;
  EXPECT_TRUE(hopflax_suite(p, 11).passed());
}

TEST(Experiments, IdentifyFromReferenceMeasureIsStationary)
{
  IdentifyParams p;
  p.base = circle(16);
  p.ladder = {16, 32};
  p.h_ladder = {2e-3, 1e-3};
  p.reference_n = 16;
  p.reference_h = 1e-3;
  p.density = "1";
  p.t_end = 0.01;
  p.heat_steps = 10;
  p.ede_samples = 5;
  const auto r = experiment_identify(p, 1);
  for (const auto& cell : r.metrics["jko_vs_heat"]) {
    EXPECT_LE(cell["tv"].get<double>(), 1e-12);
    EXPECT_LE(cell["w2"].get<double>(), 1e-6);
  }
  for (const auto& f : r.metrics["heat_vs_fourier"]) EXPECT_LE(f["linf"].get<double>(), 1e-12);
  EXPECT_DOUBLE_EQ(r.metrics["ede"]["entropy_drop"].get<double>(), 0.0);
  EXPECT_TRUE(r.find("jko_tv_decreasing_h_and_dx_halved")->passed);
}

TEST(Experiments, BrenierWithEqualMeasures)
{
  BrenierParams p;
  p.base = circle(16);
  p.ladder = {16, 32};
  p.density_nu = p.density_mu;
  p.gap_n = 50;
  const auto r = experiment_brenier(p, 1);
  // Any phi with phi(y) - phi(x) <= d^2/2 is optimal here, so the solver's
  // potential may climb up to half a cell per edge.
  for (const auto& rung : r.metrics["ladder"]) {
    EXPECT_LE(rung["w2_squared"].get<double>(), 1e-15);
    EXPECT_LE(rung["rms"].get<double>(), 0.5 * rung["dx"].get<double>() + 1e-12);
  }
  EXPECT_LE(r.find("strict_gap_slope_energy")->value, 1e-12);

  // The constant potential certifies the identity plan with zero RMS.
  const auto s = build_space(circle(16));
  const auto mu = measure_from_expression(s, p.density_mu);
  W2Result w;
  w.plan = Coupling::identity(mu.weights);
  w.cert.phi.assign(s.size(), 0.0);
  w.cert.psi.assign(s.size(), 0.0);
  const auto a = audit_certificate(half_squared_cost(s), w);
  EXPECT_EQ(a.max_infeasibility, 0.0);
  EXPECT_EQ(a.max_slackness, 0.0);
  for (double v : local_slope(s, w.cert.phi, SlopeKind::ascending)) EXPECT_EQ(v, 0.0);
}

TEST(Experiments, GammaTrivialCasesGiveZeroErrors)
{
  GammaParams p;
  p.space = circle(32);
  p.bump = "0";
  auto r = experiment_gamma_monotone(p, 1);
  for (const auto& row : r.metrics["rungs"]) EXPECT_EQ(row["l2_error"].get<double>(), 0.0);

  p.bump = "exp(-40*(x-0.5)^2)";
  p.field = "2";
  r = experiment_gamma_monotone(p, 1);
  for (const auto& row : r.metrics["rungs"]) EXPECT_LE(row["l2_error"].get<double>(), 1e-12);

  p.field = "1 + 0.5*cos(2*pi*x)";
  r = experiment_gamma_monotone(p, 1);
  EXPECT_TRUE(r.find("error_nonincreasing")->passed);
}

TEST(RunScenario, WritesDeterministicFilesForAnyThreadCount)
{
  const auto dir = scratch_dir();
  const auto sc = parse_scenario(R"(
name = "props"
experiment = "property_suites"
seed = 5
[knobs]
suites = ["ot", "heat", "convexity"]
ot_instances = 20
triangle_triples = 10
oracle_instances = 4
heat_instances = 10
convexity_trials = 20
)");
  RunOptions a;
  a.out_dir = (dir / "a").string();
  a.threads = 1;
  RunOptions b = a;
  b.out_dir = (dir / "b").string();
  b.threads = 3;
  const auto ra = run_scenario(sc, a);
  run_scenario(sc, b);
  EXPECT_TRUE(ra.passed());
  const auto ja = slurp(dir / "a" / "props" / "report.json");
  EXPECT_FALSE(ja.empty());
  EXPECT_EQ(ja, slurp(dir / "b" / "props" / "report.json"));
  EXPECT_EQ(slurp(dir / "a" / "props" / "series.csv"), slurp(dir / "b" / "props" / "series.csv"));
  EXPECT_NE(ja.find("\"seed\": 5"), std::string::npos);

  RunOptions c = a;
  c.out_dir = (dir / "c").string();
  c.seed = 6;
  run_scenario(sc, c);
  EXPECT_NE(ja, slurp(dir / "c" / "props" / "report.json"));
}
