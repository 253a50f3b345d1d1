#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <random>

#include "mmslab/space.hpp"
#include "support.hpp"

using namespace mmslab;
using namespace mmslab::testing;

namespace {

// Bellman-Ford relaxation, deliberately unrelated to the library's closure code.
Matrix bellman_ford_all_pairs(const std::vector<WeightedEdge>& edges, std::size_t n)
{
  Matrix d(n, n, std::numeric_limits<double>::infinity());
  for (std::size_t s = 0; s < n; ++s) {
    d(s, s) = 0.0;
    for (std::size_t round = 0; round < n; ++round)
      for (const auto& e : edges) {
        d(s, e.j) = std::min(d(s, e.j), d(s, e.i) + e.w);
        d(s, e.i) = std::min(d(s, e.i), d(s, e.j) + e.w);
      }
  }
  return d;
}

} // namespace

TEST(BuildSpace, IntervalTwoPoints)
{
  const auto s = interval(2);
  EXPECT_DOUBLE_EQ(s.dist(0, 1), 1.0);
  EXPECT_DOUBLE_EQ(s.measure[0], 0.5);
  EXPECT_DOUBLE_EQ(s.measure[1], 0.5);
}

TEST(BuildSpace, CircleOppositePoints)
{
  const auto s = circle(4);
  EXPECT_DOUBLE_EQ(s.dist(0, 2), 0.5);
  EXPECT_DOUBLE_EQ(s.dist(1, 3), 0.5);
  EXPECT_DOUBLE_EQ(s.dist(0, 3), 0.25);
}

TEST(BuildSpace, PointCloudShortestPath)
{
  SpaceSpec spec;
  spec.kind = SpaceKind::point_cloud;
  spec.points = {{0, 0}, {1, 0}, {2, 0}};
  spec.connect_radius = 1.1;
  const auto s = build_space(spec);
  const auto oracle = bellman_ford_all_pairs({{0, 1, 1.0}, {1, 2, 1.0}}, 3);
  EXPECT_DOUBLE_EQ(s.dist(0, 2), 2.0);
  EXPECT_EQ(s.dist, oracle);
}

TEST(BuildSpace, DisconnectedPointCloudNamesComponents)
{
  SpaceSpec spec;
  spec.kind = SpaceKind::point_cloud;
  spec.points = {{0, 0}, {1, 0}, {5, 0}};
  spec.connect_radius = 1.1;
  try {
    build_space(spec);
    FAIL() << "expected an error";
  } catch (const Error& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("{0,1}"), std::string::npos) << msg;
    EXPECT_NE(msg.find("{2}"), std::string::npos) << msg;
  }
}

TEST(BuildSpace, NonpositiveMeasureRejected)
{
  SpaceSpec spec;
  spec.kind = SpaceKind::circle;
  spec.n = 3;
  spec.measure_rule = MeasureRule::custom;
  spec.measure = {0.5, 0.0, 0.5};
  EXPECT_THROW(build_space(spec), Error);
}

TEST(BuildSpace, AnalyticMetricsOnGrids)
{
  for (std::size_t n : {5u, 16u, 33u}) {
    const auto iv = interval(n, 2.0);
    const auto ci = circle(n, 3.0);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        EXPECT_NEAR(iv.dist(i, j), std::abs(iv.labels[i][0] - iv.labels[j][0]), 1e-12);
        const double a = std::abs(ci.labels[i][0] - ci.labels[j][0]);
        EXPECT_NEAR(ci.dist(i, j), std::min(a, 3.0 - a), 1e-12);
      }
    EXPECT_NEAR(iv.total_mass(), 2.0, 1e-12);
    EXPECT_NEAR(ci.total_mass(), 3.0, 1e-12);
  }
}

TEST(BuildSpace, TorusDistancesAreL1Periodic)
{
  SpaceSpec spec;
  spec.kind = SpaceKind::torus2d;
  spec.n = 6;
  spec.length = 1.0;
  const auto s = build_space(spec);
  ASSERT_EQ(s.size(), 36u);
  const double dx = 1.0 / 6.0;
  auto wrap = [](int a) { return std::min(a, 6 - a); };
  for (int a = 0; a < 36; ++a)
    for (int b = 0; b < 36; ++b) {
      const int dr = std::abs(a / 6 - b / 6), dc = std::abs(a % 6 - b % 6);
      EXPECT_NEAR(s.dist(a, b), dx * (wrap(dr) + wrap(dc)), 1e-12);
    }
  EXPECT_NEAR(s.total_mass(), 1.0, 1e-12);
}

TEST(MetricClosure, SingleEdge)
{
  const auto d = metric_closure({{0, 1, 2.0}}, 2);
  EXPECT_DOUBLE_EQ(d(0, 1), 2.0);
  EXPECT_DOUBLE_EQ(d(1, 0), 2.0);
}

TEST(MetricClosure, TriangleShortcut)
{
  const auto d = metric_closure({{0, 1, 1.0}, {1, 2, 1.0}, {0, 2, 3.0}}, 3);
  EXPECT_DOUBLE_EQ(d(0, 2), 2.0);
}

TEST(MetricClosure, MatchesBellmanFordOracle)
{
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    const auto s = random_space(rng, 6);
    const auto oracle = bellman_ford_all_pairs(s.edges(), 6);
    for (std::size_t i = 0; i < 6; ++i)
      for (std::size_t j = 0; j < 6; ++j) EXPECT_DOUBLE_EQ(s.dist(i, j), oracle(i, j));
  }
}

TEST(MetricClosure, DijkstraBranchAgreesWithFloydWarshall)
{
  // 600 points on a path force the per-source branch.
  std::vector<WeightedEdge> edges;
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> w(0.5, 1.5);
  for (std::size_t i = 0; i + 1 < 600; ++i) edges.push_back({i, i + 1, w(rng)});
  edges.push_back({0, 599, 3.0});
  const auto d = metric_closure(edges, 600);
  std::vector<double> prefix{0.0};
  for (std::size_t i = 0; i + 1 < 600; ++i) prefix.push_back(prefix.back() + edges[i].w);
  for (std::size_t i : {0u, 17u, 300u, 598u})
    for (std::size_t j : {1u, 250u, 599u}) {
      const double along = std::abs(prefix[i] - prefix[j]);
      const double around = std::min(prefix[i], prefix[j]) + 3.0 + (prefix[599] - std::max(prefix[i], prefix[j]));
      EXPECT_NEAR(d(i, j), std::min(along, around), 1e-9);
    }
}

TEST(MetricClosure, Idempotent)
{
  std::mt19937_64 rng(11);
  const auto s = random_space(rng, 9);
  std::vector<WeightedEdge> all;
  for (std::size_t i = 0; i < 9; ++i)
    for (std::size_t j = i + 1; j < 9; ++j) all.push_back({i, j, s.dist(i, j)});
  const auto again = metric_closure(all, 9);
  for (std::size_t i = 0; i < 9; ++i)
    for (std::size_t j = 0; j < 9; ++j) EXPECT_NEAR(again(i, j), s.dist(i, j), 1e-13);
}

TEST(MetricClosure, Errors)
{
  EXPECT_THROW(metric_closure({{0, 1, 1.0}}, 3), Error);
  EXPECT_THROW(metric_closure({{0, 1, 0.0}}, 2), Error);
  EXPECT_THROW(metric_closure({{0, 1, -1.0}}, 2), Error);
}

TEST(MetricClosure, ShrinkingRadiusNeverShortens)
{
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  SpaceSpec spec;
  spec.kind = SpaceKind::point_cloud;
  for (int i = 0; i < 40; ++i) spec.points.push_back({u(rng), u(rng)});
  spec.connect_radius = 0.9;
  const auto wide = build_space(spec);
  for (double r : {0.6, 0.45, 0.3}) {
    spec.connect_radius = r;
    const auto narrow = build_space(spec);
    for (std::size_t i = 0; i < 40; ++i)
      for (std::size_t j = 0; j < 40; ++j) EXPECT_GE(narrow.dist(i, j), wide.dist(i, j) - 1e-15);
  }
}

TEST(ValidateSpace, BuiltSpacesAreClean)
{
  SpaceSpec t;
  t.kind = SpaceKind::torus2d;
  t.n = 5;
  for (const auto& s : {interval(7), circle(8), build_space(t)}) EXPECT_TRUE(validate_space(s).ok());
}

TEST(ValidateSpace, ReportsBrokenSymmetry)
{
  auto s = circle(6);
  s.dist(2, 3) += 0.01;
  const auto rep = validate_space(s);
  ASSERT_FALSE(rep.ok());
  bool found = false;
  for (const auto& v : rep.violations)
    if (v.invariant == "symmetry") {
      found = true;
      EXPECT_EQ(v.where, (std::vector<std::size_t>{2, 3}));
    }
  EXPECT_TRUE(found);
}

TEST(ValidateSpace, ReportsTriangleViolation)
{
  auto s = space_from_graph({{0, 1, 1.0}, {1, 2, 1.0}, {0, 2, 1.0}}, {1, 1, 1});
  s.dist(0, 1) = s.dist(1, 0) = 2.5; // d(0,1) > d(0,2) + d(2,1)
  const auto rep = validate_space(s);
  bool found = false;
  for (const auto& v : rep.violations)
    if (v.invariant == "triangle") {
      found = true;
      EXPECT_EQ(v.where, (std::vector<std::size_t>{0, 2, 1}));
      EXPECT_NEAR(v.amount, 0.5, 1e-12);
    }
  EXPECT_TRUE(found);
}
