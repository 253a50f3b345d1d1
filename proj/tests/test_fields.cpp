#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "mmslab/fields.hpp"
#include "support.hpp"

using namespace mmslab;
using namespace mmslab::testing;

namespace {

DirichletForm two_point_form() { return DirichletForm({{0, 1, 1.0}}, {1.0, 1.0}); }

DirichletForm random_form(std::mt19937_64& rng, const FiniteMetricMeasureSpace& s)
{
  std::uniform_real_distribution<double> u(0.1, 3.0);
  std::vector<Conductance> c;
  for (const auto& e : s.edges()) c.push_back({e.i, e.j, u(rng)});
  return DirichletForm(c, s.measure);
}

} // namespace

TEST(LocalSlope, ConstantFieldIsFlat)
{
  const auto s = circle(7);
  const std::vector<double> f(7, 3.0);
  for (auto k : {SlopeKind::two_sided, SlopeKind::ascending, SlopeKind::descending})
    for (double v : local_slope(s, f, k)) EXPECT_EQ(v, 0.0);
}

TEST(LocalSlope, TwoPointQuotients)
{
  const auto s = two_point();
  const std::vector<double> f{0.0, 1.0};
  EXPECT_EQ(local_slope(s, f, SlopeKind::ascending), (ScalarField{1.0, 0.0}));
  EXPECT_EQ(local_slope(s, f, SlopeKind::descending), (ScalarField{0.0, 1.0}));
  EXPECT_EQ(local_slope(s, f, SlopeKind::two_sided), (ScalarField{1.0, 1.0}));
}

TEST(LocalSlope, LinearFunctionOnInterval)
{
  for (std::size_t n : {3u, 10u, 41u}) {
    const auto s = interval(n, 2.0);
    std::vector<double> f(n);
    for (std::size_t i = 0; i < n; ++i) f[i] = s.labels[i][0];
    const auto g = local_slope(s, f, SlopeKind::two_sided);
    for (std::size_t i = 1; i + 1 < n; ++i) EXPECT_NEAR(g[i], 1.0, 1e-12);
  }
}

TEST(LocalSlope, DescendingIsAscendingOfNegation)
{
  std::mt19937_64 rng(1);
  for (int t = 0; t < 20; ++t) {
    const auto s = random_space(rng, 8);
    auto f = random_field(rng, 8);
    auto neg = f;
    for (double& x : neg) x = -x;
    EXPECT_EQ(local_slope(s, f, SlopeKind::descending), local_slope(s, neg, SlopeKind::ascending));
  }
}

TEST(LocalSlope, Subadditive)
{
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> c(-2.0, 2.0);
  for (int t = 0; t < 50; ++t) {
    const auto s = random_space(rng, 7);
    const auto f = random_field(rng, 7), g = random_field(rng, 7);
    const double a = c(rng), b = c(rng);
    std::vector<double> h(7);
    for (std::size_t i = 0; i < 7; ++i) h[i] = a * f[i] + b * g[i];
    const auto sf = local_slope(s, f, SlopeKind::two_sided), sg = local_slope(s, g, SlopeKind::two_sided);
    const auto sh = local_slope(s, h, SlopeKind::two_sided);
    for (std::size_t i = 0; i < 7; ++i) EXPECT_LE(sh[i], std::abs(a) * sf[i] + std::abs(b) * sg[i] + 1e-12);
  }
}

TEST(Lipschitz, ClosedForms)
{
  const auto s = two_point();
  EXPECT_EQ(lipschitz_constant(s, std::vector<double>{2.0, 2.0}), 0.0);
  EXPECT_EQ(lipschitz_constant(s, std::vector<double>{0.0, 1.0}), 1.0);
}

TEST(Lipschitz, BruteForceOnSixPoints)
{
  std::mt19937_64 rng(4);
  const auto s = random_space(rng, 6);
  const auto f = random_field(rng, 6);
  double best = 0.0;
  int pairs = 0;
  for (std::size_t i = 0; i < 6; ++i)
    for (std::size_t j = 0; j < 6; ++j)
      if (i < j) {
        ++pairs;
        best = std::max(best, std::abs(f[i] - f[j]) / s.dist(j, i));
      }
  EXPECT_EQ(pairs, 15);
  EXPECT_DOUBLE_EQ(lipschitz_constant(s, f), best);
}

TEST(UpperGradient, LipschitzConstantIsUpperGradient)
{
  std::mt19937_64 rng(6);
  const auto s = random_space(rng, 9);
  const auto f = random_field(rng, 9);
  const std::vector<double> G(9, lipschitz_constant(s, f));
  PathFamily paths = single_edge_paths(s);
  paths.push_back(shortest_node_path(s, 0, 8));
  paths.push_back(shortest_node_path(s, 3, 5));
  EXPECT_TRUE(upper_gradient_violations(s, f, G, paths).empty());
}

TEST(UpperGradient, EdgeSlopeIsUpperGradient)
{
  std::mt19937_64 rng(8);
  for (int t = 0; t < 30; ++t) {
    const auto s = random_space(rng, 8);
    const auto f = random_field(rng, 8);
    const auto G = local_slope(s, f, SlopeKind::two_sided);
    EXPECT_TRUE(upper_gradient_violations(s, f, G, single_edge_paths(s)).empty());
  }
}

TEST(UpperGradient, ZeroGradientFlagsEveryRise)
{
  const auto s = interval(4);
  const std::vector<double> f{0.0, 1.0, 1.0, 2.0};
  const std::vector<double> G(4, 0.0);
  const PathFamily paths{make_path(s, {0, 1}), make_path(s, {1, 2}), make_path(s, {2, 3}), make_path(s, {0, 1, 2, 3})};
  const auto v = upper_gradient_violations(s, f, G, paths);
  ASSERT_EQ(v.size(), 3u);
  EXPECT_EQ(v[0].path, 0u);
  EXPECT_EQ(v[1].path, 2u);
  EXPECT_EQ(v[2].path, 3u);
  EXPECT_DOUBLE_EQ(v[2].excess, 2.0);
}

TEST(UpperGradient, MakePathRejectsNonNeighbors)
{
  const auto s = interval(4);
  EXPECT_THROW(make_path(s, {0, 2}), Error);
}

TEST(DirichletForm, ClosedForms)
{
  const auto form = two_point_form();
  const std::vector<double> f{1.0, 0.0};
  EXPECT_DOUBLE_EQ(dirichlet_energy(form, std::vector<double>{4.0, 4.0}), 0.0);
  EXPECT_DOUBLE_EQ(dirichlet_energy(form, f), 0.5);
  EXPECT_EQ(carre_du_champ(form, f), (ScalarField{0.5, 0.5}));
  EXPECT_EQ(laplacian(form, f), (ScalarField{-1.0, 1.0}));
  EXPECT_EQ(carre_du_champ(form, std::vector<double>{2.0, 2.0}), (ScalarField{0.0, 0.0}));
  EXPECT_EQ(laplacian(form, std::vector<double>{2.0, 2.0}), (ScalarField{0.0, 0.0}));
}

TEST(DirichletForm, RejectsBadInput)
{
  EXPECT_THROW(DirichletForm({{0, 1, -1.0}}, {1.0, 1.0}), Error);
  EXPECT_THROW(DirichletForm({{0, 0, 1.0}}, {1.0, 1.0}), Error);
  EXPECT_THROW(DirichletForm({{0, 2, 1.0}}, {1.0, 1.0}), Error);
  EXPECT_THROW(DirichletForm({{0, 1, 1.0}}, {1.0, 0.0}), Error);
  EXPECT_THROW(DirichletForm({{0, 1, 1.0}}, {1.0, 1.0, 1.0}), Error);
}

TEST(DirichletForm, NormalizationSymmetryNeutrality)
{
  std::mt19937_64 rng(9);
  for (int t = 0; t < 50; ++t) {
    const auto s = random_space(rng, 10);
    const auto form = random_form(rng, s);
    const auto f = random_field(rng, 10), g = random_field(rng, 10);
    const auto G = carre_du_champ(form, f);
    double half = 0.0;
    for (std::size_t x = 0; x < 10; ++x) half += 0.5 * s.measure[x] * G[x];
    EXPECT_NEAR(half, dirichlet_energy(form, f), 1e-14 * (1.0 + dirichlet_energy(form, f)));

    const auto Lf = laplacian(form, f), Lg = laplacian(form, g);
    double mass = 0.0, fg = 0.0, gf = 0.0, edge = 0.0;
    for (std::size_t x = 0; x < 10; ++x) {
      mass += s.measure[x] * Lf[x];
      fg += s.measure[x] * g[x] * Lf[x];
      gf += s.measure[x] * f[x] * Lg[x];
    }
    for (const auto& e : form.edges()) edge += e.c * (f[e.j] - f[e.i]) * (g[e.j] - g[e.i]);
    EXPECT_NEAR(mass, 0.0, 1e-13);
    EXPECT_NEAR(fg, gf, 1e-13);
    EXPECT_NEAR(fg, -edge, 1e-13);
  }
}

TEST(DirichletForm, EnergyPositiveUnlessConstant)
{
  std::mt19937_64 rng(10);
  const auto s = random_space(rng, 8);
  const auto form = random_form(rng, s);
  EXPECT_GT(dirichlet_energy(form, random_field(rng, 8)), 0.0);
  EXPECT_EQ(dirichlet_energy(form, std::vector<double>(8, -1.5)), 0.0);
}

TEST(NaturalForm, SineEnergyConvergesToPiSquared)
{
  // Continuum oracle: 1/2 int_0^1 (2 pi cos 2 pi x)^2 dx = pi^2.
  double prev = 1e9;
  for (std::size_t n : {32u, 64u, 128u}) {
    const auto s = circle(n);
    const auto form = natural_form(s);
    std::vector<double> f(n);
    for (std::size_t i = 0; i < n; ++i) f[i] = std::sin(2.0 * kPi * s.labels[i][0]);
    const double err = std::abs(dirichlet_energy(form, f) - kPi * kPi);
    EXPECT_LT(err, prev);
    prev = err;
  }
  EXPECT_LT(prev, 5e-3);
}

TEST(NaturalForm, LaplacianOfSineIsSecondOrder)
{
  std::vector<double> errs;
  for (std::size_t n : {64u, 128u, 256u}) {
    const auto s = circle(n);
    std::vector<double> f(n);
    for (std::size_t i = 0; i < n; ++i) f[i] = std::sin(2.0 * kPi * s.labels[i][0]);
    const auto L = laplacian(natural_form(s), f);
    double e = 0.0;
    for (std::size_t i = 0; i < n; ++i) e = std::max(e, std::abs(L[i] + 4.0 * kPi * kPi * f[i]));
    // Taylor: (2 pi)^4 dx^2 / 12 leading term.
    const double dx = 1.0 / static_cast<double>(n);
    EXPECT_LE(e, std::pow(2.0 * kPi, 4) * dx * dx / 12.0 * 1.01);
    errs.push_back(e);
  }
  EXPECT_NEAR(errs[1] / errs[2], 4.0, 0.05);
}

TEST(NaturalForm, PointCloudIsConnectedAndSymmetric)
{
  SpaceSpec spec;
  spec.kind = SpaceKind::point_cloud;
  spec.points = {{0, 0}, {1, 0}, {1, 1}, {0, 1}, {0.5, 0.5}};
  spec.connect_radius = 1.05;
  const auto form = natural_form(build_space(spec));
  EXPECT_EQ(form.size(), 5u);
  for (const auto& e : form.edges()) EXPECT_GT(e.c, 0.0);
}
