#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "mmslab/space.hpp"
#include "mmslab/transport.hpp"

namespace mmslab::testing {

inline constexpr double kPi = 3.14159265358979323846;

/// Random connected weighted graph: a random spanning tree plus extra edges.
inline FiniteMetricMeasureSpace random_space(std::mt19937_64& rng, std::size_t n, double extra_prob = 0.3)
{
  std::uniform_real_distribution<double> w(0.2, 2.0);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<WeightedEdge> edges;
  for (std::size_t i = 1; i < n; ++i) {
    std::uniform_int_distribution<std::size_t> pick(0, i - 1);
    edges.push_back({pick(rng), i, w(rng)});
  }
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      if (u(rng) < extra_prob) edges.push_back({i, j, w(rng)});
  std::vector<double> m(n);
  for (double& x : m) x = 0.2 + u(rng);
  return space_from_graph(edges, m);
}

inline std::vector<double> random_field(std::mt19937_64& rng, std::size_t n, double lo = -1.0, double hi = 1.0)
{
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> f(n);
  for (double& x : f) x = u(rng);
  return f;
}

/// Random probability vector; `sparsity` is the chance of zeroing an entry.
inline ProbabilityMeasure random_measure(std::mt19937_64& rng, std::size_t n, double sparsity = 0.0)
{
  std::exponential_distribution<double> e(1.0);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> w(n);
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    w[i] = (u(rng) < sparsity) ? 0.0 : e(rng);
    s += w[i];
  }
  if (s == 0.0) {
    w[0] = 1.0;
    s = 1.0;
  }
  for (double& x : w) x /= s;
  return ProbabilityMeasure(std::move(w));
}

inline FiniteMetricMeasureSpace two_point(double d = 1.0, double m0 = 1.0, double m1 = 1.0)
{
  return space_from_graph({{0, 1, d}}, {m0, m1});
}

inline FiniteMetricMeasureSpace circle(std::size_t n, double length = 1.0)
{
  SpaceSpec s;
  s.kind = SpaceKind::circle;
  s.n = n;
  s.length = length;
  return build_space(s);
}

inline FiniteMetricMeasureSpace interval(std::size_t n, double length = 1.0)
{
  SpaceSpec s;
  s.kind = SpaceKind::interval;
  s.n = n;
  s.length = length;
  return build_space(s);
}

} // namespace mmslab::testing
