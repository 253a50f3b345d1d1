#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <utility>
#include <vector>

#include "mmslab/core.hpp"
#include "mmslab/fields.hpp"
#include "mmslab/space.hpp"

namespace mmslab {

/// Exact inf-convolution Q_t f(x) = min_y f(y) + d(x,y)^2 / (2t) together with
/// the minimizer sets and the min/max distance D-(x,t), D+(x,t) from x to them.
/// On a finite space with finite f the blow-up time is infinite, so it is not
/// stored.
struct HopfLaxResult {
  double t = 0.0;
  ScalarField q;
  std::vector<std::vector<std::size_t>> argmins;
  ScalarField d_minus;
  ScalarField d_plus;
};

inline constexpr double kHopfLaxTieTol = 1e-12;

inline HopfLaxResult hopf_lax(const FiniteMetricMeasureSpace& space, std::span<const double> f, double t)
{
  if (!(t > 0.0)) fail("hopf_lax: time must be positive, got ", t);
  const std::size_t n = space.size();
  if (f.size() != n) fail("hopf_lax: field has ", f.size(), " values, space has ", n);
  for (std::size_t i = 0; i < n; ++i)
    if (!std::isfinite(f[i])) fail("hopf_lax: f(", i, ") is not finite");

  HopfLaxResult r;
  r.t = t;
  r.q.resize(n);
  r.argmins.resize(n);
  r.d_minus.resize(n);
  r.d_plus.resize(n);
  std::vector<double> F(n);
  for (std::size_t x = 0; x < n; ++x) {
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t y = 0; y < n; ++y) {
      const double d = space.dist(x, y);
      F[y] = f[y] + d * d / (2.0 * t);
      best = std::min(best, F[y]);
    }
    double dmin = std::numeric_limits<double>::infinity();
    double dmax = 0.0;
    for (std::size_t y = 0; y < n; ++y) {
      if (F[y] - best <= kHopfLaxTieTol * std::max(std::abs(F[y]), std::abs(best))) {
        r.argmins[x].push_back(y);
        dmin = std::min(dmin, space.dist(x, y));
        dmax = std::max(dmax, space.dist(x, y));
      }
    }
    r.q[x] = best;
    r.d_minus[x] = dmin;
    r.d_plus[x] = dmax;
  }
  return r;
}

inline std::pair<ScalarField, ScalarField> min_distances(const HopfLaxResult& r)
{
  return {r.d_minus, r.d_plus};
}

/// Left and right time derivatives of t -> Q_t f(x):
/// (-D-(x,t)^2 / (2t^2), -D+(x,t)^2 / (2t^2)).
inline std::pair<double, double> hj_derivatives(const FiniteMetricMeasureSpace& space,
                                                std::span<const double> f, double t, std::size_t x)
{
  if (x >= space.size()) fail("hj_derivatives: point ", x, " out of range");
  const auto r = hopf_lax(space, f, t);
  const double tt = 2.0 * t * t;
  return {-r.d_minus[x] * r.d_minus[x] / tt, -r.d_plus[x] * r.d_plus[x] / tt};
}

/// Below this time Q_t f = f exactly: any move costs at least min_edge^2/(2t),
/// which then exceeds osc(f).
inline double hopf_lax_identity_time(const FiniteMetricMeasureSpace& space, std::span<const double> f)
{
  const auto [lo, hi] = std::minmax_element(f.begin(), f.end());
  const double osc = *hi - *lo;
  const double e = space.min_edge();
  return osc > 0.0 ? e * e / (2.0 * osc) : std::numeric_limits<double>::infinity();
}

struct PairViolation {
  std::size_t x = 0;
  std::size_t y = 0;
  double excess = 0.0;
};

struct SubsolutionReport {
  double t = 0.0;
  /// Smallest slack of Q(x) - Q(y) <= d (D-(y)/t + d/(2t)) over all pairs.
  double min_pair_slack = std::numeric_limits<double>::infinity();
  std::vector<PairViolation> pair_violations;
  /// d^-/dt Q(x) + 1/2 ((|grad+ Q|(x) - r_x/(2t))^+)^2, nonpositive in exact arithmetic.
  ScalarField slope_residual;
  std::vector<std::size_t> flagged_points;

  [[nodiscard]] bool ok() const { return pair_violations.empty() && flagged_points.empty(); }
};

inline SubsolutionReport hj_subsolution_report(const FiniteMetricMeasureSpace& space,
                                               std::span<const double> f, double t,
                                               double tol = 1e-12)
{
  const auto r = hopf_lax(space, f, t);
  const std::size_t n = space.size();
  SubsolutionReport rep;
  rep.t = t;
  double scale = 1.0;
  for (double v : r.q) scale = std::max(scale, std::abs(v));

  for (std::size_t x = 0; x < n; ++x)
    for (std::size_t y = 0; y < n; ++y) {
      const double d = space.dist(x, y);
      const double bound = d * (r.d_minus[y] / t + d / (2.0 * t));
      const double slack = bound - (r.q[x] - r.q[y]);
      rep.min_pair_slack = std::min(rep.min_pair_slack, slack);
      if (-slack > tol * scale) rep.pair_violations.push_back({x, y, -slack});
    }

  const auto asc = local_slope(space, r.q, SlopeKind::ascending);
  rep.slope_residual.resize(n);
  for (std::size_t x = 0; x < n; ++x) {
    const double left = -r.d_minus[x] * r.d_minus[x] / (2.0 * t * t);
    const double g = std::max(asc[x] - space.max_edge(x) / (2.0 * t), 0.0);
    rep.slope_residual[x] = left + 0.5 * g * g;
    if (rep.slope_residual[x] > tol * std::max(1.0, std::abs(left))) rep.flagged_points.push_back(x);
  }
  return rep;
}

} // namespace mmslab
