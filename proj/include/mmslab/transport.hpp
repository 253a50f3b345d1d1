#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <deque>
#include <limits>
#include <span>
#include <sstream>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "mmslab/core.hpp"
#include "mmslab/fields.hpp"
#include "mmslab/space.hpp"

namespace mmslab {

inline constexpr double kMassTol = 1e-12;

/// Probability weights over the points of a space.
struct ProbabilityMeasure {
  std::vector<double> weights;

  ProbabilityMeasure() = default;
  explicit ProbabilityMeasure(std::vector<double> w, double tol = kMassTol) : weights(std::move(w))
  {
    double s = 0.0;
    for (std::size_t i = 0; i < weights.size(); ++i) {
      if (!(weights[i] >= 0.0) || !std::isfinite(weights[i]))
        fail("probability measure: weight ", i, " is ", weights[i]);
      s += weights[i];
    }
    if (std::abs(s - 1.0) > tol) fail("probability measure: total mass ", s, " differs from 1");
  }

  /// Normalizes rho * m to unit mass.
  static ProbabilityMeasure from_density(std::span<const double> rho, std::span<const double> m)
  {
    if (rho.size() != m.size()) fail("from_density: size mismatch");
    std::vector<double> w(rho.size());
    double s = 0.0;
    for (std::size_t i = 0; i < w.size(); ++i) {
      if (!(rho[i] >= 0.0)) fail("from_density: negative density at ", i);
      w[i] = rho[i] * m[i];
      s += w[i];
    }
    if (!(s > 0.0)) fail("from_density: zero total mass");
    for (double& x : w) x /= s;
    return ProbabilityMeasure(std::move(w));
  }

  static ProbabilityMeasure dirac(std::size_t n, std::size_t at)
  {
    std::vector<double> w(n, 0.0);
    w.at(at) = 1.0;
    return ProbabilityMeasure(std::move(w));
  }

  [[nodiscard]] std::size_t size() const { return weights.size(); }
  double operator[](std::size_t i) const { return weights[i]; }

  /// rho = weight / m.
  [[nodiscard]] ScalarField density(std::span<const double> m) const
  {
    ScalarField r(weights.size());
    for (std::size_t i = 0; i < r.size(); ++i) r[i] = weights[i] / m[i];
    return r;
  }
};

inline double total_variation(const ProbabilityMeasure& a, const ProbabilityMeasure& b)
{
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += std::abs(a[i] - b[i]);
  return 0.5 * s;
}

struct Coupling {
  Matrix plan;
  std::vector<double> first;  // row marginal
  std::vector<double> second; // column marginal

  [[nodiscard]] static Coupling from_plan(Matrix plan)
  {
    Coupling c;
    c.first.assign(plan.rows(), 0.0);
    c.second.assign(plan.cols(), 0.0);
    for (std::size_t i = 0; i < plan.rows(); ++i)
      for (std::size_t j = 0; j < plan.cols(); ++j) {
        c.first[i] += plan(i, j);
        c.second[j] += plan(i, j);
      }
    c.plan = std::move(plan);
    return c;
  }

  static Coupling identity(std::span<const double> mu)
  {
    Matrix p(mu.size(), mu.size());
    for (std::size_t i = 0; i < mu.size(); ++i) p(i, i) = mu[i];
    return from_plan(std::move(p));
  }

  static Coupling product(std::span<const double> mu, std::span<const double> nu)
  {
    Matrix p(mu.size(), nu.size());
    for (std::size_t i = 0; i < mu.size(); ++i)
      for (std::size_t j = 0; j < nu.size(); ++j) p(i, j) = mu[i] * nu[j];
    return from_plan(std::move(p));
  }

  /// Worst marginal mismatch against the declared marginals.
  [[nodiscard]] double marginal_error() const
  {
    double e = 0.0;
    std::vector<double> r(plan.rows(), 0.0), c(plan.cols(), 0.0);
    for (std::size_t i = 0; i < plan.rows(); ++i)
      for (std::size_t j = 0; j < plan.cols(); ++j) {
        if (plan(i, j) < 0.0) e = std::max(e, -plan(i, j));
        r[i] += plan(i, j);
        c[j] += plan(i, j);
      }
    e = std::max(e, max_abs_diff(r, first));
    return std::max(e, max_abs_diff(c, second));
  }
};

/// Kantorovich potentials for the cost d^2/2 with the achieved primal and
/// dual objective values.
struct DualCertificate {
  ScalarField phi;
  ScalarField psi;
  double primal = 0.0;
  double dual = 0.0;
  double gap = 0.0;
};

struct W2Result {
  double w2 = 0.0;
  Coupling plan;
  DualCertificate cert;
  std::size_t iterations = 0;
};

struct SimplexOptions {
  std::size_t max_iterations = 0; // 0: automatic
  double pricing_tol = 1e-13;     // relative to the largest cost
};

namespace detail {

/// Transportation simplex on a dense cost matrix. The basis is a spanning tree
/// of the bipartite row/column graph; potentials are read off the tree.
/// Pricing is Dantzig's most-negative reduced cost; after a run of degenerate
/// pivots it switches to Bland's smallest-index rule until the objective moves
/// again.
class TransportSimplex {
public:
  TransportSimplex(std::span<const double> supply, std::span<const double> demand, const Matrix& cost,
                   SimplexOptions opts)
      : n1_(supply.size()), n2_(demand.size()), cost_(cost), opts_(opts), flow_(n1_, n2_, 0.0),
        basic_(n1_ * n2_, 0), adj_(n1_ + n2_), u_(n1_), v_(n2_)
  {
    if (cost.rows() != n1_ || cost.cols() != n2_) fail("transport simplex: cost shape mismatch");
    double cmax = 0.0;
    for (double c : cost.data()) cmax = std::max(cmax, std::abs(c));
    eps_ = opts_.pricing_tol * (1.0 + cmax);
    northwest(supply, demand);
  }

  std::size_t solve()
  {
    const std::size_t cap =
        opts_.max_iterations ? opts_.max_iterations : 50 * n1_ * n2_ + 10 * (n1_ + n2_) + 1000;
    const std::size_t degenerate_limit = 2 * (n1_ + n2_) + 10;
    std::size_t degenerate_run = 0;
    bool bland = false;
    std::deque<std::string> trace;
    for (std::size_t it = 0;; ++it) {
      potentials();
      auto [p, q, rc] = price(bland);
      if (rc >= -eps_) return it;
      if (it >= cap) {
        std::ostringstream os;
        os << "transport simplex: no convergence after " << it << " pivots (bland=" << bland
           << "), last pivots:";
        for (const auto& s : trace) os << " [" << s << "]";
        throw Error(os.str());
      }
      const double theta = pivot(p, q, bland);
      if (theta <= 0.0) {
        if (++degenerate_run > degenerate_limit) bland = true;
      } else {
        degenerate_run = 0;
        bland = false;
      }
      std::ostringstream os;
      os << "it " << it << " enter (" << p << "," << q << ") rc " << rc << " theta " << theta;
      trace.push_back(os.str());
      if (trace.size() > 8) trace.pop_front();
    }
  }

  [[nodiscard]] const Matrix& flow() const { return flow_; }
  [[nodiscard]] const std::vector<double>& u() const { return u_; }
  [[nodiscard]] const std::vector<double>& v() const { return v_; }

private:
  struct Cell {
    std::size_t i, j;
  };

  void add_basic(std::size_t i, std::size_t j)
  {
    basic_[i * n2_ + j] = 1;
    cells_.push_back({i, j});
    adj_[i].push_back(cells_.size() - 1);
    adj_[n1_ + j].push_back(cells_.size() - 1);
  }

  void northwest(std::span<const double> supply, std::span<const double> demand)
  {
    std::vector<double> a(supply.begin(), supply.end()), b(demand.begin(), demand.end());
    std::size_t i = 0, j = 0;
    while (i < n1_ && j < n2_) {
      if (i + 1 == n1_ && j + 1 == n2_) {
        flow_(i, j) = std::max(0.0, std::min(a[i], b[j]));
        add_basic(i, j);
        break;
      }
      if ((a[i] <= b[j] && i + 1 < n1_) || j + 1 == n2_) {
        const double x = std::max(0.0, a[i]);
        flow_(i, j) = x;
        b[j] -= x;
        add_basic(i, j);
        ++i;
      } else {
        const double x = std::max(0.0, b[j]);
        flow_(i, j) = x;
        a[i] -= x;
        add_basic(i, j);
        ++j;
      }
    }
  }

  std::size_t other(std::size_t cell, std::size_t node) const
  {
    const auto& c = cells_[cell];
    return node < n1_ ? n1_ + c.j : c.i;
  }

  void potentials()
  {
    const std::size_t nn = n1_ + n2_;
    parent_.assign(nn, npos);
    parent_cell_.assign(nn, npos);
    depth_.assign(nn, 0);
    std::vector<char> seen(nn, 0);
    std::vector<std::size_t> stack{0};
    seen[0] = 1;
    u_[0] = 0.0;
    while (!stack.empty()) {
      const std::size_t node = stack.back();
      stack.pop_back();
      for (std::size_t cell : adj_[node]) {
        const std::size_t nb = other(cell, node);
        if (seen[nb]) continue;
        seen[nb] = 1;
        parent_[nb] = node;
        parent_cell_[nb] = cell;
        depth_[nb] = depth_[node] + 1;
        const auto& c = cells_[cell];
        if (nb >= n1_) v_[c.j] = cost_(c.i, c.j) - u_[c.i];
        else u_[c.i] = cost_(c.i, c.j) - v_[c.j];
        stack.push_back(nb);
      }
    }
  }

  std::tuple<std::size_t, std::size_t, double> price(bool bland) const
  {
    std::size_t bp = 0, bq = 0;
    double best = 0.0;
    for (std::size_t i = 0; i < n1_; ++i) {
      const double ui = u_[i];
      const auto crow = cost_.row(i);
      for (std::size_t j = 0; j < n2_; ++j) {
        const double rc = crow[j] - ui - v_[j];
        if (rc < best && !basic_[i * n2_ + j]) {
          best = rc;
          bp = i;
          bq = j;
          if (bland && rc < -eps_) return {bp, bq, best};
        }
      }
    }
    return {bp, bq, best};
  }

  double pivot(std::size_t p, std::size_t q, bool bland)
  {
    // Tree path from row p to column q.
    std::size_t a = p, b = n1_ + q;
    std::vector<std::size_t> from_a, from_b;
    while (a != b) {
      if (depth_[a] >= depth_[b]) {
        from_a.push_back(parent_cell_[a]);
        a = parent_[a];
      } else {
        from_b.push_back(parent_cell_[b]);
        b = parent_[b];
      }
    }
    std::vector<std::size_t> path = std::move(from_a);
    path.insert(path.end(), from_b.rbegin(), from_b.rend());

    double theta = std::numeric_limits<double>::infinity();
    std::size_t leave = npos;
    for (std::size_t k = 0; k < path.size(); k += 2) {
      const auto& c = cells_[path[k]];
      const double x = flow_(c.i, c.j);
      const bool better = x < theta ||
                          (x == theta && bland &&
                           c.i * n2_ + c.j < cells_[leave].i * n2_ + cells_[leave].j);
      if (better) {
        theta = x;
        leave = path[k];
      }
    }
    theta = std::max(theta, 0.0);
    for (std::size_t k = 0; k < path.size(); ++k) {
      const auto& c = cells_[path[k]];
      flow_(c.i, c.j) += (k % 2 == 0) ? -theta : theta;
    }
    flow_(p, q) = theta;

    // Swap the leaving cell for the entering one in place.
    const Cell old = cells_[leave];
    flow_(old.i, old.j) = 0.0;
    basic_[old.i * n2_ + old.j] = 0;
    auto drop = [&](std::size_t node) {
      auto& v = adj_[node];
      v.erase(std::find(v.begin(), v.end(), leave));
    };
    drop(old.i);
    drop(n1_ + old.j);
    cells_[leave] = {p, q};
    basic_[p * n2_ + q] = 1;
    adj_[p].push_back(leave);
    adj_[n1_ + q].push_back(leave);
    return theta;
  }

  static constexpr std::size_t npos = std::numeric_limits<std::size_t>::max();

  std::size_t n1_, n2_;
  const Matrix& cost_;
  SimplexOptions opts_;
  double eps_ = 0.0;
  Matrix flow_;
  std::vector<char> basic_;
  std::vector<Cell> cells_;
  std::vector<std::vector<std::size_t>> adj_;
  std::vector<double> u_, v_;
  std::vector<std::size_t> parent_, parent_cell_, depth_;
};

} // namespace detail

/// phi^c(y) = min_x [ c(x,y) - phi(x) ] for a general cost matrix.
inline ScalarField c_transform(const Matrix& cost, std::span<const double> phi)
{
  ScalarField out(cost.cols(), std::numeric_limits<double>::infinity());
  for (std::size_t x = 0; x < cost.rows(); ++x)
    for (std::size_t y = 0; y < cost.cols(); ++y) out[y] = std::min(out[y], cost(x, y) - phi[x]);
  return out;
}

/// Half squared distance cost matrix.
inline Matrix half_squared_cost(const FiniteMetricMeasureSpace& space)
{
  const std::size_t n = space.size();
  Matrix c(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) c(i, j) = 0.5 * space.dist(i, j) * space.dist(i, j);
  return c;
}

/// phi^c(y) = min_x [ d(x,y)^2/2 - phi(x) ].
inline ScalarField c_transform(const FiniteMetricMeasureSpace& space, std::span<const double> phi)
{
  if (phi.size() != space.size()) fail("c_transform: size mismatch");
  return c_transform(half_squared_cost(space), phi);
}

/// Exact optimal transport for a general cost with a dual certificate.
inline W2Result solve_transport(std::span<const double> mu, std::span<const double> nu,
                                const Matrix& cost, SimplexOptions opts = {})
{
  const double smu = sum(mu), snu = sum(nu);
  if (std::abs(smu - snu) > 1e-10 * std::max(1.0, smu))
    fail("solve_transport: marginal mass mismatch (", smu, " vs ", snu, ")");
  for (double x : mu)
    if (!(x >= 0.0)) fail("solve_transport: negative source mass");
  for (double x : nu)
    if (!(x >= 0.0)) fail("solve_transport: negative target mass");
  // Put both marginals on exactly the same total.
  std::vector<double> target(nu.begin(), nu.end());
  if (snu > 0.0)
    for (double& x : target) x *= smu / snu;

  detail::TransportSimplex simplex(mu, target, cost, opts);
  W2Result r;
  r.iterations = simplex.solve();

  Matrix plan = simplex.flow();
  for (double& x : plan.data())
    if (x < 0.0) x = 0.0;
  r.plan = Coupling::from_plan(std::move(plan));
  r.plan.first.assign(mu.begin(), mu.end());
  r.plan.second.assign(nu.begin(), nu.end());

  // Optimal tree potentials are already c-conjugate; the double transform
  // only removes rounding from the feasibility check.
  r.cert.phi = c_transform(cost.transposed(), simplex.v());
  r.cert.psi = c_transform(cost, r.cert.phi);
  double primal = 0.0;
  for (std::size_t i = 0; i < cost.rows(); ++i)
    for (std::size_t j = 0; j < cost.cols(); ++j) primal += cost(i, j) * r.plan.plan(i, j);
  r.cert.primal = primal;
  r.cert.dual = dot(mu, r.cert.phi) + dot(nu, r.cert.psi);
  r.cert.gap = r.cert.primal - r.cert.dual;
  r.w2 = std::sqrt(std::max(0.0, 2.0 * primal));
  return r;
}

/// W2 with cost d^2 between two probability measures on the space. The plan is
/// optimal for d^2/2 (same minimizers); the certificate is in d^2/2 units.
inline W2Result solve_w2(const FiniteMetricMeasureSpace& space, const ProbabilityMeasure& mu,
                         const ProbabilityMeasure& nu, SimplexOptions opts = {})
{
  if (mu.size() != space.size() || nu.size() != space.size()) fail("solve_w2: measure size mismatch");
  return solve_transport(mu.weights, nu.weights, half_squared_cost(space), opts);
}

inline double w2_distance(const FiniteMetricMeasureSpace& space, const ProbabilityMeasure& mu,
                          const ProbabilityMeasure& nu)
{
  return solve_w2(space, mu, nu).w2;
}

struct CertificateAudit {
  double max_infeasibility = 0.0; // max (phi(x) + psi(y) - c(x,y))^+
  double max_slackness = 0.0;     // max |phi + psi - c| on cells with mass > 1e-14
  double relative_gap = 0.0;
};

inline CertificateAudit audit_certificate(const Matrix& cost, const W2Result& r, double support_tol = 1e-14)
{
  CertificateAudit a;
  for (std::size_t i = 0; i < cost.rows(); ++i)
    for (std::size_t j = 0; j < cost.cols(); ++j) {
      const double s = r.cert.phi[i] + r.cert.psi[j] - cost(i, j);
      a.max_infeasibility = std::max(a.max_infeasibility, s);
      if (r.plan.plan(i, j) > support_tol) a.max_slackness = std::max(a.max_slackness, std::abs(s));
    }
  a.relative_gap = std::abs(r.cert.gap) / (1.0 + std::abs(r.cert.primal));
  return a;
}

struct PotentialReport {
  double support_residual = 0.0; // max |phi + phi^c - d^2/2| on supp(plan)
  double slope_slack = 0.0;      // min over x of bound(x) - |grad+ phi|(x)
  std::size_t worst_point = 0;
  bool ok = true;
};

/// Checks that phi is a Kantorovich potential for `plan`: phi + phi^c = d^2/2
/// on the support, and the finite-scale ascending slope bound
/// |grad+ phi|(x) <= max{d(x,y) : plan(x,y) > 0} + r_x/2.
inline PotentialReport potential_certificate(const FiniteMetricMeasureSpace& space,
                                             std::span<const double> phi, const Coupling& plan,
                                             double tol = 1e-9)
{
  const std::size_t n = space.size();
  if (phi.size() != n || plan.plan.rows() != n || plan.plan.cols() != n)
    fail("potential_certificate: size mismatch");
  PotentialReport rep;
  const auto phic = c_transform(space, phi);
  const auto asc = local_slope(space, phi, SlopeKind::ascending);
  rep.slope_slack = std::numeric_limits<double>::infinity();
  for (std::size_t x = 0; x < n; ++x) {
    double reach = -1.0;
    for (std::size_t y = 0; y < n; ++y) {
      if (plan.plan(x, y) <= 1e-14) continue;
      const double d = space.dist(x, y);
      rep.support_residual = std::max(rep.support_residual, std::abs(phi[x] + phic[y] - 0.5 * d * d));
      reach = std::max(reach, d);
    }
    if (reach < 0.0) continue;
    const double slack = reach + 0.5 * space.max_edge(x) - asc[x];
    if (slack < rep.slope_slack) {
      rep.slope_slack = slack;
      rep.worst_point = x;
    }
  }
  if (!std::isfinite(rep.slope_slack)) rep.slope_slack = 0.0;
  rep.ok = rep.support_residual <= tol && rep.slope_slack >= -tol;
  return rep;
}

/// gamma_# mu: second marginal of the plan reweighted by d mu / d gamma^1.
inline ProbabilityMeasure push_forward_plan(const Coupling& plan, const ProbabilityMeasure& mu)
{
  const std::size_t n1 = plan.plan.rows(), n2 = plan.plan.cols();
  if (mu.size() != n1) fail("push_forward_plan: measure size mismatch");
  std::vector<double> row(n1, 0.0);
  for (std::size_t i = 0; i < n1; ++i)
    for (std::size_t j = 0; j < n2; ++j) row[i] += plan.plan(i, j);
  std::vector<double> out(n2, 0.0);
  for (std::size_t i = 0; i < n1; ++i) {
    if (mu[i] == 0.0) continue;
    if (!(row[i] > 0.0))
      fail("push_forward_plan: measure charges point ", i, " where the plan's first marginal vanishes");
    const double ratio = mu[i] / row[i];
    for (std::size_t j = 0; j < n2; ++j) out[j] += plan.plan(i, j) * ratio;
  }
  const double s = sum(out);
  for (double& x : out) x /= s;
  return ProbabilityMeasure(std::move(out));
}

struct GeodesicSegment {
  NodePath path;
  double mass = 0.0;
};

struct GeodesicPlan {
  std::size_t n = 0;
  std::vector<GeodesicSegment> segments;
};

/// One shortest node path from x to y. Walking back from y, the predecessor is
/// the smallest-index neighbor that lies on a shortest path.
inline NodePath shortest_node_path(const FiniteMetricMeasureSpace& space, std::size_t x, std::size_t y)
{
  std::vector<std::size_t> rev{y};
  std::vector<double> lens;
  std::size_t cur = y;
  while (cur != x) {
    const double dc = space.dist(x, cur);
    std::size_t pred = std::numeric_limits<std::size_t>::max();
    double len = 0.0;
    for (const auto& nb : space.neighbors[cur]) {
      const double via = space.dist(x, nb.index) + nb.length;
      if (space.dist(x, nb.index) < dc && std::abs(via - dc) <= 1e-12 * std::max(1.0, dc) &&
          nb.index < pred) {
        pred = nb.index;
        len = nb.length;
      }
    }
    if (pred == std::numeric_limits<std::size_t>::max())
      fail("shortest_node_path: no neighbor of ", cur, " lies on a shortest path from ", x);
    rev.push_back(pred);
    lens.push_back(len);
    cur = pred;
  }
  NodePath p;
  p.nodes.assign(rev.rbegin(), rev.rend());
  p.lengths.assign(lens.rbegin(), lens.rend());
  return p;
}

inline GeodesicPlan lift_geodesic_plan(const FiniteMetricMeasureSpace& space, const Coupling& plan,
                                       double support_tol = 0.0)
{
  const std::size_t n = space.size();
  if (plan.plan.rows() != n || plan.plan.cols() != n) fail("lift_geodesic_plan: size mismatch");
  GeodesicPlan g;
  g.n = n;
  for (std::size_t x = 0; x < n; ++x)
    for (std::size_t y = 0; y < n; ++y)
      if (plan.plan(x, y) > support_tol) g.segments.push_back({shortest_node_path(space, x, y), plan.plan(x, y)});
  return g;
}

/// Snapped displacement interpolation: each path's mass sits at the node whose
/// arclength from the start is closest to t * length (ties go to the earlier
/// node).
inline ProbabilityMeasure interpolate(const GeodesicPlan& g, double t)
{
  if (!(t >= 0.0 && t <= 1.0)) fail("interpolate: t must lie in [0,1], got ", t);
  std::vector<double> w(g.n, 0.0);
  for (const auto& seg : g.segments) {
    const auto& nodes = seg.path.nodes;
    std::size_t at = nodes.front();
    if (t == 1.0) {
      at = nodes.back();
    } else if (t > 0.0) {
      const double target = t * seg.path.length();
      double cum = 0.0, best = target;
      for (std::size_t k = 0; k + 1 < nodes.size(); ++k) {
        cum += seg.path.lengths[k];
        if (std::abs(cum - target) < best) {
          best = std::abs(cum - target);
          at = nodes[k + 1];
        }
      }
    }
    w[at] += seg.mass;
  }
  const double s = sum(w);
  for (double& x : w) x /= s;
  return ProbabilityMeasure(std::move(w));
}

struct MeasureCurve {
  std::vector<double> times;
  std::vector<ProbabilityMeasure> measures;

  void validate() const
  {
    if (times.size() != measures.size()) fail("measure curve: ", times.size(), " times but ", measures.size(), " measures");
    for (std::size_t k = 1; k < times.size(); ++k)
      if (!(times[k] > times[k - 1])) fail("measure curve: times not strictly increasing at index ", k);
  }
};

/// Per-interval metric speed W2(mu_k, mu_{k+1}) / (t_{k+1} - t_k).
inline std::vector<double> metric_speed(const FiniteMetricMeasureSpace& space, const MeasureCurve& curve)
{
  curve.validate();
  std::vector<double> out;
  for (std::size_t k = 0; k + 1 < curve.times.size(); ++k) {
    const auto r = solve_w2(space, curve.measures[k], curve.measures[k + 1]);
    out.push_back(r.w2 / (curve.times[k + 1] - curve.times[k]));
  }
  return out;
}

} // namespace mmslab
