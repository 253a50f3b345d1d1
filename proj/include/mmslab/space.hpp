#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <queue>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "mmslab/core.hpp"

namespace mmslab {

enum class SpaceKind { interval, circle, torus2d, point_cloud, custom };

inline std::string to_string(SpaceKind k)
{
  switch (k) {
  case SpaceKind::interval: return "interval";
  case SpaceKind::circle: return "circle";
  case SpaceKind::torus2d: return "torus2d";
  case SpaceKind::point_cloud: return "point_cloud";
  case SpaceKind::custom: return "custom";
  }
  return "custom";
}

inline SpaceKind space_kind_from_string(const std::string& s)
{
  if (s == "interval") return SpaceKind::interval;
  if (s == "circle") return SpaceKind::circle;
  if (s == "torus2d") return SpaceKind::torus2d;
  if (s == "point_cloud") return SpaceKind::point_cloud;
  if (s == "custom") return SpaceKind::custom;
  fail("unknown space kind '", s, "'");
}

struct WeightedEdge {
  std::size_t i = 0;
  std::size_t j = 0;
  double w = 0.0;
};

struct Neighbor {
  std::size_t index = 0;
  double length = 0.0;
};

/// A finite metric measure space with full-support reference measure.
///
/// `dist` is the complete distance matrix; `neighbors` is the stencil used by
/// every local (slope-type) operation. `spacing` is the grid step for the
/// regular builders and zero for point clouds. Objects are treated as
/// immutable once built.
struct FiniteMetricMeasureSpace {
  SpaceKind kind = SpaceKind::custom;
  double length = 0.0;
  double spacing = 0.0;
  Matrix dist;
  std::vector<double> measure;
  std::vector<std::vector<Neighbor>> neighbors;
  std::vector<std::vector<double>> labels;
  std::optional<std::vector<double>> weight;

  [[nodiscard]] std::size_t size() const { return measure.size(); }
  [[nodiscard]] double total_mass() const { return sum(measure); }

  /// Largest neighbor edge length at x (the finite slope scale r_x).
  [[nodiscard]] double max_edge(std::size_t x) const
  {
    double r = 0.0;
    for (const auto& nb : neighbors[x]) r = std::max(r, nb.length);
    return r;
  }

  [[nodiscard]] double min_edge() const
  {
    double r = std::numeric_limits<double>::infinity();
    for (const auto& row : neighbors)
      for (const auto& nb : row) r = std::min(r, nb.length);
    return r;
  }

  [[nodiscard]] std::vector<WeightedEdge> edges() const
  {
    std::vector<WeightedEdge> out;
    for (std::size_t i = 0; i < neighbors.size(); ++i)
      for (const auto& nb : neighbors[i])
        if (i < nb.index) out.push_back({i, nb.index, nb.length});
    return out;
  }
};

enum class MeasureRule { uniform, custom };

struct SpaceSpec {
  SpaceKind kind = SpaceKind::interval;
  std::size_t n = 2;
  double length = 1.0;
  std::vector<std::vector<double>> points;
  double connect_radius = 0.0;
  MeasureRule measure_rule = MeasureRule::uniform;
  std::vector<double> measure;
};

namespace detail {

struct UnionFind {
  std::vector<std::size_t> parent;
  explicit UnionFind(std::size_t n) : parent(n) { std::iota(parent.begin(), parent.end(), 0); }
  std::size_t find(std::size_t x)
  {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  }
  bool unite(std::size_t a, std::size_t b)
  {
    a = find(a);
    b = find(b);
    if (a == b) return false;
    parent[std::max(a, b)] = std::min(a, b);
    return true;
  }
};

inline std::vector<std::vector<std::size_t>> components(std::size_t n,
                                                        const std::vector<WeightedEdge>& edges)
{
  UnionFind uf(n);
  for (const auto& e : edges) uf.unite(e.i, e.j);
  std::map<std::size_t, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < n; ++i) groups[uf.find(i)].push_back(i);
  std::vector<std::vector<std::size_t>> out;
  for (auto& [root, members] : groups) out.push_back(std::move(members));
  return out;
}

inline std::string describe_components(const std::vector<std::vector<std::size_t>>& comps)
{
  std::ostringstream os;
  for (std::size_t c = 0; c < comps.size(); ++c) {
    os << (c ? " " : "") << "{";
    for (std::size_t k = 0; k < comps[c].size(); ++k) {
      if (k == 8) {
        os << ",...(" << comps[c].size() << " points)";
        break;
      }
      os << (k ? "," : "") << comps[c][k];
    }
    os << "}";
  }
  return os.str();
}

inline std::vector<double> dijkstra(std::size_t source,
                                    const std::vector<std::vector<Neighbor>>& adj)
{
  constexpr double inf = std::numeric_limits<double>::infinity();
  std::vector<double> d(adj.size(), inf);
  using Item = std::pair<double, std::size_t>;
  std::priority_queue<Item, std::vector<Item>, std::greater<>> pq;
  d[source] = 0.0;
  pq.emplace(0.0, source);
  while (!pq.empty()) {
    auto [du, u] = pq.top();
    pq.pop();
    if (du > d[u]) continue;
    for (const auto& nb : adj[u]) {
      double cand = du + nb.length;
      if (cand < d[nb.index]) {
        d[nb.index] = cand;
        pq.emplace(cand, nb.index);
      }
    }
  }
  return d;
}

inline std::vector<std::vector<Neighbor>> adjacency(std::size_t n,
                                                    const std::vector<WeightedEdge>& edges)
{
  // Parallel edges collapse to the shortest one.
  std::vector<std::map<std::size_t, double>> best(n);
  for (const auto& e : edges) {
    if (e.i == e.j) continue;
    for (auto [a, b] : {std::pair{e.i, e.j}, std::pair{e.j, e.i}}) {
      auto it = best[a].find(b);
      if (it == best[a].end() || e.w < it->second) best[a][b] = e.w;
    }
  }
  std::vector<std::vector<Neighbor>> adj(n);
  for (std::size_t i = 0; i < n; ++i)
    for (auto [j, w] : best[i]) adj[i].push_back({j, w});
  return adj;
}

} // namespace detail

/// All-pairs shortest-path distances of a connected weighted graph.
/// Floyd-Warshall up to 512 points, Dijkstra from every source above.
inline Matrix metric_closure(const std::vector<WeightedEdge>& edges, std::size_t n)
{
  if (n == 0) fail("metric_closure: empty graph");
  for (const auto& e : edges) {
    if (e.i >= n || e.j >= n) fail("metric_closure: edge (", e.i, ",", e.j, ") out of range");
    if (!(e.w > 0.0) || !std::isfinite(e.w))
      fail("metric_closure: edge (", e.i, ",", e.j, ") has nonpositive weight ", e.w);
  }
  auto comps = detail::components(n, edges);
  if (comps.size() > 1)
    fail("metric_closure: graph is disconnected, components ", detail::describe_components(comps));

  auto adj = detail::adjacency(n, edges);
  Matrix d(n, n, std::numeric_limits<double>::infinity());
  if (n <= 512) {
    for (std::size_t i = 0; i < n; ++i) {
      d(i, i) = 0.0;
      for (const auto& nb : adj[i]) d(i, nb.index) = std::min(d(i, nb.index), nb.length);
    }
    for (std::size_t k = 0; k < n; ++k)
      for (std::size_t i = 0; i < n; ++i) {
        const double dik = d(i, k);
        if (!std::isfinite(dik)) continue;
        for (std::size_t j = 0; j < n; ++j) {
          const double cand = dik + d(k, j);
          if (cand < d(i, j)) d(i, j) = cand;
        }
      }
  } else {
    for (std::size_t i = 0; i < n; ++i) {
      auto row = detail::dijkstra(i, adj);
      std::copy(row.begin(), row.end(), d.row(i).begin());
    }
  }
  // Symmetrize against rounding in the relaxation order.
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) d(i, j) = d(j, i) = std::min(d(i, j), d(j, i));
  return d;
}

/// Assemble a space from edges and a measure; the distance is the metric closure.
inline FiniteMetricMeasureSpace space_from_graph(const std::vector<WeightedEdge>& edges,
                                                 std::vector<double> measure,
                                                 SpaceKind kind = SpaceKind::custom)
{
  const std::size_t n = measure.size();
  for (std::size_t i = 0; i < n; ++i)
    if (!(measure[i] > 0.0) || !std::isfinite(measure[i]))
      fail("measure entry ", i, " is not strictly positive (", measure[i], ")");
  FiniteMetricMeasureSpace s;
  s.kind = kind;
  s.dist = metric_closure(edges, n);
  s.measure = std::move(measure);
  s.neighbors = detail::adjacency(n, edges);
  return s;
}

inline FiniteMetricMeasureSpace build_space(const SpaceSpec& spec)
{
  if (!(spec.length > 0.0) && spec.kind != SpaceKind::point_cloud)
    fail("space spec: length must be positive, got ", spec.length);

  std::vector<WeightedEdge> edges;
  std::vector<double> measure;
  std::vector<std::vector<double>> labels;
  double spacing = 0.0;
  std::size_t count = spec.n;

  switch (spec.kind) {
  case SpaceKind::interval: {
    if (spec.n < 2) fail("space spec: interval needs n >= 2, got ", spec.n);
    spacing = spec.length / static_cast<double>(spec.n - 1);
    for (std::size_t i = 0; i < spec.n; ++i) {
      labels.push_back({spacing * static_cast<double>(i)});
      measure.push_back((i == 0 || i + 1 == spec.n) ? 0.5 * spacing : spacing);
      if (i + 1 < spec.n) edges.push_back({i, i + 1, spacing});
    }
    break;
  }
  case SpaceKind::circle: {
    if (spec.n < 2) fail("space spec: circle needs n >= 2, got ", spec.n);
    spacing = spec.length / static_cast<double>(spec.n);
    for (std::size_t i = 0; i < spec.n; ++i) {
      labels.push_back({spacing * static_cast<double>(i)});
      measure.push_back(spacing);
      const std::size_t j = (i + 1) % spec.n;
      if (i < j || spec.n > 2) edges.push_back({i, j, spacing});
    }
    break;
  }
  case SpaceKind::torus2d: {
    if (spec.n < 2) fail("space spec: torus2d needs n >= 2, got ", spec.n);
    spacing = spec.length / static_cast<double>(spec.n);
    count = spec.n * spec.n;
    for (std::size_t r = 0; r < spec.n; ++r)
      for (std::size_t c = 0; c < spec.n; ++c) {
        const std::size_t id = r * spec.n + c;
        labels.push_back({spacing * static_cast<double>(c), spacing * static_cast<double>(r)});
        measure.push_back(spacing * spacing);
        edges.push_back({id, r * spec.n + (c + 1) % spec.n, spacing});
        edges.push_back({id, ((r + 1) % spec.n) * spec.n + c, spacing});
      }
    break;
  }
  case SpaceKind::point_cloud: {
    count = spec.points.size();
    if (count < 2) fail("space spec: point_cloud needs at least 2 points");
    if (!(spec.connect_radius > 0.0))
      fail("space spec: connect_radius must be positive, got ", spec.connect_radius);
    for (std::size_t i = 0; i < count; ++i) {
      if (spec.points[i].size() != spec.points[0].size())
        fail("space spec: point ", i, " has dimension ", spec.points[i].size(), ", expected ",
             spec.points[0].size());
      labels.push_back(spec.points[i]);
      measure.push_back(1.0 / static_cast<double>(count));
      for (std::size_t j = 0; j < i; ++j) {
        double d2 = 0.0;
        for (std::size_t k = 0; k < spec.points[i].size(); ++k) {
          const double dk = spec.points[i][k] - spec.points[j][k];
          d2 += dk * dk;
        }
        const double d = std::sqrt(d2);
        if (d == 0.0) fail("space spec: points ", j, " and ", i, " coincide");
        if (d <= spec.connect_radius) edges.push_back({j, i, d});
      }
    }
    auto comps = detail::components(count, edges);
    if (comps.size() > 1)
      fail("space spec: point cloud graph at connect_radius ", spec.connect_radius,
           " is disconnected, components ", detail::describe_components(comps));
    break;
  }
  case SpaceKind::custom: fail("space spec: kind 'custom' cannot be built from a spec");
  }

  if (spec.measure_rule == MeasureRule::custom) {
    if (spec.measure.size() != count)
      fail("space spec: custom measure has ", spec.measure.size(), " entries, expected ", count);
    measure = spec.measure;
  }

  auto space = space_from_graph(edges, std::move(measure), spec.kind);
  space.length = spec.length;
  space.spacing = spacing;
  space.labels = std::move(labels);
  return space;
}

struct Violation {
  std::string invariant;
  std::vector<std::size_t> where;
  double amount = 0.0;
  std::string message;
};

struct SpaceReport {
  std::vector<Violation> violations;
  [[nodiscard]] bool ok() const { return violations.empty(); }
};

/// Lists every violated space invariant, one entry per invariant with the
/// worst offender. Triangle inequalities are checked exhaustively up to 512
/// points and through the neighbor relaxation d(i,k) <= len(i,j) + d(j,k)
/// above that.
inline SpaceReport validate_space(const FiniteMetricMeasureSpace& s, double rel_tol = 1e-12)
{
  SpaceReport rep;
  const std::size_t n = s.size();
  auto add = [&](std::string inv, std::vector<std::size_t> where, double amount) {
    std::ostringstream os;
    os << inv << " violated at (";
    for (std::size_t k = 0; k < where.size(); ++k) os << (k ? "," : "") << where[k];
    os << "), amount " << amount;
    rep.violations.push_back({std::move(inv), std::move(where), amount, os.str()});
  };

  if (s.dist.rows() != n || s.dist.cols() != n) {
    add("dist_shape", {s.dist.rows(), s.dist.cols()}, static_cast<double>(n));
    return rep;
  }
  if (s.neighbors.size() != n) add("neighbors_shape", {s.neighbors.size()}, static_cast<double>(n));

  {
    double worst = 0.0;
    std::size_t wi = 0;
    bool bad = false;
    for (std::size_t i = 0; i < n; ++i)
      if (!(s.measure[i] > 0.0) && (!bad || s.measure[i] < worst)) {
        bad = true;
        worst = s.measure[i];
        wi = i;
      }
    if (bad) add("measure_positive", {wi}, worst);
  }
  if (s.weight && (s.weight->size() != n ||
                   std::any_of(s.weight->begin(), s.weight->end(), [](double v) { return v < 0; })))
    add("weight_nonnegative", {}, 0.0);

  {
    double worst = 0.0;
    std::size_t wi = 0;
    for (std::size_t i = 0; i < n; ++i)
      if (std::abs(s.dist(i, i)) > worst) {
        worst = std::abs(s.dist(i, i));
        wi = i;
      }
    if (worst > 0.0) add("zero_diagonal", {wi}, worst);
  }
  {
    double worst = 0.0;
    std::size_t wi = 0, wj = 0;
    double worst_pos = std::numeric_limits<double>::infinity();
    std::size_t pi = 0, pj = 0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j) {
        const double a = std::abs(s.dist(i, j) - s.dist(j, i));
        if (a > worst) {
          worst = a;
          wi = i;
          wj = j;
        }
        const double m = std::min(s.dist(i, j), s.dist(j, i));
        if (m < worst_pos) {
          worst_pos = m;
          pi = i;
          pj = j;
        }
      }
    if (worst > rel_tol * (1.0 + std::abs(s.dist(wi, wj)))) add("symmetry", {wi, wj}, worst);
    if (n > 1 && !(worst_pos > 0.0)) add("positive_off_diagonal", {pi, pj}, worst_pos);
  }
  {
    double worst = 0.0;
    std::vector<std::size_t> where;
    auto check = [&](std::size_t i, std::size_t j, std::size_t k, double via) {
      const double slack = s.dist(i, k) - via;
      if (slack > rel_tol * std::max(1.0, s.dist(i, k)) && slack > worst) {
        worst = slack;
        where = {i, j, k};
      }
    };
    if (n <= 512) {
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
          for (std::size_t k = 0; k < n; ++k) check(i, j, k, s.dist(i, j) + s.dist(j, k));
    } else {
      for (std::size_t i = 0; i < n; ++i)
        for (const auto& nb : s.neighbors[i])
          for (std::size_t k = 0; k < n; ++k) check(i, nb.index, k, nb.length + s.dist(nb.index, k));
    }
    if (!where.empty()) add("triangle", where, worst);
  }
  {
    double worst = 0.0;
    std::vector<std::size_t> where;
    for (std::size_t i = 0; i < s.neighbors.size() && i < n; ++i)
      for (const auto& nb : s.neighbors[i]) {
        if (nb.index >= n) {
          add("neighbor_index", {i, nb.index}, 0.0);
          continue;
        }
        const double a = std::abs(s.dist(i, nb.index) - nb.length);
        if (a > rel_tol * std::max(1.0, nb.length) && a > worst) {
          worst = a;
          where = {i, nb.index};
        }
      }
    if (!where.empty()) add("neighbor_length", where, worst);
  }
  return rep;
}

} // namespace mmslab
