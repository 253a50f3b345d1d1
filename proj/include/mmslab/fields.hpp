#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <vector>

#include "mmslab/core.hpp"
#include "mmslab/space.hpp"

namespace mmslab {

enum class SlopeKind { two_sided, ascending, descending };

/// Finite-scale slope over the declared neighbor stencil:
///   two_sided  max |f(y)-f(x)| / d(x,y)
///   ascending  max (f(y)-f(x))^+ / d(x,y)
///   descending max (f(y)-f(x))^- / d(x,y)
/// Points without neighbors get 0.
inline ScalarField local_slope(const FiniteMetricMeasureSpace& space, std::span<const double> f,
                               SlopeKind kind)
{
  if (f.size() != space.size()) fail("local_slope: field has ", f.size(), " values, space has ", space.size());
  ScalarField out(f.size(), 0.0);
  for (std::size_t x = 0; x < f.size(); ++x) {
    double best = 0.0;
    for (const auto& nb : space.neighbors[x]) {
      const double diff = f[nb.index] - f[x];
      double q = 0.0;
      switch (kind) {
      case SlopeKind::two_sided: q = std::abs(diff); break;
      case SlopeKind::ascending: q = std::max(diff, 0.0); break;
      case SlopeKind::descending: q = std::max(-diff, 0.0); break;
      }
      best = std::max(best, q / nb.length);
    }
    out[x] = best;
  }
  return out;
}

/// Global Lipschitz constant: max over pairs of |f(i)-f(j)| / d(i,j).
inline double lipschitz_constant(const FiniteMetricMeasureSpace& space, std::span<const double> f)
{
  if (f.size() != space.size()) fail("lipschitz_constant: size mismatch");
  double lip = 0.0;
  for (std::size_t i = 0; i < f.size(); ++i)
    for (std::size_t j = i + 1; j < f.size(); ++j)
      lip = std::max(lip, std::abs(f[i] - f[j]) / space.dist(i, j));
  return lip;
}

/// A node path along neighbor edges.
struct NodePath {
  std::vector<std::size_t> nodes;
  std::vector<double> lengths; // one per consecutive pair

  [[nodiscard]] double length() const { return sum(lengths); }
};

using PathFamily = std::vector<NodePath>;

/// Builds a path from a node sequence, looking up edge lengths in the stencil.
inline NodePath make_path(const FiniteMetricMeasureSpace& space, std::vector<std::size_t> nodes)
{
  NodePath p;
  for (std::size_t k = 0; k + 1 < nodes.size(); ++k) {
    const auto& nbs = space.neighbors[nodes[k]];
    auto it = std::find_if(nbs.begin(), nbs.end(),
                           [&](const Neighbor& nb) { return nb.index == nodes[k + 1]; });
    if (it == nbs.end()) fail("make_path: nodes ", nodes[k], " and ", nodes[k + 1], " are not neighbors");
    p.lengths.push_back(it->length);
  }
  p.nodes = std::move(nodes);
  return p;
}

inline PathFamily single_edge_paths(const FiniteMetricMeasureSpace& space)
{
  PathFamily out;
  for (std::size_t i = 0; i < space.size(); ++i)
    for (const auto& nb : space.neighbors[i]) out.push_back({{i, nb.index}, {nb.length}});
  return out;
}

struct PathViolation {
  std::size_t path = 0;
  double excess = 0.0; // |f(end)-f(start)| - integral of G along the path
};

/// Upper-gradient audit: flags paths where |f(end) - f(start)| exceeds the
/// trapezoid path integral of G by more than `tol`.
inline std::vector<PathViolation> upper_gradient_violations(const FiniteMetricMeasureSpace& space,
                                                            std::span<const double> f,
                                                            std::span<const double> G,
                                                            const PathFamily& paths,
                                                            double tol = 1e-12)
{
  if (f.size() != space.size() || G.size() != space.size())
    fail("upper_gradient_violations: size mismatch");
  std::vector<PathViolation> out;
  for (std::size_t p = 0; p < paths.size(); ++p) {
    const auto& path = paths[p];
    if (path.nodes.empty()) continue;
    if (path.lengths.size() + 1 != path.nodes.size())
      fail("upper_gradient_violations: path ", p, " has inconsistent edge lengths");
    double integral = 0.0;
    for (std::size_t k = 0; k < path.lengths.size(); ++k)
      integral += 0.5 * (G[path.nodes[k]] + G[path.nodes[k + 1]]) * path.lengths[k];
    const double excess = std::abs(f[path.nodes.back()] - f[path.nodes.front()]) - integral;
    if (excess > tol) out.push_back({p, excess});
  }
  return out;
}

struct Conductance {
  std::size_t i = 0;
  std::size_t j = 0;
  double c = 0.0;
};

/// Symmetric edge conductances plus the reference measure. This is the
/// discrete stand-in for Cheeger's energy: no relaxation is performed, the
/// carre du champ of the form plays the role of the squared minimal relaxed
/// gradient.
class DirichletForm {
public:
  DirichletForm() = default;

  DirichletForm(std::vector<Conductance> edges, std::vector<double> measure)
      : measure_(std::move(measure)), adj_(measure_.size())
  {
    const std::size_t n = measure_.size();
    std::map<std::pair<std::size_t, std::size_t>, double> merged;
    for (const auto& e : edges) {
      if (e.i >= n || e.j >= n) fail("DirichletForm: edge (", e.i, ",", e.j, ") out of range");
      if (e.i == e.j) fail("DirichletForm: self-loop at ", e.i);
      if (!(e.c >= 0.0) || !std::isfinite(e.c))
        fail("DirichletForm: conductance on (", e.i, ",", e.j, ") must be >= 0, got ", e.c);
      merged[{std::min(e.i, e.j), std::max(e.i, e.j)}] += e.c;
    }
    for (std::size_t i = 0; i < n; ++i)
      if (!(measure_[i] > 0.0)) fail("DirichletForm: measure entry ", i, " is not positive");
    for (auto [key, c] : merged) {
      edges_.push_back({key.first, key.second, c});
      adj_[key.first].push_back({key.second, c});
      adj_[key.second].push_back({key.first, c});
    }
    std::vector<WeightedEdge> live;
    for (const auto& e : edges_)
      if (e.c > 0.0) live.push_back({e.i, e.j, 1.0});
    if (n > 0 && detail::components(n, live).size() > 1)
      fail("DirichletForm: conductance graph is disconnected, components ",
           detail::describe_components(detail::components(n, live)));
  }

  [[nodiscard]] std::size_t size() const { return measure_.size(); }
  [[nodiscard]] const std::vector<double>& measure() const { return measure_; }
  [[nodiscard]] const std::vector<Conductance>& edges() const { return edges_; }

  struct Link {
    std::size_t index;
    double c;
  };
  [[nodiscard]] const std::vector<Link>& links(std::size_t x) const { return adj_[x]; }

  /// Same conductances, different reference measure.
  [[nodiscard]] DirichletForm with_measure(std::vector<double> measure) const
  {
    if (measure.size() != size()) fail("DirichletForm::with_measure: size mismatch");
    return DirichletForm(edges_, std::move(measure));
  }

  /// Stiffness action (K f)(x) = sum_y c(x,y) (f(x) - f(y)).
  void apply_stiffness(std::span<const double> f, std::span<double> out) const
  {
    for (std::size_t x = 0; x < size(); ++x) {
      double s = 0.0;
      for (const auto& l : adj_[x]) s += l.c * (f[x] - f[l.index]);
      out[x] = s;
    }
  }

  [[nodiscard]] double max_degree() const
  {
    double d = 0.0;
    for (std::size_t x = 0; x < size(); ++x) {
      double s = 0.0;
      for (const auto& l : adj_[x]) s += l.c;
      d = std::max(d, s / measure_[x]);
    }
    return d;
  }

private:
  std::vector<double> measure_;
  std::vector<Conductance> edges_;
  std::vector<std::vector<Link>> adj_;
};

/// Conductances matched to the space's quadrature so that the Laplacian is
/// second-order consistent on grids: c = cell_volume / spacing^2 on the regular
/// builders (1/dx in 1-D, 1 on the 2-D torus), and c = (m_i + m_j) / (2 len^2)
/// on point clouds and custom graphs.
inline DirichletForm natural_form(const FiniteMetricMeasureSpace& space)
{
  std::vector<Conductance> edges;
  for (const auto& e : space.edges()) {
    double c = 0.0;
    switch (space.kind) {
    case SpaceKind::interval:
    case SpaceKind::circle: c = 1.0 / space.spacing; break;
    case SpaceKind::torus2d: c = 1.0; break;
    default: c = 0.5 * (space.measure[e.i] + space.measure[e.j]) / (e.w * e.w); break;
    }
    edges.push_back({e.i, e.j, c});
  }
  return DirichletForm(std::move(edges), space.measure);
}

inline void check_size(const DirichletForm& form, std::span<const double> f, const char* who)
{
  if (f.size() != form.size()) fail(who, ": field has ", f.size(), " values, form has ", form.size());
}

/// C(f) = 1/2 sum over unordered edges of c(i,j) (f(j) - f(i))^2.
inline double dirichlet_energy(const DirichletForm& form, std::span<const double> f)
{
  check_size(form, f, "dirichlet_energy");
  double e = 0.0;
  for (const auto& ed : form.edges()) {
    const double d = f[ed.j] - f[ed.i];
    e += ed.c * d * d;
  }
  return 0.5 * e;
}

/// Gamma(f)(x) = 1/(2 m(x)) sum_y c(x,y) (f(y) - f(x))^2, normalized so that
/// 1/2 sum_x m(x) Gamma(f)(x) = C(f).
inline ScalarField carre_du_champ(const DirichletForm& form, std::span<const double> f)
{
  check_size(form, f, "carre_du_champ");
  ScalarField out(f.size(), 0.0);
  for (std::size_t x = 0; x < f.size(); ++x) {
    double s = 0.0;
    for (const auto& l : form.links(x)) {
      const double d = f[l.index] - f[x];
      s += l.c * d * d;
    }
    out[x] = s / (2.0 * form.measure()[x]);
  }
  return out;
}

/// Delta f(x) = 1/m(x) sum_y c(x,y) (f(y) - f(x)); minus the m-weighted
/// gradient of C.
inline ScalarField laplacian(const DirichletForm& form, std::span<const double> f)
{
  check_size(form, f, "laplacian");
  ScalarField out(f.size(), 0.0);
  form.apply_stiffness(f, out);
  for (std::size_t x = 0; x < f.size(); ++x) out[x] = -out[x] / form.measure()[x];
  return out;
}

} // namespace mmslab
