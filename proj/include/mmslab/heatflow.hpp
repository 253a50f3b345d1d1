#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "mmslab/core.hpp"
#include "mmslab/fields.hpp"

namespace mmslab {

struct ResolventOptions {
  double rel_tol = 1e-12;
  std::size_t max_iterations = 0; // 0: 20 n + 200
};

struct ResolventResult {
  ScalarField u;
  double residual = 0.0; // ||M f - (M + lambda K) u||_2 / ||M f||_2
  std::size_t iterations = 0;
};

/// Solves (M + lambda K) u = M f with preconditioned conjugate gradients,
/// i.e. u - lambda Delta u = f in the m-weighted sense.
inline ResolventResult resolvent_solve(const DirichletForm& form, std::span<const double> f, double lambda,
                                       ResolventOptions opts = {})
{
  if (!(lambda >= 0.0)) fail("resolvent: lambda must be >= 0, got ", lambda);
  check_size(form, f, "resolvent");
  const std::size_t n = form.size();
  const auto& m = form.measure();
  ResolventResult out;
  out.u.assign(f.begin(), f.end());
  if (lambda == 0.0 || n == 0) return out;

  std::vector<double> diag(n);
  for (std::size_t x = 0; x < n; ++x) {
    double s = 0.0;
    for (const auto& l : form.links(x)) s += l.c;
    diag[x] = m[x] + lambda * s;
  }
  std::vector<double> b(n), r(n), z(n), p(n), Ap(n), Ku(n);
  for (std::size_t x = 0; x < n; ++x) b[x] = m[x] * f[x];
  const double bnorm = std::sqrt(dot(b, b));
  if (bnorm == 0.0) {
    std::fill(out.u.begin(), out.u.end(), 0.0);
    return out;
  }
  auto apply = [&](std::span<const double> v, std::span<double> res) {
    form.apply_stiffness(v, Ku);
    for (std::size_t x = 0; x < n; ++x) res[x] = m[x] * v[x] + lambda * Ku[x];
  };

  auto& u = out.u;
  apply(u, Ap);
  for (std::size_t x = 0; x < n; ++x) {
    r[x] = b[x] - Ap[x];
    z[x] = r[x] / diag[x];
  }
  p = z;
  double rz = dot(r, z);
  const std::size_t cap = opts.max_iterations ? opts.max_iterations : 20 * n + 200;
  double rnorm = std::sqrt(dot(r, r));
  std::size_t it = 0;
  while (rnorm > opts.rel_tol * bnorm && it < cap) {
    apply(p, Ap);
    const double alpha = rz / dot(p, Ap);
    for (std::size_t x = 0; x < n; ++x) {
      u[x] += alpha * p[x];
      r[x] -= alpha * Ap[x];
    }
    ++it;
    // Recompute the true residual periodically so drift cannot fake convergence.
    if (it % 50 == 0) {
      apply(u, Ap);
      for (std::size_t x = 0; x < n; ++x) r[x] = b[x] - Ap[x];
    }
    rnorm = std::sqrt(dot(r, r));
    if (rnorm <= opts.rel_tol * bnorm) break;
    for (std::size_t x = 0; x < n; ++x) z[x] = r[x] / diag[x];
    const double rz_new = dot(r, z);
    const double beta = rz_new / rz;
    rz = rz_new;
    for (std::size_t x = 0; x < n; ++x) p[x] = z[x] + beta * p[x];
  }
  // 1^T K = 0, so the exact solution keeps the m-mass of f; a constant shift
  // restores it without touching K u.
  const double shift = (sum(b) - dot(m, u)) / sum(m);
  for (double& x : u) x += shift;
  apply(u, Ap);
  for (std::size_t x = 0; x < n; ++x) r[x] = b[x] - Ap[x];
  out.residual = std::sqrt(dot(r, r)) / bnorm;
  out.iterations = it;
  if (out.residual > opts.rel_tol)
    fail("resolvent: CG stopped at relative residual ", out.residual, " after ", it, " iterations (lambda=",
         lambda, ")");
  return out;
}

inline ScalarField resolvent(const DirichletForm& form, std::span<const double> f, double lambda)
{
  return resolvent_solve(form, f, lambda).u;
}

inline double weighted_mass(const DirichletForm& form, std::span<const double> f)
{
  return dot(form.measure(), f);
}

inline double weighted_norm_sq(const DirichletForm& form, std::span<const double> f)
{
  double s = 0.0;
  for (std::size_t x = 0; x < f.size(); ++x) s += form.measure()[x] * f[x] * f[x];
  return s;
}

/// sum_x m(x) f(x) log f(x); +inf if some f(x) < 0.
inline double density_entropy(const DirichletForm& form, std::span<const double> f)
{
  double s = 0.0;
  for (std::size_t x = 0; x < f.size(); ++x) {
    if (f[x] < 0.0) return std::numeric_limits<double>::infinity();
    s += form.measure()[x] * xlogx(f[x]);
  }
  return s;
}

/// 4 sum_edges c (sqrt f_y - sqrt f_x)^2 = 8 C(sqrt f).
inline double fisher_density(const DirichletForm& form, std::span<const double> f)
{
  check_size(form, f, "fisher_density");
  double s = 0.0;
  for (const auto& e : form.edges()) {
    const double d = std::sqrt(std::max(f[e.j], 0.0)) - std::sqrt(std::max(f[e.i], 0.0));
    s += e.c * d * d;
  }
  return 4.0 * s;
}

/// -d/dt Ent(f_t) along the heat flow: sum_edges c (f_y - f_x)(log f_y - log f_x).
/// Requires f > 0.
inline double entropy_dissipation(const DirichletForm& form, std::span<const double> f)
{
  check_size(form, f, "entropy_dissipation");
  double s = 0.0;
  for (const auto& e : form.edges()) {
    if (!(f[e.i] > 0.0 && f[e.j] > 0.0)) fail("entropy_dissipation: density must be positive on edge (", e.i, ",", e.j, ")");
    s += e.c * (f[e.j] - f[e.i]) * (std::log(f[e.j]) - std::log(f[e.i]));
  }
  return s;
}

struct HeatStep {
  double mass = 0.0;
  double energy = 0.0;  // C(f)
  double entropy = 0.0; // sum m f log f, +inf when f has a negative entry
  double residual = 0.0;
  std::size_t iterations = 0;
};

struct FlowTrajectory {
  double lambda = 0.0;
  std::vector<double> times;
  std::vector<ScalarField> fields;
  std::vector<HeatStep> steps; // one per time, step 0 describes f0

  [[nodiscard]] std::size_t size() const { return times.size(); }
};

inline HeatStep describe_field(const DirichletForm& form, std::span<const double> f)
{
  HeatStep s;
  s.mass = weighted_mass(form, f);
  s.energy = dirichlet_energy(form, f);
  s.entropy = density_entropy(form, f);
  return s;
}

/// n_steps implicit Euler steps of size t_end / n_steps.
inline FlowTrajectory heat_flow(const DirichletForm& form, std::span<const double> f0, double t_end,
                                std::size_t n_steps)
{
  if (!(t_end > 0.0)) fail("heat_flow: t_end must be positive, got ", t_end);
  if (n_steps < 1) fail("heat_flow: n_steps must be >= 1");
  check_size(form, f0, "heat_flow");
  for (std::size_t i = 0; i < f0.size(); ++i)
    if (!std::isfinite(f0[i])) fail("heat_flow: f0(", i, ") is not finite");
  FlowTrajectory traj;
  traj.lambda = t_end / static_cast<double>(n_steps);
  traj.times.push_back(0.0);
  traj.fields.emplace_back(f0.begin(), f0.end());
  traj.steps.push_back(describe_field(form, f0));
  for (std::size_t k = 1; k <= n_steps; ++k) {
    auto r = resolvent_solve(form, traj.fields.back(), traj.lambda);
    HeatStep s = describe_field(form, r.u);
    s.residual = r.residual;
    s.iterations = r.iterations;
    traj.times.push_back(k == n_steps ? t_end : traj.lambda * static_cast<double>(k));
    traj.fields.push_back(std::move(r.u));
    traj.steps.push_back(s);
  }
  return traj;
}

struct FlowTolerances {
  double mass = 1e-10;
  double monotone = 1e-12;
  double degenerate = 1e-13;
};

struct FlowDiagnostics {
  FlowTolerances tol;
  std::vector<double> mass_drift;          // per step |mass_k - mass_{k-1}|
  double max_mass_drift = 0.0;
  std::vector<std::size_t> entropy_increases; // steps with E(f_k) > E(f_{k-1}) + tol
  double max_entropy_increase = 0.0;
  /// 1/2||f_{k-1}||^2 - 1/2||f_k||^2 - 2 lambda C(f_k), nonnegative per step.
  std::vector<double> quadratic_slack;
  double min_quadratic_slack = std::numeric_limits<double>::infinity();
  /// Same slack relative to 2 lambda C(f_k); vanishes as the step shrinks.
  double max_quadratic_relative = 0.0;
  /// Exact dissipation minus Fisher, >= 0; NaN marks a degenerate step.
  std::vector<double> dissipation_gap;
  std::size_t degenerate_steps = 0;

  [[nodiscard]] bool ok() const
  {
    return max_mass_drift <= tol.mass && entropy_increases.empty() && min_quadratic_slack >= -tol.monotone;
  }
};

/// Audits a trajectory. `e` is a convex entropy density with e(0) = 0; the
/// audited functional is E(f) = sum_x m(x) e(f(x)).
inline FlowDiagnostics flow_diagnostics(const DirichletForm& form, const FlowTrajectory& traj,
                                        const std::function<double(double)>& e, FlowTolerances tol = {})
{
  FlowDiagnostics d;
  d.tol = tol;
  const auto& m = form.measure();
  auto E = [&](const ScalarField& f) {
    double s = 0.0;
    for (std::size_t x = 0; x < f.size(); ++x) s += m[x] * e(f[x]);
    return s;
  };
  double prevE = traj.fields.empty() ? 0.0 : E(traj.fields[0]);
  for (std::size_t k = 0; k < traj.fields.size(); ++k) {
    const auto& f = traj.fields[k];
    const double lo = *std::min_element(f.begin(), f.end());
    if (lo <= tol.degenerate) {
      d.dissipation_gap.push_back(std::numeric_limits<double>::quiet_NaN());
      ++d.degenerate_steps;
    } else {
      d.dissipation_gap.push_back(entropy_dissipation(form, f) - fisher_density(form, f));
    }
    if (k == 0) continue;
    const auto& g = traj.fields[k - 1];
    const double drift = std::abs(weighted_mass(form, f) - weighted_mass(form, g));
    d.mass_drift.push_back(drift);
    d.max_mass_drift = std::max(d.max_mass_drift, drift);
    const double Ek = E(f);
    const double inc = Ek - prevE;
    d.max_entropy_increase = std::max(d.max_entropy_increase, inc);
    if (inc > tol.monotone * std::max(1.0, std::abs(prevE))) d.entropy_increases.push_back(k);
    prevE = Ek;
    const double lam = traj.times[k] - traj.times[k - 1];
    const double dissip = 2.0 * lam * dirichlet_energy(form, f);
    const double slack = 0.5 * weighted_norm_sq(form, g) - 0.5 * weighted_norm_sq(form, f) - dissip;
    d.quadratic_slack.push_back(slack);
    const double scale = std::max(1.0, weighted_norm_sq(form, g));
    d.min_quadratic_slack = std::min(d.min_quadratic_slack, slack / scale);
    if (dissip > 0.0) d.max_quadratic_relative = std::max(d.max_quadratic_relative, std::abs(slack) / dissip);
  }
  if (!std::isfinite(d.min_quadratic_slack)) d.min_quadratic_slack = 0.0;
  return d;
}

/// The a-priori bound (t/n) C(f0) on ||H_t f0 - J^n f0||^2_m.
inline double resolvent_error_bound(const DirichletForm& form, std::span<const double> f0, double t_end,
                                    std::size_t n_steps)
{
  return t_end / static_cast<double>(n_steps) * dirichlet_energy(form, f0);
}

} // namespace mmslab
