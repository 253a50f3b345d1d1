#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <deque>
#include <limits>
#include <numeric>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "mmslab/core.hpp"
#include "mmslab/fields.hpp"
#include "mmslab/heatflow.hpp"
#include "mmslab/space.hpp"
#include "mmslab/transport.hpp"

namespace mmslab {

/// Ent(mu | m) = sum_x mu(x) log(mu(x) / m(x)), with 0 log 0 = 0.
inline double entropy(const FiniteMetricMeasureSpace& space, const ProbabilityMeasure& mu)
{
  if (mu.size() != space.size()) fail("entropy: measure size mismatch");
  double s = 0.0;
  for (std::size_t x = 0; x < mu.size(); ++x)
    if (mu[x] > 0.0) s += mu[x] * std::log(mu[x] / space.measure[x]);
  return s;
}

/// F(rho) = 8 C(sqrt rho) for mu = rho m.
inline double fisher(const DirichletForm& form, const ProbabilityMeasure& mu)
{
  if (mu.size() != form.size()) fail("fisher: measure size mismatch");
  return fisher_density(form, mu.density(form.measure()));
}

/// Descending slope of the entropy, computed as sqrt(Fisher).
inline double entropy_slope(const DirichletForm& form, const ProbabilityMeasure& mu)
{
  return std::sqrt(fisher(form, mu));
}

namespace detail {

inline double log_sum_exp(std::span<const double> v)
{
  double mx = -std::numeric_limits<double>::infinity();
  for (double x : v) mx = std::max(mx, x);
  if (!std::isfinite(mx)) return mx;
  double s = 0.0;
  for (double x : v) s += std::exp(x - mx);
  return mx + std::log(s);
}

inline double median_offdiag_sq(const Matrix& dist)
{
  std::vector<double> v;
  for (std::size_t i = 0; i < dist.rows(); ++i)
    for (std::size_t j = i + 1; j < dist.cols(); ++j) v.push_back(dist(i, j) * dist(i, j));
  if (v.empty()) return 1.0;
  auto mid = v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2);
  std::nth_element(v.begin(), mid, v.end());
  return *mid;
}

} // namespace detail

struct JkoOptions {
  double eps_start_factor = 1e-1; // times median d^2
  double eps_min_factor = 1e-3;   // times min_edge^2
  double anneal = 0.5;
  std::size_t sweeps_per_stage = 200;
  double stage_tol = 1e-9;
  double marginal_tol = 1e-10;
  double first_order_tol = 1e-8;
  std::vector<double> support_thresholds{1e-2, 1e-4, 1e-6, 1e-8, 1e-11};
  std::size_t mirror_iterations = 2000;
  double mirror_step = 0.5;
  bool skip_polish = false; // forces the first-order fallback
};

struct JkoDiagnostics {
  double h = 0.0;
  double objective = 0.0;      // W2^2/(2h) + Ent at the returned measure
  double dual = 0.0;           // dual lower bound certified by the returned potential
  double gap = 0.0;
  double previous_objective = 0.0; // Ent(mu_prev), the objective of the trivial competitor
  double w2 = 0.0;
  double marginal_violation = 0.0;
  double dual_infeasibility = 0.0;
  double first_order_residual = 0.0;
  std::string method;
  std::size_t stages = 0;
  std::size_t sweeps = 0;
  std::size_t mirror_iterations = 0;
  std::size_t repairs = 0;
  double final_eps = 0.0;
};

struct JkoStepResult {
  ProbabilityMeasure next;
  Coupling plan;
  ScalarField phi;
  ScalarField psi; // nu = m exp(-psi - 1)
  JkoDiagnostics diag;
};

namespace detail {

/// Solver for min_nu W2^2(mu, nu)/(2h) + Ent(nu | m), phrased over couplings
/// with first marginal mu and cost K = d^2/(2h). The dual objective for a row
/// potential phi is <phi, mu> - sum_j m_j exp(-phi^c_j - 1).
class JkoSolver {
public:
  JkoSolver(const FiniteMetricMeasureSpace& space, const ProbabilityMeasure& mu, double h, JkoOptions opts)
      : space_(space), mu_(mu), h_(h), opts_(std::move(opts)), n_(space.size()), K_(n_, n_)
  {
    for (std::size_t i = 0; i < n_; ++i)
      for (std::size_t j = 0; j < n_; ++j) K_(i, j) = space.dist(i, j) * space.dist(i, j) / (2.0 * h);
    logm_.resize(n_);
    for (std::size_t i = 0; i < n_; ++i) logm_[i] = std::log(space.measure[i]);
    for (std::size_t i = 0; i < n_; ++i)
      if (mu_[i] > 0.0) rows_.push_back(i);
  }

  JkoStepResult solve()
  {
    JkoStepResult out;
    out.diag.h = h_;
    const double emin = space_.min_edge();
    const double eps0 = opts_.eps_start_factor * median_offdiag_sq(space_.dist) / (2.0 * h_);
    const double eps_min = opts_.eps_min_factor * emin * emin / (2.0 * h_);
    f_.assign(n_, 0.0);
    g_.assign(n_, 0.0);
    std::deque<std::string> trace;
    if (!opts_.skip_polish) {
      double eps = std::max(eps0, eps_min);
      for (;;) {
        ++out.diag.stages;
        out.diag.sweeps += scaling_stage(eps);
        out.diag.final_eps = eps;
        for (double tau : opts_.support_thresholds) {
          std::string why;
          if (polish(eps, tau, out, why)) {
            out.diag.method = "entropic+forest";
            return finish(std::move(out));
          }
          std::ostringstream os;
          os << "eps " << eps << " tau " << tau << ": " << why;
          trace.push_back(os.str());
          if (trace.size() > 6) trace.pop_front();
        }
        if (eps <= eps_min) break;
        eps = std::max(eps * opts_.anneal, eps_min);
      }
    }
    if (mirror(out, trace)) {
      out.diag.method = "mirror";
      return finish(std::move(out));
    }
    std::ostringstream os;
    os << "jko_step: inner solver did not reach tolerance (h=" << h_ << ", n=" << n_ << "); trace:";
    for (const auto& s : trace) os << " [" << s << "]";
    throw Error(os.str());
  }

private:
  /// Alternating exact maximization over f (rows) and g (columns) at fixed eps.
  std::size_t scaling_stage(double eps)
  {
    std::vector<double> buf(n_);
    std::size_t sweep = 0;
    for (; sweep < opts_.sweeps_per_stage; ++sweep) {
      for (std::size_t i : rows_) {
        const auto krow = K_.row(i);
        for (std::size_t j = 0; j < n_; ++j) buf[j] = logm_[j] + (g_[j] - krow[j]) / eps;
        f_[i] = eps * (std::log(mu_[i]) - logm_[i]) - eps * log_sum_exp(buf);
      }
      double change = 0.0;
      std::vector<double> rb(rows_.size());
      for (std::size_t j = 0; j < n_; ++j) {
        const auto kcol = K_.row(j); // K is symmetric
        for (std::size_t r = 0; r < rows_.size(); ++r) {
          const std::size_t i = rows_[r];
          rb[r] = logm_[i] + (f_[i] - kcol[i]) / eps;
        }
        const double S = log_sum_exp(rb);
        const double gn = -eps * (S + 1.0) / (1.0 + eps);
        change = std::max(change, std::abs(gn - g_[j]));
        g_[j] = gn;
      }
      // The global additive mode contracts only by 1/(1+eps) per sweep; fix it
      // exactly so the target column mass is 1.
      for (std::size_t j = 0; j < n_; ++j) buf[j] = logm_[j] - g_[j] - 1.0;
      const double a = log_sum_exp(buf);
      for (double& x : g_) x += a;
      if (change <= opts_.stage_tol * (1.0 + eps)) break;
    }
    return sweep + 1;
  }

  struct ForestEdge {
    std::size_t i, j;
  };

  struct ForestSolution {
    std::vector<double> pot;  // rows 0..n-1, columns n..2n-1
    std::vector<double> flow; // per forest edge
    std::vector<std::size_t> comp_of;
    std::vector<std::vector<std::pair<std::size_t, std::size_t>>> adj;
  };

  /// Potentials from the forest edges, per-component constants from mass
  /// balance, then the flows by leaf peeling.
  bool solve_forest(const std::vector<ForestEdge>& forest, ForestSolution& fs, std::string& why) const
  {
    const std::size_t N = 2 * n_;
    fs.adj.assign(N, {});
    for (std::size_t id = 0; id < forest.size(); ++id) {
      fs.adj[forest[id].i].push_back({n_ + forest[id].j, id});
      fs.adj[n_ + forest[id].j].push_back({forest[id].i, id});
    }
    for (std::size_t j = 0; j < n_; ++j)
      if (fs.adj[n_ + j].empty()) {
        why = "column " + std::to_string(j) + " uncovered";
        return false;
      }
    for (std::size_t i : rows_)
      if (fs.adj[i].empty()) {
        why = "row " + std::to_string(i) + " uncovered";
        return false;
      }
    fs.pot.assign(N, 0.0);
    fs.comp_of.assign(N, N);
    std::vector<std::vector<std::size_t>> comps;
    for (std::size_t s = 0; s < N; ++s) {
      if (fs.comp_of[s] != N || fs.adj[s].empty()) continue;
      comps.emplace_back();
      std::vector<std::size_t> stack{s};
      fs.comp_of[s] = comps.size() - 1;
      while (!stack.empty()) {
        const std::size_t a = stack.back();
        stack.pop_back();
        comps.back().push_back(a);
        for (auto [b, id] : fs.adj[a]) {
          if (fs.comp_of[b] != N) continue;
          fs.comp_of[b] = comps.size() - 1;
          fs.pot[b] = K_(forest[id].i, forest[id].j) - fs.pot[a];
          stack.push_back(b);
        }
      }
    }
    std::vector<double> buf;
    for (const auto& c : comps) {
      double row_mass = 0.0;
      buf.clear();
      for (std::size_t a : c) {
        if (a < n_) row_mass += mu_[a];
        else buf.push_back(logm_[a - n_] - fs.pot[a] - 1.0);
      }
      if (!(row_mass > 0.0) || buf.empty()) {
        why = "component without supply or demand";
        return false;
      }
      const double shift = std::log(row_mass) - log_sum_exp(buf);
      for (std::size_t a : c) fs.pot[a] += (a < n_) ? shift : -shift;
    }

    std::vector<double> bal(N, 0.0);
    for (std::size_t i : rows_) bal[i] = mu_[i];
    for (std::size_t j = 0; j < n_; ++j) bal[n_ + j] = space_.measure[j] * std::exp(-fs.pot[n_ + j] - 1.0);
    std::vector<std::size_t> deg(N);
    for (std::size_t a = 0; a < N; ++a) deg[a] = fs.adj[a].size();
    std::vector<char> used(forest.size(), 0);
    fs.flow.assign(forest.size(), 0.0);
    std::vector<std::size_t> leaves;
    for (std::size_t a = 0; a < N; ++a)
      if (deg[a] == 1) leaves.push_back(a);
    while (!leaves.empty()) {
      const std::size_t a = leaves.back();
      leaves.pop_back();
      if (deg[a] != 1) continue;
      std::size_t b = 0, id = 0;
      for (auto [nb, eid] : fs.adj[a])
        if (!used[eid]) {
          b = nb;
          id = eid;
          break;
        }
      used[id] = 1;
      // Row side sends bal[a]; a column leaf absorbs it.
      fs.flow[id] = bal[a];
      bal[b] -= bal[a];
      bal[a] = 0.0;
      --deg[a];
      if (--deg[b] == 1) leaves.push_back(b);
    }
    return true;
  }

  /// Forest edges on the path between two nodes of the same tree, in order from a to b.
  std::vector<std::size_t> forest_path(const ForestSolution& fs, std::size_t a, std::size_t b) const
  {
    const std::size_t N = 2 * n_;
    std::vector<std::size_t> via(N, N), prev(N, N);
    std::vector<std::size_t> queue{a};
    prev[a] = a;
    for (std::size_t q = 0; q < queue.size() && prev[b] == N; ++q)
      for (auto [c, id] : fs.adj[queue[q]])
        if (prev[c] == N) {
          prev[c] = queue[q];
          via[c] = id;
          queue.push_back(c);
        }
    std::vector<std::size_t> path;
    for (std::size_t c = b; c != a; c = prev[c]) path.push_back(via[c]);
    std::reverse(path.begin(), path.end());
    return path;
  }

  /// Seeds a spanning forest from the entropic plan, then runs an active-set
  /// repair: negative flows leave, dual violations enter. Accepts only an
  /// exactly feasible primal-dual pair.
  bool polish(double eps, double tau, JkoStepResult& out, std::string& why)
  {
    struct Weighted {
      std::size_t i, j;
      double w;
    };
    std::vector<Weighted> cand;
    for (std::size_t i : rows_) {
      const auto krow = K_.row(i);
      for (std::size_t j = 0; j < n_; ++j) {
        const double w = std::exp(logm_[i] + logm_[j] + (f_[i] + g_[j] - krow[j]) / eps) / mu_[i];
        if (w >= tau) cand.push_back({i, j, w});
      }
    }
    // Far columns carry mass below any threshold; keep their heaviest entry.
    for (std::size_t j = 0; j < n_; ++j) {
      Weighted best{0, j, -1.0};
      for (std::size_t i : rows_) {
        const double w = std::exp(logm_[i] + logm_[j] + (f_[i] + g_[j] - K_(i, j)) / eps) / mu_[i];
        if (w > best.w) best = {i, j, w};
      }
      if (best.w >= 0.0 && best.w < tau) cand.push_back(best);
    }
    std::sort(cand.begin(), cand.end(), [](const Weighted& a, const Weighted& b) {
      if (a.w != b.w) return a.w > b.w;
      return a.i != b.i ? a.i < b.i : a.j < b.j;
    });
    UnionFind uf(2 * n_);
    std::vector<ForestEdge> forest;
    for (const auto& e : cand)
      if (uf.unite(e.i, n_ + e.j)) forest.push_back({e.i, e.j});

    ForestSolution fs;
    double kscale = 1.0;
    for (double x : K_.data()) kscale = std::max(kscale, 1.0 + x);
    const std::size_t max_repairs = 10 * n_ + 100;
    std::size_t repairs = 0;
    for (;; ++repairs) {
      if (!solve_forest(forest, fs, why)) return false;
      if (repairs == max_repairs) {
        why = "active-set repair did not settle after " + std::to_string(max_repairs) + " changes";
        return false;
      }
      std::size_t worst = forest.size();
      double min_flow = -1e-14;
      for (std::size_t id = 0; id < forest.size(); ++id)
        if (fs.flow[id] < min_flow) {
          min_flow = fs.flow[id];
          worst = id;
        }
      if (worst < forest.size()) {
        forest.erase(forest.begin() + static_cast<std::ptrdiff_t>(worst));
        continue;
      }
      std::size_t bi = n_, bj = n_;
      double viol = 1e-13 * kscale;
      for (std::size_t i : rows_)
        for (std::size_t j = 0; j < n_; ++j) {
          const double v = fs.pot[i] + fs.pot[n_ + j] - K_(i, j);
          if (v > viol) {
            viol = v;
            bi = i;
            bj = j;
          }
        }
      if (bi == n_) break;
      if (fs.comp_of[bi] != fs.comp_of[n_ + bj]) {
        forest.push_back({bi, bj});
        continue;
      }
      // Same tree: the entering edge closes a cycle. Pushing flow onto it
      // drains every other path edge starting with the one at column bj.
      const auto path = forest_path(fs, n_ + bj, bi);
      std::size_t leave = path[0];
      for (std::size_t k = 0; k < path.size(); k += 2)
        if (fs.flow[path[k]] < fs.flow[leave]) leave = path[k];
      forest[leave] = {bi, bj};
    }

    std::vector<double> phi(n_, 0.0), psi(n_);
    for (std::size_t i : rows_) phi[i] = fs.pot[i];
    for (std::size_t j = 0; j < n_; ++j) psi[j] = fs.pot[n_ + j];
    fill_empty_rows(phi, psi);
    const auto phic = c_transform(K_, phi);
    double fo = 0.0;
    for (std::size_t j = 0; j < n_; ++j) fo = std::max(fo, std::abs(psi[j] - phic[j]));
    if (fo > opts_.first_order_tol) {
      std::ostringstream os;
      os << "dual infeasible by " << fo;
      why = os.str();
      return false;
    }
    Matrix plan(n_, n_);
    for (std::size_t id = 0; id < forest.size(); ++id) plan(forest[id].i, forest[id].j) = std::max(fs.flow[id], 0.0);
    out.plan = Coupling::from_plan(std::move(plan));
    out.phi = std::move(phi);
    out.psi = std::move(psi);
    out.diag.repairs += repairs;
    return true;
  }

  /// Mirror descent on nu with exact transport duals as the subgradient of
  /// the W2 term.
  bool mirror(JkoStepResult& out, std::deque<std::string>& trace)
  {
    std::vector<double> nu(mu_.weights);
    for (std::size_t j = 0; j < n_; ++j) nu[j] = 0.5 * nu[j] + 0.5 * space_.measure[j] / space_.total_mass();
    std::vector<double> lognu(n_);
    double best_gap = std::numeric_limits<double>::infinity();
    for (std::size_t it = 0; it < opts_.mirror_iterations; ++it) {
      const auto r = solve_transport(mu_.weights, nu, K_);
      double ent = 0.0;
      for (std::size_t j = 0; j < n_; ++j) ent += xlogx(nu[j]) - nu[j] * logm_[j];
      const double P = r.cert.primal + ent;
      std::vector<double> phi = r.cert.phi;
      fill_empty_rows(phi, r.cert.psi);
      const double D = dual_value(phi);
      best_gap = std::min(best_gap, P - D);
      if (P - D <= opts_.first_order_tol * (1.0 + std::abs(P))) {
        out.plan = r.plan;
        out.plan.first.assign(mu_.weights.begin(), mu_.weights.end());
        out.plan.second = nu;
        out.phi = phi;
        out.psi.resize(n_);
        for (std::size_t j = 0; j < n_; ++j) out.psi[j] = logm_[j] - std::log(nu[j]) - 1.0;
        out.diag.mirror_iterations = it;
        return true;
      }
      for (std::size_t j = 0; j < n_; ++j) {
        const double grad = r.cert.psi[j] + std::log(nu[j]) - logm_[j] + 1.0;
        lognu[j] = std::log(nu[j]) - opts_.mirror_step * grad;
      }
      const double z = log_sum_exp(lognu);
      for (std::size_t j = 0; j < n_; ++j) nu[j] = std::exp(lognu[j] - z);
      out.diag.mirror_iterations = it + 1;
    }
    std::ostringstream os;
    os << "mirror descent: best gap " << best_gap << " after " << opts_.mirror_iterations << " iterations";
    trace.push_back(os.str());
    return false;
  }

  /// Rows without mass get the tightest feasible potential.
  void fill_empty_rows(std::vector<double>& phi, std::span<const double> psi) const
  {
    for (std::size_t i = 0; i < n_; ++i)
      if (!(mu_[i] > 0.0)) {
        double best = std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < n_; ++j) best = std::min(best, K_(i, j) - psi[j]);
        phi[i] = best;
      }
  }

  double dual_value(std::span<const double> phi) const
  {
    const auto phic = c_transform(K_, phi);
    double s = 0.0;
    for (std::size_t i : rows_) s += mu_[i] * phi[i];
    for (std::size_t j = 0; j < n_; ++j) s -= space_.measure[j] * std::exp(-phic[j] - 1.0);
    return s;
  }

  JkoStepResult finish(JkoStepResult out)
  {
    auto& d = out.diag;
    const Matrix& P = out.plan.plan;
    std::vector<double> nu(n_, 0.0), row(n_, 0.0);
    double transport = 0.0, w2sq = 0.0;
    for (std::size_t i = 0; i < n_; ++i)
      for (std::size_t j = 0; j < n_; ++j) {
        nu[j] += P(i, j);
        row[i] += P(i, j);
        transport += K_(i, j) * P(i, j);
        w2sq += space_.dist(i, j) * space_.dist(i, j) * P(i, j);
      }
    d.marginal_violation = max_abs_diff(row, mu_.weights);
    const double total = sum(nu);
    for (double& x : nu) x /= total;
    double ent = 0.0;
    for (std::size_t j = 0; j < n_; ++j) ent += xlogx(nu[j]) - nu[j] * logm_[j];
    d.objective = transport + ent;
    d.dual = dual_value(out.phi);
    d.gap = d.objective - d.dual;
    d.w2 = std::sqrt(std::max(w2sq, 0.0));
    d.previous_objective = entropy(space_, mu_);
    const auto phic = c_transform(K_, out.phi);
    d.dual_infeasibility = 0.0;
    d.first_order_residual = 0.0;
    for (std::size_t j = 0; j < n_; ++j)
      d.first_order_residual =
          std::max(d.first_order_residual, std::abs(phic[j] - out.psi[j]));
    for (std::size_t i = 0; i < n_; ++i)
      for (std::size_t j = 0; j < n_; ++j)
        if (P(i, j) > 0.0) d.dual_infeasibility = std::max(d.dual_infeasibility, std::abs(out.phi[i] + phic[j] - K_(i, j)));
    if (d.marginal_violation > opts_.marginal_tol)
      fail("jko_step: marginal violation ", d.marginal_violation, " exceeds ", opts_.marginal_tol);
    out.plan.first.assign(mu_.weights.begin(), mu_.weights.end());
    out.plan.second = nu;
    out.next = ProbabilityMeasure(std::move(nu));
    return out;
  }

  const FiniteMetricMeasureSpace& space_;
  const ProbabilityMeasure& mu_;
  double h_;
  JkoOptions opts_;
  std::size_t n_;
  Matrix K_;
  std::vector<double> logm_;
  std::vector<std::size_t> rows_;
  std::vector<double> f_, g_;
};

} // namespace detail

/// One minimizing-movement step: argmin_nu W2^2(nu, mu_prev)/(2h) + Ent(nu).
inline JkoStepResult jko_step(const FiniteMetricMeasureSpace& space, const ProbabilityMeasure& mu_prev, double h,
                              const JkoOptions& opts = {})
{
  if (!(h > 0.0)) fail("jko_step: h must be positive, got ", h);
  if (mu_prev.size() != space.size()) fail("jko_step: measure size mismatch");
  return detail::JkoSolver(space, mu_prev, h, opts).solve();
}

struct JkoRecord {
  double time = 0.0;
  double w2 = 0.0;
  double entropy = 0.0;
  double fisher = 0.0;
  JkoDiagnostics diag;
};

struct JkoTrajectory {
  double h = 0.0;
  std::vector<ProbabilityMeasure> measures; // index 0 is mu0
  std::vector<JkoRecord> records;           // one per measure

  [[nodiscard]] MeasureCurve as_curve() const
  {
    MeasureCurve c;
    for (const auto& r : records) c.times.push_back(r.time);
    c.measures = measures;
    return c;
  }
};

inline JkoTrajectory jko_flow(const FiniteMetricMeasureSpace& space, const ProbabilityMeasure& mu0, double h,
                              double t_end, const JkoOptions& opts = {})
{
  if (!(h > 0.0)) fail("jko_flow: h must be positive, got ", h);
  if (!(t_end > 0.0)) fail("jko_flow: t_end must be positive, got ", t_end);
  const auto steps = static_cast<std::size_t>(std::ceil(t_end / h - 1e-9));
  const auto form = natural_form(space);
  JkoTrajectory traj;
  traj.h = h;
  traj.measures.push_back(mu0);
  traj.records.push_back({0.0, 0.0, entropy(space, mu0), fisher(form, mu0), {}});
  for (std::size_t k = 1; k <= steps; ++k) {
    auto r = jko_step(space, traj.measures.back(), h, opts);
    JkoRecord rec;
    rec.time = h * static_cast<double>(k);
    rec.w2 = r.diag.w2;
    rec.entropy = entropy(space, r.next);
    rec.fisher = fisher(form, r.next);
    rec.diag = r.diag;
    traj.measures.push_back(std::move(r.next));
    traj.records.push_back(rec);
  }
  return traj;
}

struct SlopeOracleResult {
  double value = 0.0;
  std::size_t best = 0;
  std::size_t candidates = 0;
};

/// Lower bound sup over candidates of (Ent(mu) - Ent(nu))^+ / W2(mu, nu).
/// Candidates within 1e-15 in total variation of mu are skipped.
inline SlopeOracleResult slope_oracle(const FiniteMetricMeasureSpace& space, const ProbabilityMeasure& mu,
                                      const std::vector<ProbabilityMeasure>& candidates)
{
  SlopeOracleResult r;
  const double e0 = entropy(space, mu);
  for (std::size_t k = 0; k < candidates.size(); ++k) {
    const auto& nu = candidates[k];
    if (total_variation(mu, nu) <= 1e-15) continue;
    ++r.candidates;
    const double drop = e0 - entropy(space, nu);
    if (drop <= 0.0) continue;
    const double w = w2_distance(space, mu, nu);
    if (w > 0.0 && drop / w > r.value) {
      r.value = drop / w;
      r.best = k;
    }
  }
  return r;
}

/// Default candidate family: uniformly random simplex points, their mixtures
/// with mu, and one-step JKO outputs on a geometric ladder of h.
inline std::vector<ProbabilityMeasure> slope_candidates(const FiniteMetricMeasureSpace& space,
                                                        const ProbabilityMeasure& mu, std::size_t samples,
                                                        std::uint64_t seed, std::size_t jko_rungs = 16)
{
  std::mt19937_64 rng(seed);
  std::exponential_distribution<double> expo(1.0);
  std::vector<ProbabilityMeasure> out;
  const std::size_t n = space.size();
  for (std::size_t s = 0; s < samples; ++s) {
    std::vector<double> w(n);
    for (double& x : w) x = expo(rng);
    const double z = sum(w);
    const double a = std::pow(0.5, static_cast<double>(s % 12));
    for (std::size_t i = 0; i < n; ++i) w[i] = (1.0 - a) * mu[i] + a * w[i] / z;
    const double t = sum(w);
    for (double& x : w) x /= t;
    out.emplace_back(std::move(w));
  }
  double diam = 0.0;
  for (double d : space.dist.data()) diam = std::max(diam, d);
  for (std::size_t k = 0; k < jko_rungs; ++k) {
    const double frac = jko_rungs > 1 ? static_cast<double>(k) / static_cast<double>(jko_rungs - 1) : 0.0;
    const double h = diam * diam * std::pow(10.0, -4.0 + 3.0 * frac);
    out.push_back(jko_step(space, mu, h).next);
  }
  return out;
}

struct EdeReport {
  double entropy_drop = 0.0;   // Ent(mu_0) - Ent(mu_T)
  double speed_term = 0.0;     // 1/2 int |mu'|^2
  double slope_term = 0.0;     // 1/2 int slope^2, trapezoid
  double residual = 0.0;       // speed_term + slope_term - entropy_drop
  double relative_residual = 0.0;
  std::vector<double> speeds;
  std::vector<double> fisher_values;
  /// |mu'|^2 / mean Fisher over each interval; the key velocity estimate asks <= 1.
  std::vector<double> lekey_ratio;
  std::size_t lekey_violations = 0;
  double lekey_tol = 0.05;
};

inline EdeReport ede_report(const FiniteMetricMeasureSpace& space, const DirichletForm& form,
                            const MeasureCurve& curve, double lekey_tol = 0.05)
{
  curve.validate();
  if (curve.times.size() < 3) fail("ede_report: curve needs at least 3 times, got ", curve.times.size());
  EdeReport r;
  r.lekey_tol = lekey_tol;
  r.speeds = metric_speed(space, curve);
  for (const auto& mu : curve.measures) r.fisher_values.push_back(fisher(form, mu));
  r.entropy_drop = entropy(space, curve.measures.front()) - entropy(space, curve.measures.back());
  for (std::size_t k = 0; k + 1 < curve.times.size(); ++k) {
    const double dt = curve.times[k + 1] - curve.times[k];
    const double fbar = 0.5 * (r.fisher_values[k] + r.fisher_values[k + 1]);
    r.speed_term += 0.5 * r.speeds[k] * r.speeds[k] * dt;
    r.slope_term += 0.5 * fbar * dt;
    const double v2 = r.speeds[k] * r.speeds[k];
    const double ratio = fbar > 0.0 ? v2 / fbar : (v2 > 0.0 ? std::numeric_limits<double>::infinity() : 0.0);
    r.lekey_ratio.push_back(ratio);
    if (ratio > 1.0 + lekey_tol) ++r.lekey_violations;
  }
  r.residual = r.speed_term + r.slope_term - r.entropy_drop;
  const double scale = std::abs(r.entropy_drop) > 0.0 ? std::abs(r.entropy_drop) : r.speed_term + r.slope_term;
  r.relative_residual = scale > 0.0 ? r.residual / scale : 0.0;
  return r;
}

/// G_gamma(mu) = Ent(mu) - Ent(gamma_# mu).
inline double g_gamma(const FiniteMetricMeasureSpace& space, const Coupling& plan, const ProbabilityMeasure& mu)
{
  return entropy(space, mu) - entropy(space, push_forward_plan(plan, mu));
}

} // namespace mmslab
