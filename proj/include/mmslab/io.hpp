#pragma once

#include <cmath>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "mmslab/entropyflow.hpp"
#include "mmslab/heatflow.hpp"
#include "mmslab/hopflax.hpp"
#include "mmslab/space.hpp"
#include "mmslab/transport.hpp"

namespace mmslab::io {

using json = nlohmann::ordered_json;

inline json read_json(const std::string& path)
{
  std::ifstream in(path);
  if (!in) fail("cannot open '", path, "'");
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    fail(path, ": ", e.what());
  }
}

inline void write_json(const std::string& path, const json& j)
{
  std::ofstream out(path);
  if (!out) fail("cannot write '", path, "'");
  out << j.dump(2) << '\n';
}

/// NaN and infinities have no JSON spelling; they become null.
inline json number(double x) { return std::isfinite(x) ? json(x) : json(nullptr); }

inline json numbers(std::span<const double> v)
{
  json a = json::array();
  for (double x : v) a.push_back(number(x));
  return a;
}

inline std::vector<double> to_vector(const json& j, const char* what)
{
  const json& a = (j.is_object() && j.contains("values")) ? j.at("values") : j;
  if (!a.is_array()) fail(what, ": expected a JSON array of numbers");
  std::vector<double> v;
  for (const auto& x : a) {
    if (!x.is_number()) fail(what, ": non-numeric entry ", x.dump());
    v.push_back(x.get<double>());
  }
  return v;
}

// ---- spaces ----

inline json to_json(const FiniteMetricMeasureSpace& s)
{
  json j;
  j["kind"] = to_string(s.kind);
  j["n"] = s.size();
  j["length"] = s.length;
  j["spacing"] = s.spacing;
  j["measure"] = numbers(s.measure);
  json edges = json::array();
  for (const auto& e : s.edges()) edges.push_back({{"i", e.i}, {"j", e.j}, {"w", e.w}});
  j["edges"] = std::move(edges);
  if (!s.labels.empty()) j["labels"] = s.labels;
  if (s.weight) j["weight"] = numbers(*s.weight);
  return j;
}

/// Reads {kind, n, length, measure, edges} or {..., dist}. With a full
/// distance matrix the neighbor graph is its 1-skeleton: pairs with no
/// intermediate point on a shortest route.
inline FiniteMetricMeasureSpace space_from_json(const json& j)
{
  if (!j.is_object()) fail("space: expected an object");
  if (!j.contains("measure")) fail("space: missing key 'measure'");
  auto measure = to_vector(j.at("measure"), "space.measure");
  const SpaceKind kind = space_kind_from_string(j.value("kind", std::string("custom")));
  auto read_extras = [&](FiniteMetricMeasureSpace s) {
    s.length = j.value("length", 0.0);
    s.spacing = j.value("spacing", 0.0);
    if (j.contains("labels")) s.labels = j.at("labels").get<std::vector<std::vector<double>>>();
    if (j.contains("weight")) s.weight = to_vector(j.at("weight"), "space.weight");
    return s;
  };
  if (j.contains("n") && j.at("n").get<std::size_t>() != measure.size())
    fail("space: n = ", j.at("n").get<std::size_t>(), " but measure has ", measure.size(), " entries");
  std::vector<WeightedEdge> edges;
  if (j.contains("edges")) {
    for (const auto& e : j.at("edges")) {
      if (!e.contains("i") || !e.contains("j") || !e.contains("w")) fail("space.edges: each edge needs i, j, w");
      edges.push_back({e.at("i").get<std::size_t>(), e.at("j").get<std::size_t>(), e.at("w").get<double>()});
    }
  } else if (j.contains("dist")) {
    const auto& d = j.at("dist");
    const std::size_t n = measure.size();
    if (!d.is_array() || d.size() != n) fail("space.dist: expected ", n, " rows");
    Matrix D(n, n);
    for (std::size_t a = 0; a < n; ++a) {
      const auto row = to_vector(d[a], "space.dist row");
      if (row.size() != n) fail("space.dist: row ", a, " has ", row.size(), " entries");
      for (std::size_t b = 0; b < n; ++b) D(a, b) = row[b];
    }
    for (std::size_t a = 0; a < n; ++a)
      for (std::size_t b = a + 1; b < n; ++b) {
        bool direct = true;
        for (std::size_t k = 0; k < n && direct; ++k)
          if (k != a && k != b && D(a, k) + D(k, b) <= D(a, b) * (1.0 + 1e-12)) direct = false;
        if (direct) edges.push_back({a, b, D(a, b)});
      }
    auto s = space_from_graph(edges, measure, kind);
    const double err = max_abs_diff(s.dist.data(), D.data());
    if (err > 1e-9 * (1.0 + *std::max_element(D.data().begin(), D.data().end())))
      fail("space.dist: not a metric (closure differs by ", err, ")");
    s.dist = D;
    return read_extras(std::move(s));
  } else {
    fail("space: needs 'edges' or 'dist'");
  }
  return read_extras(space_from_graph(edges, std::move(measure), kind));
}

inline json to_json(const SpaceReport& r)
{
  json v = json::array();
  for (const auto& x : r.violations)
    v.push_back({{"invariant", x.invariant}, {"where", x.where}, {"amount", number(x.amount)}, {"message", x.message}});
  return {{"ok", r.ok()}, {"violations", std::move(v)}};
}

// ---- forms ----

inline json to_json(const DirichletForm& f)
{
  json edges = json::array();
  for (const auto& e : f.edges()) edges.push_back({{"i", e.i}, {"j", e.j}, {"c", e.c}});
  return {{"measure", numbers(f.measure())}, {"edges", std::move(edges)}};
}

inline DirichletForm form_from_json(const json& j)
{
  if (!j.is_object() || !j.contains("measure") || !j.contains("edges"))
    fail("form: expected {measure, edges:[{i,j,c}]}");
  std::vector<Conductance> c;
  for (const auto& e : j.at("edges")) {
    if (!e.contains("i") || !e.contains("j") || !e.contains("c")) fail("form.edges: each edge needs i, j, c");
    c.push_back({e.at("i").get<std::size_t>(), e.at("j").get<std::size_t>(), e.at("c").get<double>()});
  }
  return DirichletForm(std::move(c), to_vector(j.at("measure"), "form.measure"));
}

// ---- transport ----

inline json plan_to_json(const Coupling& c, double support_tol = 0.0)
{
  json entries = json::array();
  for (std::size_t i = 0; i < c.plan.rows(); ++i)
    for (std::size_t j = 0; j < c.plan.cols(); ++j)
      if (c.plan(i, j) > support_tol) entries.push_back({{"i", i}, {"j", j}, {"mass", c.plan(i, j)}});
  return {{"rows", c.plan.rows()}, {"cols", c.plan.cols()}, {"entries", std::move(entries)}};
}

inline Coupling plan_from_json(const json& j)
{
  Matrix p(j.at("rows").get<std::size_t>(), j.at("cols").get<std::size_t>());
  for (const auto& e : j.at("entries")) {
    const auto i = e.at("i").get<std::size_t>(), k = e.at("j").get<std::size_t>();
    if (i >= p.rows() || k >= p.cols()) fail("plan: entry (", i, ",", k, ") out of range");
    p(i, k) += e.at("mass").get<double>();
  }
  return Coupling::from_plan(std::move(p));
}

inline json to_json(const DualCertificate& c)
{
  return {{"phi", numbers(c.phi)},
          {"psi", numbers(c.psi)},
          {"primal", number(c.primal)},
          {"dual", number(c.dual)},
          {"gap", number(c.gap)}};
}

// ---- trajectories ----

inline json to_json(const FlowTrajectory& t)
{
  json steps = json::array();
  for (std::size_t k = 0; k < t.size(); ++k) {
    const auto& s = t.steps[k];
    steps.push_back({{"t", t.times[k]},
                     {"mass", number(s.mass)},
                     {"energy", number(s.energy)},
                     {"entropy", number(s.entropy)},
                     {"residual", number(s.residual)},
                     {"iterations", s.iterations},
                     {"field", numbers(t.fields[k])}});
  }
  return {{"lambda", t.lambda}, {"steps", std::move(steps)}};
}

inline json to_json(const FlowDiagnostics& d)
{
  return {{"ok", d.ok()},
          {"max_mass_drift", number(d.max_mass_drift)},
          {"entropy_increases", d.entropy_increases},
          {"max_entropy_increase", number(d.max_entropy_increase)},
          {"min_quadratic_slack", number(d.min_quadratic_slack)},
          {"max_quadratic_relative", number(d.max_quadratic_relative)},
          {"degenerate_steps", d.degenerate_steps},
          {"mass_drift", numbers(d.mass_drift)},
          {"dissipation_gap", numbers(d.dissipation_gap)}};
}

inline json to_json(const JkoDiagnostics& d)
{
  return {{"method", d.method},
          {"objective", number(d.objective)},
          {"dual", number(d.dual)},
          {"gap", number(d.gap)},
          {"previous_objective", number(d.previous_objective)},
          {"marginal_violation", number(d.marginal_violation)},
          {"dual_infeasibility", number(d.dual_infeasibility)},
          {"first_order_residual", number(d.first_order_residual)},
          {"stages", d.stages},
          {"sweeps", d.sweeps},
          {"repairs", d.repairs},
          {"mirror_iterations", d.mirror_iterations}};
}

inline json to_json(const JkoTrajectory& t)
{
  json steps = json::array();
  for (std::size_t k = 0; k < t.measures.size(); ++k) {
    const auto& r = t.records[k];
    json s{{"t", r.time}, {"w2", number(r.w2)}, {"entropy", number(r.entropy)}, {"fisher", number(r.fisher)}};
    if (k > 0) s["solver"] = to_json(r.diag);
    s["measure"] = numbers(t.measures[k].weights);
    steps.push_back(std::move(s));
  }
  return {{"h", t.h}, {"steps", std::move(steps)}};
}

inline json to_json(const HopfLaxResult& r, double t)
{
  return {{"t", t}, {"q", numbers(r.q)}, {"d_minus", numbers(r.d_minus)}, {"d_plus", numbers(r.d_plus)}};
}

inline json to_json(const SubsolutionReport& r)
{
  json flagged = json::array();
  for (auto x : r.flagged_points) flagged.push_back(x);
  return {{"t", r.t},
          {"ok", r.ok()},
          {"min_pair_slack", number(r.min_pair_slack)},
          {"pair_violations", r.pair_violations.size()},
          {"flagged_points", std::move(flagged)},
          {"slope_residual", numbers(r.slope_residual)}};
}

} // namespace mmslab::io
