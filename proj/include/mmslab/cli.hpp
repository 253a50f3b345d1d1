#pragma once

#include <filesystem>
#include <iostream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>

#include "mmslab/harness.hpp"

namespace mmslab::cli {

using json = io::json;

enum ExitCode : int { ok = 0, checks_failed = 1, usage_error = 2 };

struct Globals {
  std::optional<std::uint64_t> seed;
  std::size_t threads = 0; // 0: hardware concurrency
  std::string out_dir;

  [[nodiscard]] std::size_t workers() const
  {
    return threads ? threads : std::max(1u, std::thread::hardware_concurrency());
  }

  /// Relative output paths land under --out-dir.
  [[nodiscard]] std::string place(const std::string& path) const
  {
    if (path.empty() || out_dir.empty() || std::filesystem::path(path).is_absolute()) return path;
    std::filesystem::create_directories(out_dir);
    return (std::filesystem::path(out_dir) / path).string();
  }
};

/// Reads a field from a JSON file (array or {"values": [...]}) or from an
/// inline expression `expr:<text>` evaluated at the point labels.
inline ScalarField load_field(const std::string& arg, const FiniteMetricMeasureSpace* space, const char* what)
{
  if (arg.rfind("expr:", 0) == 0) {
    if (!space || space->labels.empty()) fail(what, ": expressions need a space with coordinates");
    return evaluate_on(Expression(arg.substr(5)), space->labels);
  }
  return io::to_vector(io::read_json(arg), what);
}

/// Measures accept {"weights": [...]}, {"density": [...]} (normalized against
/// m), a bare weight array, or `expr:<density>`.
inline ProbabilityMeasure load_measure(const std::string& arg, const FiniteMetricMeasureSpace& space, const char* what)
{
  if (arg.rfind("expr:", 0) == 0) return harness::measure_from_expression(space, arg.substr(5));
  const json j = io::read_json(arg);
  std::vector<double> w;
  if (j.is_object() && j.contains("density")) {
    const auto rho = io::to_vector(j.at("density"), what);
    if (rho.size() != space.size()) fail(what, ": density has ", rho.size(), " entries, space has ", space.size());
    return ProbabilityMeasure::from_density(rho, space.measure);
  }
  w = io::to_vector(j.is_object() && j.contains("weights") ? j.at("weights") : j, what);
  if (w.size() != space.size()) fail(what, ": measure has ", w.size(), " entries, space has ", space.size());
  return ProbabilityMeasure(std::move(w), 1e-9);
}

inline void emit(const Globals& g, const std::string& out, const json& j, std::ostream& os)
{
  if (out.empty()) {
    os << j.dump(2) << '\n';
  } else {
    const auto path = g.place(out);
    io::write_json(path, j);
    os << "wrote " << path << '\n';
  }
}

inline json checks_json(const std::vector<harness::Check>& cs)
{
  harness::Report r;
  r.checks = cs;
  return r.to_json()["checks"];
}

inline int verdict(const std::vector<harness::Check>& cs, std::ostream& os)
{
  bool all = true;
  for (const auto& c : cs) {
    if (!c.passed) os << "check failed: " << c.name << " = " << c.value << " (" << c.relation << " " << c.tolerance << ")\n";
    all = all && c.passed;
  }
  return all ? ok : checks_failed;
}

/// Entry point shared by the executable and the tests.
inline int run(const std::vector<std::string>& args, std::ostream& os = std::cout, std::ostream& es = std::cerr)
{
  CLI::App app{"Finite metric measure space laboratory", "mmslab"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--seed", g.seed, "Master seed for all randomness")->check(CLI::NonNegativeNumber);
  app.add_option("--threads", g.threads, "Worker threads (0: all cores)");
  app.add_option("--out-dir", g.out_dir, "Directory for relative output paths and scenario reports");

  int code = ok;
  auto sub = [&](CLI::App* parent, const char* name, const char* desc) {
    auto* s = parent->add_subcommand(name, desc);
    s->fallthrough();
    return s;
  };

  // space build / validate
  auto* space = sub(&app, "space", "Build or validate a finite metric measure space");
  space->require_subcommand(1);
  SpaceSpec spec;
  std::string kind = "circle", points_file, space_out, form_out, validate_file, validate_out;
  auto* build = sub(space, "build", "Build a space from a kind and size");
  build->add_option("--kind", kind, "interval | circle | torus2d | point_cloud")->capture_default_str();
  build->add_option("--n", spec.n, "Number of points (per side for torus2d)")->capture_default_str();
  build->add_option("--length", spec.length, "Side length")->capture_default_str();
  build->add_option("--points", points_file, "Point cloud coordinates, JSON array of arrays");
  build->add_option("--connect-radius", spec.connect_radius, "Point cloud neighbor radius");
  build->add_option("--out", space_out, "Write the space JSON here");
  build->add_option("--form-out", form_out, "Also write the natural Dirichlet form");
  build->callback([&] {
    spec.kind = space_kind_from_string(kind);
    if (!points_file.empty()) spec.points = io::read_json(points_file).get<std::vector<std::vector<double>>>();
    const auto s = build_space(spec);
    const auto rep = validate_space(s);
    emit(g, space_out, io::to_json(s), os);
    if (!form_out.empty()) emit(g, form_out, io::to_json(natural_form(s)), os);
    if (!rep.ok()) es << io::to_json(rep).dump(2) << '\n';
    code = rep.ok() ? ok : checks_failed;
  });
  auto* validate = sub(space, "validate", "Check the metric and measure invariants of a space file");
  validate->add_option("file", validate_file, "Space JSON")->required()->check(CLI::ExistingFile);
  validate->add_option("--report", validate_out, "Write the report here");
  validate->callback([&] {
    const auto j = io::read_json(validate_file);
    SpaceReport rep;
    try {
      rep = validate_space(io::space_from_json(j));
    } catch (const Error& e) {
      // Construction enforces most invariants itself; report those as failures too.
      rep.violations.push_back({"construction", {}, 0.0, e.what()});
    }
    emit(g, validate_out, io::to_json(rep), os);
    code = rep.ok() ? ok : checks_failed;
  });

  // hopflax
  std::string hl_space, hl_field, hl_report;
  std::vector<double> hl_times;
  double hl_tol = 1e-12;
  auto* hl = sub(&app, "hopflax", "Exact Hopf-Lax semigroup with subsolution audit");
  hl->add_option("--space", hl_space, "Space JSON")->required()->check(CLI::ExistingFile);
  hl->add_option("--field", hl_field, "Field JSON or expr:<text>")->required();
  hl->add_option("--times", hl_times, "Comma separated times")->required()->delimiter(',');
  hl->add_option("--tol", hl_tol, "Audit tolerance")->capture_default_str();
  hl->add_option("--report", hl_report, "Write the report here");
  hl->callback([&] {
    const auto s = io::space_from_json(io::read_json(hl_space));
    const auto f = load_field(hl_field, &s, "field");
    if (f.size() != s.size()) fail("field has ", f.size(), " entries, space has ", s.size());
    json results = json::array();
    bool all = true;
    for (double t : hl_times) {
      const auto sub_rep = hj_subsolution_report(s, f, t, hl_tol);
      all = all && sub_rep.ok();
      results.push_back({{"semigroup", io::to_json(hopf_lax(s, f, t), t)}, {"audit", io::to_json(sub_rep)}});
    }
    emit(g, hl_report, {{"ok", all}, {"times", std::move(results)}}, os);
    code = all ? ok : checks_failed;
  });

  // ot solve
  std::string ot_space, ot_mu, ot_nu, ot_out;
  double ot_tol = 1e-9;
  auto* ot = sub(&app, "ot", "Exact optimal transport");
  ot->require_subcommand(1);
  auto* solve = sub(ot, "solve", "Solve W2 with a certified dual");
  solve->add_option("--space", ot_space, "Space JSON")->required()->check(CLI::ExistingFile);
  solve->add_option("--mu", ot_mu, "Source measure (JSON or expr:<density>)")->required();
  solve->add_option("--nu", ot_nu, "Target measure (JSON or expr:<density>)")->required();
  solve->add_option("--tol", ot_tol, "Certificate tolerance")->capture_default_str();
  solve->add_option("--out", ot_out, "Write the result here");
  solve->callback([&] {
    const auto s = io::space_from_json(io::read_json(ot_space));
    const auto r = solve_w2(s, load_measure(ot_mu, s, "mu"), load_measure(ot_nu, s, "nu"));
    const auto a = audit_certificate(half_squared_cost(s), r);
    std::vector<harness::Check> cs{{"relative_gap", a.relative_gap, ot_tol, "<=", a.relative_gap <= ot_tol, {}},
                                   {"slackness", a.max_slackness, ot_tol, "<=", a.max_slackness <= ot_tol, {}},
                                   {"dual_infeasibility", a.max_infeasibility, ot_tol, "<=", a.max_infeasibility <= ot_tol, {}}};
    emit(g, ot_out,
         {{"w2", r.w2}, {"iterations", r.iterations}, {"plan", io::plan_to_json(r.plan)}, {"certificate", io::to_json(r.cert)},
          {"checks", checks_json(cs)}},
         os);
    code = verdict(cs, es);
  });

  // heat run
  std::string heat_form, heat_f0, heat_out;
  double heat_t = 0.0;
  std::size_t heat_steps = 100;
  auto* heat = sub(&app, "heat", "Heat flow by implicit Euler");
  heat->require_subcommand(1);
  auto* heat_run = sub(heat, "run", "Run the flow and audit it");
  heat_run->add_option("--form", heat_form, "Dirichlet form JSON")->required()->check(CLI::ExistingFile);
  heat_run->add_option("--f0", heat_f0, "Initial field JSON")->required()->check(CLI::ExistingFile);
  heat_run->add_option("--t", heat_t, "Final time")->required();
  heat_run->add_option("--steps", heat_steps, "Number of steps")->capture_default_str();
  heat_run->add_option("--out", heat_out, "Write the trajectory here");
  heat_run->callback([&] {
    const auto form = io::form_from_json(io::read_json(heat_form));
    const auto f0 = load_field(heat_f0, nullptr, "f0");
    const auto traj = heat_flow(form, f0, heat_t, heat_steps);
    const bool positive = std::all_of(f0.begin(), f0.end(), [](double x) { return x >= 0.0; });
    const auto d = positive ? flow_diagnostics(form, traj, [](double x) { return xlogx(x); })
                            : flow_diagnostics(form, traj, [](double x) { return x * x; });
    emit(g, heat_out,
         {{"entropy_density", positive ? "x log x" : "x^2"}, {"diagnostics", io::to_json(d)}, {"trajectory", io::to_json(traj)}},
         os);
    if (!d.ok()) es << "heat flow audit failed\n";
    code = d.ok() ? ok : checks_failed;
  });

  // jko run
  std::string jko_space, jko_mu0, jko_out;
  double jko_h = 0.0, jko_t = 0.0, jko_tol = 1e-8;
  auto* jko = sub(&app, "jko", "Entropic JKO minimizing movements");
  jko->require_subcommand(1);
  auto* jko_run = sub(jko, "run", "Run the scheme with per-step certificates");
  jko_run->add_option("--space", jko_space, "Space JSON")->required()->check(CLI::ExistingFile);
  jko_run->add_option("--mu0", jko_mu0, "Initial measure (JSON or expr:<density>)")->required();
  jko_run->add_option("--step", jko_h, "Step size h")->required();
  jko_run->add_option("--t", jko_t, "Final time")->required();
  jko_run->add_option("--tol", jko_tol, "Per-step gap tolerance")->capture_default_str();
  jko_run->add_option("--out", jko_out, "Write the trajectory here");
  jko_run->callback([&] {
    const auto s = io::space_from_json(io::read_json(jko_space));
    const auto traj = jko_flow(s, load_measure(jko_mu0, s, "mu0"), jko_h, jko_t);
    double gap = 0.0, rise = 0.0;
    for (std::size_t k = 1; k < traj.records.size(); ++k) {
      gap = std::max(gap, traj.records[k].diag.gap);
      rise = std::max(rise, traj.records[k].entropy - traj.records[k - 1].entropy);
    }
    std::vector<harness::Check> cs{{"max_step_gap", gap, jko_tol, "<=", gap <= jko_tol, {}},
                                   {"entropy_increase", rise, 1e-12, "<=", rise <= 1e-12, {}}};
    emit(g, jko_out, {{"checks", checks_json(cs)}, {"trajectory", io::to_json(traj)}}, os);
    code = verdict(cs, es);
  });

  // entropy report
  std::string ent_space, ent_form, ent_mu, ent_out;
  std::size_t ent_samples = 48;
  auto* ent = sub(&app, "entropy", "Entropy, Fisher information and slope estimates");
  ent->require_subcommand(1);
  auto* ent_rep = sub(ent, "report", "Evaluate the functionals at a measure");
  ent_rep->add_option("--space", ent_space, "Space JSON")->required()->check(CLI::ExistingFile);
  ent_rep->add_option("--form", ent_form, "Dirichlet form JSON (default: natural form)");
  ent_rep->add_option("--mu", ent_mu, "Measure (JSON or expr:<density>)")->required();
  ent_rep->add_option("--samples", ent_samples, "Random slope candidates")->capture_default_str();
  ent_rep->add_option("--out", ent_out, "Write the report here");
  ent_rep->callback([&] {
    const auto s = io::space_from_json(io::read_json(ent_space));
    const auto form = ent_form.empty() ? natural_form(s) : io::form_from_json(io::read_json(ent_form));
    const auto mu = load_measure(ent_mu, s, "mu");
    const auto cand = slope_candidates(s, mu, ent_samples, g.seed.value_or(harness::kDefaultSeed));
    const auto o = slope_oracle(s, mu, cand);
    const double slope = entropy_slope(form, mu);
    const double lower = -std::log(s.total_mass());
    const double e = entropy(s, mu);
    std::vector<harness::Check> cs{{"oracle_minus_slope", o.value - slope, 1e-6, "<=", o.value <= slope + 1e-6, {}},
                                   {"entropy_lower_bound", e - lower, -1e-12, ">=", e - lower >= -1e-12, {}}};
    emit(g, ent_out,
         {{"entropy", e},
          {"fisher", fisher(form, mu)},
          {"entropy_slope", slope},
          {"slope_oracle", o.value},
          {"oracle_candidates", o.candidates},
          {"checks", checks_json(cs)}},
         os);
    code = verdict(cs, es);
  });

  // run scenarios
  std::vector<std::string> files;
  auto* run = sub(&app, "run", "Run scenario files and write report.json and series.csv for each");
  run->add_option("scenarios", files, "Scenario TOML files")->required()->check(CLI::ExistingFile);
  run->callback([&] {
    std::vector<harness::Scenario> scs;
    for (const auto& f : files) scs.push_back(harness::load_scenario(f));
    const std::size_t outer = std::min(g.workers(), scs.size());
    harness::RunOptions opt;
    opt.seed = g.seed;
    opt.out_dir = g.out_dir;
    opt.threads = std::max<std::size_t>(1, g.workers() / std::max<std::size_t>(1, outer));
    const auto reports = harness::parallel_map(scs.size(), outer, [&](std::size_t k) { return harness::run_scenario(scs[k], opt); });
    bool all = true;
    for (const auto& r : reports) {
      std::size_t failed = 0;
      for (const auto& c : r.checks) failed += c.passed ? 0 : 1;
      os << (r.passed() ? "PASS " : "FAIL ") << r.name << " (" << r.experiment << "): " << r.checks.size() - failed << "/"
         << r.checks.size() << " checks\n";
      for (const auto& c : r.checks)
        if (!c.passed) os << "  failed " << c.name << " = " << c.value << " (" << c.relation << " " << c.tolerance << ")\n";
      all = all && r.passed();
    }
    code = all ? ok : checks_failed;
  });

  std::vector<const char*> argv{"mmslab"};
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e, os, es);
    return rc == 0 ? ok : usage_error;
  } catch (const std::exception& e) {
    es << "mmslab: error: " << e.what() << '\n';
    return usage_error;
  }
  return code;
}

} // namespace mmslab::cli
