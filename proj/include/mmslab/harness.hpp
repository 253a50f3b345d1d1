#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <complex>
#include <cstdint>
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <toml.hpp>

#include "mmslab/entropyflow.hpp"
#include "mmslab/expr.hpp"
#include "mmslab/heatflow.hpp"
#include "mmslab/hopflax.hpp"
#include "mmslab/io.hpp"
#include "mmslab/space.hpp"
#include "mmslab/transport.hpp"

namespace mmslab::harness {

using json = io::json;

// ---------------------------------------------------------------- seeding

inline std::uint64_t splitmix64(std::uint64_t x)
{
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Independent stream per (seed, label, index); trial results never depend on
/// scheduling.
inline std::uint64_t derive_seed(std::uint64_t seed, std::string_view label, std::uint64_t index = 0)
{
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : label) h = (h ^ static_cast<unsigned char>(c)) * 0x100000001b3ULL;
  return splitmix64(splitmix64(seed ^ h) + index);
}

// ------------------------------------------------------------ worker pool

/// Evaluates fn(0..count-1) on up to `threads` workers and returns results in
/// index order. The first exception by index is rethrown.
template <typename Fn>
auto parallel_map(std::size_t count, std::size_t threads, Fn fn) -> std::vector<decltype(fn(std::size_t{}))>
{
  using T = decltype(fn(std::size_t{}));
  std::vector<std::optional<T>> slots(count);
  std::vector<std::exception_ptr> errors(count);
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t k = next++; k < count; k = next++) {
      try {
        slots[k].emplace(fn(k));
      } catch (...) {
        errors[k] = std::current_exception();
      }
    }
  };
  const std::size_t workers = std::max<std::size_t>(1, std::min(threads, count));
  if (workers == 1) {
    work();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work);
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  std::vector<T> out;
  out.reserve(count);
  for (auto& s : slots) out.push_back(std::move(*s));
  return out;
}

// ----------------------------------------------------------------- report

struct Check {
  std::string name;
  double value = 0.0;
  double tolerance = 0.0;
  std::string relation; // "<=", ">=", "decreasing", "true"
  bool passed = false;
  std::string note;
};

struct SeriesPoint {
  std::string series;
  double x = 0.0;
  double y = 0.0;
};

struct Report {
  std::string name;
  std::string experiment;
  std::uint64_t seed = 0;
  std::vector<Check> checks;
  json metrics = json::object();
  std::vector<SeriesPoint> series;

  [[nodiscard]] bool passed() const
  {
    return std::all_of(checks.begin(), checks.end(), [](const Check& c) { return c.passed; });
  }

  const Check& check_le(std::string name, double value, double tol, std::string note = {})
  {
    checks.push_back({std::move(name), value, tol, "<=", value <= tol, std::move(note)});
    return checks.back();
  }
  const Check& check_ge(std::string name, double value, double tol, std::string note = {})
  {
    checks.push_back({std::move(name), value, tol, ">=", value >= tol, std::move(note)});
    return checks.back();
  }
  const Check& check_true(std::string name, bool ok, std::string note = {})
  {
    checks.push_back({std::move(name), ok ? 1.0 : 0.0, 1.0, "true", ok, std::move(note)});
    return checks.back();
  }
  /// Strictly decreasing (or nonincreasing with `strict = false`) sequence.
  /// Entries at or below `floor` are treated as exact and need not decrease.
  const Check& check_decreasing(std::string name, const std::vector<double>& v, bool strict, std::string note = {},
                                double floor = 0.0)
  {
    bool ok = true;
    double worst = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 1; k < v.size(); ++k) {
      const double step = v[k] - v[k - 1];
      worst = std::max(worst, step);
      if (v[k] <= floor) continue;
      if (strict ? !(step < 0.0) : !(step <= 0.0)) ok = false;
    }
    if (v.size() < 2) worst = 0.0;
    checks.push_back({std::move(name), worst, 0.0, strict ? "decreasing" : "nonincreasing", ok, std::move(note)});
    return checks.back();
  }

  void add_series(const std::string& s, double x, double y) { series.push_back({s, x, y}); }

  [[nodiscard]] const Check* find(const std::string& n) const
  {
    for (const auto& c : checks)
      if (c.name == n) return &c;
    return nullptr;
  }

  [[nodiscard]] json to_json() const
  {
    json cs = json::array();
    for (const auto& c : checks) {
      json e{{"name", c.name}, {"value", io::number(c.value)}, {"relation", c.relation}};
      if (c.relation == "<=" || c.relation == ">=") e["tolerance"] = io::number(c.tolerance);
      e["passed"] = c.passed;
      if (!c.note.empty()) e["note"] = c.note;
      cs.push_back(std::move(e));
    }
    return {{"name", name},
            {"experiment", experiment},
            {"seed", seed},
            {"passed", passed()},
            {"checks", std::move(cs)},
            {"metrics", metrics}};
  }

  [[nodiscard]] std::string series_csv() const
  {
    std::ostringstream os;
    os << std::setprecision(17) << "x,y,series\n";
    for (const auto& p : series) os << p.x << ',' << p.y << ',' << p.series << '\n';
    return os.str();
  }
};

// ---------------------------------------------------------- random inputs

/// Random connected graph: a random spanning tree plus extra edges with
/// probability `extra`, lengths in [0.2, 2], measure in [0.2, 1.2].
inline FiniteMetricMeasureSpace random_graph_space(std::mt19937_64& rng, std::size_t n, double extra = 0.3)
{
  std::uniform_real_distribution<double> len(0.2, 2.0), mass(0.2, 1.2), coin(0.0, 1.0);
  std::vector<WeightedEdge> edges;
  std::set<std::pair<std::size_t, std::size_t>> seen;
  for (std::size_t i = 1; i < n; ++i) {
    const std::size_t j = std::uniform_int_distribution<std::size_t>(0, i - 1)(rng);
    edges.push_back({j, i, len(rng)});
    seen.insert({j, i});
  }
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      if (!seen.count({i, j}) && coin(rng) < extra) edges.push_back({i, j, len(rng)});
  std::vector<double> m(n);
  for (double& x : m) x = mass(rng);
  return space_from_graph(edges, std::move(m));
}

inline ProbabilityMeasure random_probability(std::mt19937_64& rng, std::size_t n, double sparsity = 0.0)
{
  std::exponential_distribution<double> expo(1.0);
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  std::vector<double> w(n);
  for (double& x : w) x = coin(rng) < sparsity ? 0.0 : expo(rng);
  if (sum(w) == 0.0) w[std::uniform_int_distribution<std::size_t>(0, n - 1)(rng)] = 1.0;
  const double s = sum(w);
  for (double& x : w) x /= s;
  return ProbabilityMeasure(std::move(w));
}

inline DirichletForm random_dirichlet_form(std::mt19937_64& rng, std::size_t n)
{
  const auto s = random_graph_space(rng, n);
  std::uniform_real_distribution<double> u(0.1, 3.0);
  std::vector<Conductance> c;
  for (const auto& e : s.edges()) c.push_back({e.i, e.j, u(rng)});
  return DirichletForm(std::move(c), s.measure);
}

inline ScalarField random_values(std::mt19937_64& rng, std::size_t n, double lo, double hi)
{
  std::uniform_real_distribution<double> u(lo, hi);
  ScalarField f(n);
  for (double& x : f) x = u(rng);
  return f;
}

/// Density expression evaluated on the grid, normalized to a probability.
inline ProbabilityMeasure measure_from_expression(const FiniteMetricMeasureSpace& s, const std::string& expr)
{
  const auto rho = evaluate_on(Expression(expr), s.labels);
  for (std::size_t i = 0; i < rho.size(); ++i)
    if (rho[i] < 0.0) fail("density '", expr, "' is negative at point ", i);
  return ProbabilityMeasure::from_density(rho, s.measure);
}

/// Continuum heat semigroup applied to the trigonometric interpolant of f0 on
/// a circle or 2-D torus grid. Empty for other spaces.
inline std::optional<ScalarField> fourier_heat(const FiniteMetricMeasureSpace& s, std::span<const double> f0, double t)
{
  using cd = std::complex<double>;
  constexpr double twopi = 6.28318530717958647692;
  if (s.kind == SpaceKind::circle) {
    const std::size_t n = s.size();
    std::vector<cd> c(n);
    for (std::size_t k = 0; k < n; ++k) {
      cd acc = 0.0;
      for (std::size_t j = 0; j < n; ++j) acc += f0[j] * std::polar(1.0, -twopi * double(k * j % n) / double(n));
      const double kk = double(std::min(k, n - k));
      c[k] = acc / double(n) * std::exp(-std::pow(twopi * kk / s.length, 2) * t);
    }
    ScalarField out(n);
    for (std::size_t j = 0; j < n; ++j) {
      cd acc = 0.0;
      for (std::size_t k = 0; k < n; ++k) acc += c[k] * std::polar(1.0, twopi * double(k * j % n) / double(n));
      out[j] = acc.real();
    }
    return out;
  }
  if (s.kind == SpaceKind::torus2d) {
    const auto n = static_cast<std::size_t>(std::lround(std::sqrt(double(s.size()))));
    auto transform = [&](const std::vector<cd>& in, double sign) {
      std::vector<cd> tmp(n * n), out(n * n);
      for (std::size_t r = 0; r < n; ++r)
        for (std::size_t k = 0; k < n; ++k) {
          cd acc = 0.0;
          for (std::size_t c = 0; c < n; ++c) acc += in[r * n + c] * std::polar(1.0, sign * twopi * double(k * c % n) / double(n));
          tmp[r * n + k] = acc;
        }
      for (std::size_t k = 0; k < n; ++k)
        for (std::size_t q = 0; q < n; ++q) {
          cd acc = 0.0;
          for (std::size_t r = 0; r < n; ++r) acc += tmp[r * n + k] * std::polar(1.0, sign * twopi * double(q * r % n) / double(n));
          out[q * n + k] = acc;
        }
      return out;
    };
    std::vector<cd> in(f0.begin(), f0.end());
    auto hat = transform(in, -1.0);
    for (std::size_t q = 0; q < n; ++q)
      for (std::size_t k = 0; k < n; ++k) {
        const double a = double(std::min(q, n - q)), b = double(std::min(k, n - k));
        hat[q * n + k] *= std::exp(-(a * a + b * b) * std::pow(twopi / s.length, 2) * t) / double(n * n);
      }
    const auto back = transform(hat, 1.0);
    ScalarField out(n * n);
    for (std::size_t i = 0; i < n * n; ++i) out[i] = back[i].real();
    return out;
  }
  return std::nullopt;
}

// -------------------------------------------------------------- scenario

enum class Experiment { hopflax_suite, identify, brenier, gamma_monotone, property_suites };

inline std::string to_string(Experiment e)
{
  switch (e) {
  case Experiment::hopflax_suite: return "hopflax_suite";
  case Experiment::identify: return "identify";
  case Experiment::brenier: return "brenier";
  case Experiment::gamma_monotone: return "gamma_monotone";
  case Experiment::property_suites: return "property_suites";
  }
  return "";
}

struct HopfLaxSuiteParams {
  std::size_t trials = 100;
  std::size_t max_n = 12;
  std::size_t times = 5;
  double t_min = 0.02;
  double t_max = 3.0;
  double tol = 1e-12;
  double dini_step = 1e-7;
  double dini_tol = 1e-6;
};

struct IdentifyParams {
  SpaceSpec base;                      // kind, length, measure rule; n taken from the ladder
  std::vector<std::size_t> ladder{32, 64, 128};
  std::vector<double> h_ladder{2e-3, 1e-3, 5e-4};
  std::string density = "1 + 0.5*cos(2*pi*x)";
  double t_end = 0.05;
  std::size_t heat_steps = 1000;
  std::size_t ede_samples = 50; // curve intervals for the EDE audit; must divide heat_steps
  std::size_t reference_n = 64;
  double reference_h = 1e-3;
  double fourier_tol = 1e-2;
  double ede_tol = 0.05;
  double tv_tol = 0.05;
  double dissipation_tol = 0.02;
  double exact_tol = 1e-12;
};

struct BrenierParams {
  SpaceSpec base;
  std::vector<std::size_t> ladder{32, 64, 128};
  std::string density_mu = "1 + 0.5*cos(2*pi*x)";
  std::string density_nu = "1 + 0.4*sin(2*pi*x) + 0.2*cos(4*pi*x)";
  double rms_factor = 0.1;
  std::size_t gap_n = 400;
  double gap_tol = 5e-3;
};

struct GammaParams {
  SpaceSpec space;
  std::string field = "1 + 0.5*cos(2*pi*x)";
  std::string bump = "exp(-40*(x-0.5)^2)";
  std::vector<int> rungs{2, 4, 6, 8};
  double t_end = 0.05;
  std::size_t n_steps = 200;
  double final_tol = 1e-3;
};

struct PropertyParams {
  std::vector<std::string> suites{"ot", "heat", "convexity", "slope"};
  std::size_t ot_instances = 500;
  std::size_t ot_max_n = 30;
  std::size_t triangle_triples = 200;
  std::size_t oracle_instances = 60;
  std::size_t heat_instances = 200;
  std::size_t convexity_trials = 1000;
  std::size_t slope_instances = 50;
  std::vector<std::size_t> slope_ladder{32, 64, 128};
  std::string slope_density = "1 + 0.5*cos(2*pi*x)";
  std::size_t slope_samples = 48;
  double slope_ratio_tol = 0.1;
};

struct Scenario {
  std::string name = "scenario";
  Experiment experiment = Experiment::property_suites;
  std::optional<std::uint64_t> seed;
  std::string output_dir;
  HopfLaxSuiteParams hopflax;
  IdentifyParams identify;
  BrenierParams brenier;
  GammaParams gamma;
  PropertyParams property;
};

namespace detail {

/// Typed access into a toml table that names the offending key on failure and
/// remembers which keys were consumed.
class TableReader {
public:
  TableReader(const toml::table& t, std::string prefix) : t_(t), prefix_(std::move(prefix)) {}

  [[nodiscard]] std::string key(std::string_view k) const
  {
    return prefix_.empty() ? std::string(k) : prefix_ + "." + std::string(k);
  }

  bool has(std::string_view k) const { return t_.contains(k); }

  template <typename T>
  void get(std::string_view k, T& out)
  {
    used_.insert(std::string(k));
    const toml::node* n = t_.get(k);
    if (!n) return;
    if constexpr (std::is_same_v<T, std::string>) {
      if (auto v = n->value<std::string>()) out = *v;
      else type_error(k, "a string");
    } else if constexpr (std::is_same_v<T, double>) {
      if (auto v = n->value<double>()) out = *v;
      else type_error(k, "a number");
    } else if constexpr (std::is_same_v<T, std::size_t> || std::is_same_v<T, std::uint64_t>) {
      auto v = n->value<std::int64_t>();
      if (!v || *v < 0) type_error(k, "a nonnegative integer");
      out = static_cast<T>(*v);
    } else if constexpr (std::is_same_v<T, int>) {
      auto v = n->value<std::int64_t>();
      if (!v) type_error(k, "an integer");
      out = static_cast<int>(*v);
    } else {
      const toml::array* a = n->as_array();
      if (!a) type_error(k, "an array");
      out.clear();
      for (std::size_t i = 0; i < a->size(); ++i) {
        typename T::value_type x{};
        const toml::node& e = (*a)[i];
        using V = typename T::value_type;
        if constexpr (std::is_same_v<V, double>) {
          auto v = e.value<double>();
          if (!v) type_error(k, "an array of numbers");
          x = *v;
        } else if constexpr (std::is_same_v<V, std::string>) {
          auto v = e.value<std::string>();
          if (!v) type_error(k, "an array of strings");
          x = *v;
        } else if constexpr (std::is_same_v<V, std::vector<double>>) {
          const toml::array* row = e.as_array();
          if (!row) type_error(k, "an array of arrays");
          for (const auto& c : *row) {
            auto v = c.value<double>();
            if (!v) type_error(k, "an array of number arrays");
            x.push_back(*v);
          }
        } else {
          auto v = e.value<std::int64_t>();
          if (!v || *v < 0) type_error(k, "an array of nonnegative integers");
          x = static_cast<V>(*v);
        }
        out.push_back(std::move(x));
      }
    }
  }

  const toml::table* table(std::string_view k)
  {
    used_.insert(std::string(k));
    const toml::node* n = t_.get(k);
    if (!n) return nullptr;
    if (!n->is_table()) type_error(k, "a table");
    return n->as_table();
  }

  void finish() const
  {
    for (const auto& [k, v] : t_)
      if (!used_.count(std::string(k.str()))) fail("scenario: unknown key '", key(k.str()), "'");
  }

private:
  [[noreturn]] void type_error(std::string_view k, const char* what) const
  {
    fail("scenario: key '", key(k), "' must be ", what);
  }

  const toml::table& t_;
  std::string prefix_;
  std::set<std::string> used_;
};

inline SpaceSpec read_space(const toml::table& t, const std::string& prefix)
{
  TableReader r(t, prefix);
  SpaceSpec s;
  std::string kind = "circle";
  r.get("kind", kind);
  try {
    s.kind = space_kind_from_string(kind);
  } catch (const Error&) {
    fail("scenario: key '", r.key("kind"), "' has unknown value '", kind, "'");
  }
  r.get("n", s.n);
  r.get("length", s.length);
  r.get("points", s.points);
  r.get("connect_radius", s.connect_radius);
  if (r.has("measure")) {
    const toml::node* n = t.get("measure");
    if (n->is_string()) {
      std::string rule;
      r.get("measure", rule);
      if (rule != "uniform") fail("scenario: key '", r.key("measure"), "' must be \"uniform\" or an array");
    } else {
      r.get("measure", s.measure);
      s.measure_rule = MeasureRule::custom;
    }
  }
  r.finish();
  return s;
}

inline void require_positive(double v, const std::string& key)
{
  if (!(v > 0.0)) fail("scenario: key '", key, "' must be positive, got ", v);
}

template <typename T>
void require_increasing(const std::vector<T>& v, const std::string& key)
{
  if (v.empty()) fail("scenario: key '", key, "' must not be empty");
  for (std::size_t k = 1; k < v.size(); ++k)
    if (!(v[k] > v[k - 1])) fail("scenario: key '", key, "' must be strictly increasing");
}

template <typename T>
void require_decreasing(const std::vector<T>& v, const std::string& key)
{
  if (v.empty()) fail("scenario: key '", key, "' must not be empty");
  for (std::size_t k = 1; k < v.size(); ++k)
    if (!(v[k] < v[k - 1])) fail("scenario: key '", key, "' must be strictly decreasing");
}

} // namespace detail

/// Parses and validates a scenario. All errors are raised before any
/// computation and name the offending key.
inline Scenario parse_scenario(std::string_view text, const std::string& source = "scenario")
{
  toml::table root;
  try {
    root = toml::parse(text, source);
  } catch (const toml::parse_error& e) {
    const auto& b = e.source().begin;
    fail(source, ":", b.line, ":", b.column, ": TOML parse error: ", e.description());
  }
  Scenario sc;
  detail::TableReader r(root, "");
  r.get("name", sc.name);
  std::string kind;
  r.get("experiment", kind);
  if (kind.empty()) fail("scenario: missing key 'experiment'");
  if (kind == "hopflax_suite") sc.experiment = Experiment::hopflax_suite;
  else if (kind == "identify") sc.experiment = Experiment::identify;
  else if (kind == "brenier") sc.experiment = Experiment::brenier;
  else if (kind == "gamma_monotone") sc.experiment = Experiment::gamma_monotone;
  else if (kind == "property_suites") sc.experiment = Experiment::property_suites;
  else fail("scenario: key 'experiment' has unknown value '", kind, "'");
  if (r.has("seed")) {
    std::uint64_t s = 0;
    r.get("seed", s);
    sc.seed = s;
  }
  r.get("output_dir", sc.output_dir);

  SpaceSpec space;
  space.kind = SpaceKind::circle;
  space.n = 64;
  bool have_space = false;
  if (const auto* t = r.table("space")) {
    space = detail::read_space(*t, "space");
    have_space = true;
  }
  std::string density, target, field, bump;
  if (const auto* t = r.table("initial")) {
    detail::TableReader ir(*t, "initial");
    ir.get("density", density);
    ir.get("target", target);
    ir.get("field", field);
    ir.get("bump", bump);
    ir.finish();
  }
  for (const auto* e : {&density, &target, &field, &bump})
    if (!e->empty()) Expression check(*e);

  const toml::table empty;
  const toml::table* kt = r.table("knobs");
  detail::TableReader k(kt ? *kt : empty, "knobs");

  switch (sc.experiment) {
  case Experiment::hopflax_suite: {
    auto& p = sc.hopflax;
    k.get("trials", p.trials);
    k.get("max_n", p.max_n);
    k.get("times", p.times);
    k.get("t_min", p.t_min);
    k.get("t_max", p.t_max);
    k.get("tol", p.tol);
    k.get("dini_step", p.dini_step);
    k.get("dini_tol", p.dini_tol);
    if (p.trials == 0) fail("scenario: key 'knobs.trials' must be positive");
    if (p.max_n < 2) fail("scenario: key 'knobs.max_n' must be at least 2");
    if (p.times == 0) fail("scenario: key 'knobs.times' must be positive");
    detail::require_positive(p.t_min, "knobs.t_min");
    if (!(p.t_max > p.t_min)) fail("scenario: key 'knobs.t_max' must exceed knobs.t_min");
    detail::require_positive(p.tol, "knobs.tol");
    detail::require_positive(p.dini_step, "knobs.dini_step");
    detail::require_positive(p.dini_tol, "knobs.dini_tol");
    break;
  }
  case Experiment::identify: {
    auto& p = sc.identify;
    p.base = space;
    if (!density.empty()) p.density = density;
    k.get("ladder", p.ladder);
    k.get("h", p.h_ladder);
    k.get("t_end", p.t_end);
    k.get("n_steps", p.heat_steps);
    k.get("ede_samples", p.ede_samples);
    k.get("reference_n", p.reference_n);
    k.get("reference_h", p.reference_h);
    k.get("fourier_tol", p.fourier_tol);
    k.get("ede_tol", p.ede_tol);
    k.get("tv_tol", p.tv_tol);
    k.get("dissipation_tol", p.dissipation_tol);
    if (have_space && !kt) p.ladder = {space.n};
    detail::require_increasing(p.ladder, "knobs.ladder");
    detail::require_decreasing(p.h_ladder, "knobs.h");
    for (double h : p.h_ladder) detail::require_positive(h, "knobs.h");
    detail::require_positive(p.t_end, "knobs.t_end");
    if (p.heat_steps == 0) fail("scenario: key 'knobs.n_steps' must be positive");
    if (p.ede_samples < 2 || p.heat_steps % p.ede_samples != 0)
      fail("scenario: key 'knobs.ede_samples' must be at least 2 and divide knobs.n_steps");
    if (std::find(p.ladder.begin(), p.ladder.end(), p.reference_n) == p.ladder.end())
      fail("scenario: key 'knobs.reference_n' must be a rung of knobs.ladder");
    if (std::find(p.h_ladder.begin(), p.h_ladder.end(), p.reference_h) == p.h_ladder.end())
      fail("scenario: key 'knobs.reference_h' must be an entry of knobs.h");
    for (double t : {p.fourier_tol, p.ede_tol, p.tv_tol, p.dissipation_tol}) detail::require_positive(t, "knobs tolerance");
    break;
  }
  case Experiment::brenier: {
    auto& p = sc.brenier;
    p.base = space;
    if (!density.empty()) p.density_mu = density;
    if (!target.empty()) p.density_nu = target;
    k.get("ladder", p.ladder);
    k.get("rms_factor", p.rms_factor);
    k.get("gap_n", p.gap_n);
    k.get("gap_tol", p.gap_tol);
    detail::require_increasing(p.ladder, "knobs.ladder");
    detail::require_positive(p.rms_factor, "knobs.rms_factor");
    detail::require_positive(p.gap_tol, "knobs.gap_tol");
    if (p.gap_n < 2) fail("scenario: key 'knobs.gap_n' must be at least 2");
    break;
  }
  case Experiment::gamma_monotone: {
    auto& p = sc.gamma;
    p.space = space;
    if (!field.empty()) p.field = field;
    if (!bump.empty()) p.bump = bump;
    k.get("rungs", p.rungs);
    k.get("t_end", p.t_end);
    k.get("n_steps", p.n_steps);
    k.get("final_tol", p.final_tol);
    detail::require_increasing(p.rungs, "knobs.rungs");
    if (p.rungs.front() < 1) fail("scenario: key 'knobs.rungs' entries must be >= 1");
    detail::require_positive(p.t_end, "knobs.t_end");
    if (p.n_steps == 0) fail("scenario: key 'knobs.n_steps' must be positive");
    detail::require_positive(p.final_tol, "knobs.final_tol");
    break;
  }
  case Experiment::property_suites: {
    auto& p = sc.property;
    if (!density.empty()) p.slope_density = density;
    k.get("suites", p.suites);
    k.get("ot_instances", p.ot_instances);
    k.get("ot_max_n", p.ot_max_n);
    k.get("triangle_triples", p.triangle_triples);
    k.get("oracle_instances", p.oracle_instances);
    k.get("heat_instances", p.heat_instances);
    k.get("convexity_trials", p.convexity_trials);
    k.get("slope_instances", p.slope_instances);
    k.get("slope_ladder", p.slope_ladder);
    k.get("slope_samples", p.slope_samples);
    k.get("slope_ratio_tol", p.slope_ratio_tol);
    for (const auto& s : p.suites)
      if (s != "ot" && s != "heat" && s != "convexity" && s != "slope")
        fail("scenario: key 'knobs.suites' has unknown suite '", s, "'");
    if (p.ot_max_n < 2) fail("scenario: key 'knobs.ot_max_n' must be at least 2");
    detail::require_increasing(p.slope_ladder, "knobs.slope_ladder");
    detail::require_positive(p.slope_ratio_tol, "knobs.slope_ratio_tol");
    break;
  }
  }
  k.finish();
  r.finish();
  if (sc.name.empty()) fail("scenario: key 'name' must not be empty");
  return sc;
}

inline Scenario load_scenario(const std::string& path)
{
  std::ifstream in(path);
  if (!in) fail("cannot open scenario '", path, "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_scenario(ss.str(), path);
}

// ------------------------------------------------------------ experiments

/// Exact Hopf-Lax audits on random graphs: monotonicity in t, the D+/D-
/// ordering, the semigroup inequality, range and Lipschitz bounds, the pair
/// inequality, and one-sided time derivatives against finite differences.
inline Report hopflax_suite(const HopfLaxSuiteParams& p, std::uint64_t seed, std::size_t threads = 1)
{
  struct Trial {
    double monotone = 0, dminus_order = 0, semigroup = 0, range = 0, lipschitz = 0, pair = 0, slope = 0, dini = 0;
    std::size_t pair_violations = 0, flagged = 0, dini_points = 0;
  };
  auto run = [&](std::size_t trial) {
    std::mt19937_64 rng(derive_seed(seed, "hopflax", trial));
    const std::size_t n = std::uniform_int_distribution<std::size_t>(2, p.max_n)(rng);
    const auto s = random_graph_space(rng, n);
    const auto f = random_values(rng, n, -2.0, 2.0);
    std::vector<double> ts(p.times);
    std::uniform_real_distribution<double> ut(std::log(p.t_min), std::log(p.t_max));
    for (double& t : ts) t = std::exp(ut(rng));
    std::sort(ts.begin(), ts.end());
    const auto [lo_it, hi_it] = std::minmax_element(f.begin(), f.end());
    const double lo = *lo_it, hi = *hi_it;
    Trial r;
    std::vector<HopfLaxResult> res;
    for (double t : ts) res.push_back(hopf_lax(s, f, t));
    for (std::size_t k = 0; k < ts.size(); ++k) {
      const auto& q = res[k];
      for (std::size_t x = 0; x < n; ++x) r.range = std::max({r.range, lo - q.q[x], q.q[x] - hi});
      r.lipschitz = std::max(r.lipschitz, lipschitz_constant(s, q.q) - 2.0 * std::sqrt((hi - lo) / ts[k]));
      if (k + 1 < ts.size() && ts[k + 1] > ts[k]) {
        for (std::size_t x = 0; x < n; ++x) {
          r.monotone = std::max(r.monotone, res[k + 1].q[x] - q.q[x]);
          r.dminus_order = std::max(r.dminus_order, q.d_plus[x] - res[k + 1].d_minus[x]);
        }
        const auto joint = hopf_lax(s, f, ts[k] + ts[k + 1]);
        const auto chained = hopf_lax(s, q.q, ts[k + 1]);
        for (std::size_t x = 0; x < n; ++x) r.semigroup = std::max(r.semigroup, joint.q[x] - chained.q[x]);
      }
      const auto sub = hj_subsolution_report(s, f, ts[k], p.tol);
      r.pair_violations += sub.pair_violations.size();
      r.flagged += sub.flagged_points.size();
      r.pair = std::max(r.pair, -sub.min_pair_slack);
      for (double v : sub.slope_residual) r.slope = std::max(r.slope, v);

      const double t = ts[k], dt = p.dini_step;
      if (t <= 1e-6) continue;
      const auto a = hopf_lax(s, f, t - 1e-6), b = hopf_lax(s, f, t + 1e-6);
      const auto qa = hopf_lax(s, f, t - dt).q, qb = hopf_lax(s, f, t + dt).q;
      for (std::size_t x = 0; x < n; ++x) {
        if (a.d_minus[x] != q.d_minus[x] || b.d_plus[x] != q.d_plus[x] || q.d_minus[x] != q.d_plus[x]) continue;
        const auto [left, right] = hj_derivatives(s, f, t, x);
        const double fd = (qb[x] - qa[x]) / (2.0 * dt);
        r.dini = std::max({r.dini, std::abs(fd - left), std::abs(fd - right)});
        ++r.dini_points;
      }
    }
    return r;
  };
  const auto trials = parallel_map(p.trials, threads, run);
  Trial w;
  std::size_t pairs = 0, flagged = 0, dini_points = 0;
  for (std::size_t k = 0; k < trials.size(); ++k) {
    const auto& t = trials[k];
    w.monotone = std::max(w.monotone, t.monotone);
    w.dminus_order = std::max(w.dminus_order, t.dminus_order);
    w.semigroup = std::max(w.semigroup, t.semigroup);
    w.range = std::max(w.range, t.range);
    w.lipschitz = std::max(w.lipschitz, t.lipschitz);
    w.pair = std::max(w.pair, t.pair);
    w.slope = std::max(w.slope, t.slope);
    w.dini = std::max(w.dini, t.dini);
    pairs += t.pair_violations;
    flagged += t.flagged;
    dini_points += t.dini_points;
  }
  Report rep;
  rep.experiment = "hopflax_suite";
  rep.seed = seed;
  rep.metrics = {{"trials", p.trials},
                 {"max_n", p.max_n},
                 {"times_per_trial", p.times},
                 {"pair_violations", pairs},
                 {"flagged_points", flagged},
                 {"dini_points_checked", dini_points}};
  rep.check_le("monotone_in_t", w.monotone, p.tol);
  rep.check_le("dplus_below_later_dminus", w.dminus_order, p.tol);
  rep.check_le("semigroup_inequality", w.semigroup, p.tol);
  rep.check_le("range_bounds", w.range, p.tol);
  rep.check_le("lipschitz_bound_const_2", w.lipschitz, p.tol);
  rep.check_le("pair_inequality", w.pair, p.tol);
  rep.check_le("subsolution_slope_residual", w.slope, p.tol);
  rep.check_le("dini_vs_finite_difference", w.dini, p.dini_tol,
               "central differences with the configured step, points with ties excluded");
  rep.check_ge("dini_points_checked", static_cast<double>(dini_points), 1.0);
  return rep;
}

/// Heat flow versus JKO on a ladder of grids and step sizes, with the Fourier
/// reference, the EDE audit and entropy dissipation at the reference grid.
inline Report experiment_identify(const IdentifyParams& p, std::uint64_t seed, std::size_t threads = 1)
{
  Report rep;
  rep.experiment = "identify";
  rep.seed = seed;
  struct Grid {
    std::size_t n;
    FiniteMetricMeasureSpace space;
    DirichletForm form;
    FlowTrajectory heat;
    ProbabilityMeasure heat_end;
    double fourier_err = std::numeric_limits<double>::quiet_NaN();
  };
  auto build = [&](std::size_t g) {
    SpaceSpec spec = p.base;
    spec.n = p.ladder[g];
    Grid G{spec.n, build_space(spec), {}, {}, {}};
    G.form = natural_form(G.space);
    const auto mu0 = measure_from_expression(G.space, p.density);
    const auto f0 = mu0.density(G.space.measure);
    G.heat = heat_flow(G.form, f0, p.t_end, p.heat_steps);
    G.heat_end = ProbabilityMeasure::from_density(G.heat.fields.back(), G.space.measure);
    if (const auto ref = fourier_heat(G.space, f0, p.t_end))
      G.fourier_err = max_abs_diff(*ref, G.heat.fields.back());
    return G;
  };
  const auto grids = parallel_map(p.ladder.size(), threads, build);

  struct Cell {
    std::size_t g, k;
    double tv, w2;
    std::size_t steps;
  };
  std::vector<std::pair<std::size_t, std::size_t>> jobs;
  for (std::size_t g = 0; g < grids.size(); ++g)
    for (std::size_t k = 0; k < p.h_ladder.size(); ++k) jobs.push_back({g, k});
  const auto cells = parallel_map(jobs.size(), threads, [&](std::size_t j) {
    const auto [g, k] = jobs[j];
    const auto& G = grids[g];
    const auto mu0 = measure_from_expression(G.space, p.density);
    const auto traj = jko_flow(G.space, mu0, p.h_ladder[k], p.t_end);
    const auto& end = traj.measures.back();
    return Cell{g, k, total_variation(end, G.heat_end), w2_distance(G.space, end, G.heat_end), traj.measures.size() - 1};
  });

  json matrix = json::array();
  for (const auto& c : cells) {
    matrix.push_back({{"n", grids[c.g].n}, {"h", p.h_ladder[c.k]}, {"steps", c.steps}, {"tv", io::number(c.tv)}, {"w2", io::number(c.w2)}});
    rep.add_series("jko_tv_n" + std::to_string(grids[c.g].n), p.h_ladder[c.k], c.tv);
    rep.add_series("jko_w2_n" + std::to_string(grids[c.g].n), p.h_ladder[c.k], c.w2);
  }
  json fourier = json::array();
  for (const auto& G : grids) {
    fourier.push_back({{"n", G.n}, {"linf", io::number(G.fourier_err)}});
    rep.add_series("heat_vs_fourier_linf", double(G.n), G.fourier_err);
    if (std::isfinite(G.fourier_err))
      rep.check_le("heat_vs_fourier_linf_n" + std::to_string(G.n), G.fourier_err, p.fourier_tol);
  }
  rep.metrics["density"] = p.density;
  rep.metrics["t_end"] = p.t_end;
  rep.metrics["heat_steps"] = p.heat_steps;
  rep.metrics["heat_vs_fourier"] = std::move(fourier);
  rep.metrics["jko_vs_heat"] = std::move(matrix);

  // Reference grid: JKO accuracy, diagonal refinement, h ladder.
  const auto gref = static_cast<std::size_t>(std::find(p.ladder.begin(), p.ladder.end(), p.reference_n) - p.ladder.begin());
  const auto kref = static_cast<std::size_t>(std::find(p.h_ladder.begin(), p.h_ladder.end(), p.reference_h) - p.h_ladder.begin());
  auto cell = [&](std::size_t g, std::size_t k) -> const Cell& { return cells[g * p.h_ladder.size() + k]; };
  rep.check_le("jko_vs_heat_tv_reference", cell(gref, kref).tv, p.tv_tol,
               "n=" + std::to_string(p.reference_n) + ", h=reference_h");
  std::vector<double> diag, along_h;
  for (std::size_t i = 0; i < std::min(grids.size(), p.h_ladder.size()); ++i) diag.push_back(cell(i, i).tv);
  for (std::size_t k = 0; k < p.h_ladder.size(); ++k) along_h.push_back(cell(gref, k).tv);
  if (diag.size() > 1) rep.check_decreasing("jko_tv_decreasing_h_and_dx_halved", diag, true, {}, p.exact_tol);
  if (along_h.size() > 1) rep.check_decreasing("jko_tv_decreasing_in_h_reference_grid", along_h, true, {}, p.exact_tol);

  // EDE and entropy dissipation along the reference heat trajectory.
  const auto& G = grids[gref];
  auto sampled_ede = [&](std::size_t samples) {
    MeasureCurve curve;
    const std::size_t stride = p.heat_steps / samples;
    for (std::size_t k = 0; k < G.heat.size(); k += stride) {
      curve.times.push_back(G.heat.times[k]);
      curve.measures.push_back(ProbabilityMeasure::from_density(G.heat.fields[k], G.space.measure));
    }
    return ede_report(G.space, G.form, curve);
  };
  const auto ede = sampled_ede(p.ede_samples);
  json sweep = json::array();
  for (std::size_t samples = 2; samples <= p.heat_steps; ++samples) {
    if (p.heat_steps % samples != 0 || (samples != p.heat_steps && samples % 5 != 0 && samples != 2)) continue;
    const double rr = samples == p.ede_samples ? ede.relative_residual : sampled_ede(samples).relative_residual;
    sweep.push_back({{"samples", samples}, {"relative_residual", io::number(rr)}});
    rep.add_series("ede_relative_residual_vs_samples", double(samples), rr);
  }
  rep.metrics["ede"] = {{"entropy_drop", io::number(ede.entropy_drop)},
                        {"speed_term", io::number(ede.speed_term)},
                        {"slope_term", io::number(ede.slope_term)},
                        {"residual", io::number(ede.residual)},
                        {"relative_residual", io::number(ede.relative_residual)},
                        {"lekey_violations", ede.lekey_violations},
                        {"samples", p.ede_samples},
                        {"sampling_sweep", std::move(sweep)}};
  rep.check_le("ede_relative_residual", std::abs(ede.relative_residual), p.ede_tol,
               "heat trajectory sampled at " + std::to_string(p.ede_samples) + " intervals");

  double worst_rate = 0.0, min_exact = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < G.heat.size(); ++k) {
    const auto& f = G.heat.fields[k];
    const double fi = fisher_density(G.form, f);
    min_exact = std::min(min_exact, entropy_dissipation(G.form, f) - fi);
    rep.add_series("entropy", G.heat.times[k], density_entropy(G.form, f));
    rep.add_series("fisher", G.heat.times[k], fi);
    if (k == 0 || k + 1 == G.heat.size()) continue;
    const double rate = (density_entropy(G.form, G.heat.fields[k + 1]) - density_entropy(G.form, G.heat.fields[k - 1])) /
                        (G.heat.times[k + 1] - G.heat.times[k - 1]);
    const double rel = std::abs(rate + fi) / std::max(fi, 1e-300);
    worst_rate = std::max(worst_rate, rel);
    rep.add_series("dissipation_rate_relative_error", G.heat.times[k], rel);
  }
  rep.check_le("entropy_rate_vs_fisher_relative", worst_rate, p.dissipation_tol, "centered differences, interior steps");
  rep.check_ge("dissipation_minus_fisher_min", min_exact, -p.exact_tol);
  return rep;
}

/// Metric Brenier audit on a circle ladder plus the strict-gap example on the
/// interval.
inline Report experiment_brenier(const BrenierParams& p, std::uint64_t seed, std::size_t threads = 1)
{
  Report rep;
  rep.experiment = "brenier";
  rep.seed = seed;
  struct Rung {
    std::size_t n;
    double dx, rms, lip, w2sq, slope_energy;
  };
  const auto rungs = parallel_map(p.ladder.size(), threads, [&](std::size_t g) {
    SpaceSpec spec = p.base;
    spec.n = p.ladder[g];
    const auto s = build_space(spec);
    const auto mu = measure_from_expression(s, p.density_mu), nu = measure_from_expression(s, p.density_nu);
    const auto r = solve_w2(s, mu, nu);
    const auto asc = local_slope(s, r.cert.phi, SlopeKind::ascending);
    double acc = 0.0, energy = 0.0;
    for (std::size_t x = 0; x < s.size(); ++x) {
      energy += mu[x] * asc[x] * asc[x];
      for (std::size_t y = 0; y < s.size(); ++y) {
        const double g2 = r.plan.plan(x, y);
        if (g2 > 0.0) acc += g2 * std::pow(s.dist(x, y) - asc[x], 2);
      }
    }
    return Rung{s.size(), s.spacing, std::sqrt(acc), lipschitz_constant(s, asc), r.w2 * r.w2, energy};
  });
  json ladder = json::array();
  std::vector<double> rms;
  for (const auto& r : rungs) {
    ladder.push_back({{"n", r.n},
                      {"dx", r.dx},
                      {"rms", r.rms},
                      {"rms_over_dx", r.rms / r.dx},
                      {"lip_scale", r.lip},
                      {"w2_squared", r.w2sq},
                      {"slope_energy", r.slope_energy},
                      {"energy_identity_error", std::abs(r.slope_energy - r.w2sq)}});
    rep.add_series("rms", double(r.n), r.rms);
    rep.add_series("energy_identity_error", double(r.n), std::abs(r.slope_energy - r.w2sq));
    rms.push_back(r.rms);
  }
  rep.metrics["density_mu"] = p.density_mu;
  rep.metrics["density_nu"] = p.density_nu;
  rep.metrics["ladder"] = std::move(ladder);
  rep.metrics["lip_scale_definition"] = "Lipschitz constant of the ascending slope of phi on the finest rung";
  if (rms.size() > 1) rep.check_decreasing("rms_decreasing_along_ladder", rms, true);
  const auto& fine = rungs.back();
  rep.check_le("rms_over_dx_lip_finest", fine.rms / (fine.dx * fine.lip), p.rms_factor,
               "plan-weighted RMS of d(x,y) - |grad+ phi|(x) divided by dx * lip_scale");

  // delta_0 -> uniform on [0, 1]: slope energy vanishes, W2^2 = 1/3.
  SpaceSpec iv;
  iv.kind = SpaceKind::interval;
  iv.n = p.gap_n;
  iv.length = 1.0;
  const auto s = build_space(iv);
  const auto target = ProbabilityMeasure::from_density(std::vector<double>(s.size(), 1.0), s.measure);
  const auto r = solve_w2(s, ProbabilityMeasure::dirac(s.size(), 0), target);
  const auto asc = local_slope(s, r.cert.phi, SlopeKind::ascending);
  const double energy0 = asc[0] * asc[0];
  rep.metrics["strict_gap"] = {{"n", p.gap_n}, {"w2_squared", r.w2 * r.w2}, {"slope_energy", energy0}};
  rep.check_le("strict_gap_slope_energy", energy0, p.gap_tol);
  rep.check_le("strict_gap_w2_squared_minus_third", std::abs(r.w2 * r.w2 - 1.0 / 3.0), p.gap_tol);
  return rep;
}

/// Heat flows under the increasing reference measures theta_k m.
inline Report experiment_gamma_monotone(const GammaParams& p, std::uint64_t seed, std::size_t threads = 1)
{
  Report rep;
  rep.experiment = "gamma_monotone";
  rep.seed = seed;
  const auto s = build_space(p.space);
  const auto form = natural_form(s);
  const auto f0 = evaluate_on(Expression(p.field), s.labels);
  const auto bump = evaluate_on(Expression(p.bump), s.labels);
  for (std::size_t i = 0; i < bump.size(); ++i)
    if (bump[i] < 0.0 || bump[i] >= 1.0 + 1e-15) fail("gamma_monotone: bump must lie in [0, 1], got ", bump[i], " at ", i);
  const auto ref = heat_flow(form, f0, p.t_end, p.n_steps).fields.back();
  const auto errors = parallel_map(p.rungs.size(), threads, [&](std::size_t k) {
    std::vector<double> mk(s.size());
    const double a = std::ldexp(1.0, -p.rungs[k]);
    for (std::size_t i = 0; i < s.size(); ++i) mk[i] = (1.0 - a * bump[i]) * s.measure[i];
    const auto fk = heat_flow(form.with_measure(mk), f0, p.t_end, p.n_steps).fields.back();
    ScalarField d(s.size());
    for (std::size_t i = 0; i < d.size(); ++i) d[i] = fk[i] - ref[i];
    return std::sqrt(weighted_norm_sq(form, d));
  });
  json rows = json::array();
  for (std::size_t k = 0; k < errors.size(); ++k) {
    rows.push_back({{"k", p.rungs[k]}, {"theta_min", 1.0 - std::ldexp(1.0, -p.rungs[k])}, {"l2_error", errors[k]}});
    rep.add_series("l2_error", double(p.rungs[k]), errors[k]);
  }
  rep.metrics["field"] = p.field;
  rep.metrics["bump"] = p.bump;
  rep.metrics["t_end"] = p.t_end;
  rep.metrics["rungs"] = std::move(rows);
  rep.check_decreasing("error_nonincreasing", errors, false);
  rep.check_le("final_rung_error", errors.back(), p.final_tol);
  return rep;
}

namespace detail {

/// Exhaustive search over plans with entries on the lattice (1/K)Z for
/// marginals on that lattice; exact for n <= 3.
inline double lattice_transport_oracle(const Matrix& cost, const std::vector<int>& a, const std::vector<int>& b, int K)
{
  const std::size_t n1 = a.size(), n2 = b.size();
  double best = std::numeric_limits<double>::infinity();
  std::vector<int> x(n1 * n2, 0), col(n2, 0);
  std::function<void(std::size_t, std::size_t, int)> fill = [&](std::size_t i, std::size_t j, int left) {
    if (i == n1) {
      for (std::size_t q = 0; q < n2; ++q)
        if (col[q] != b[q]) return;
      double c = 0.0;
      for (std::size_t k = 0; k < n1 * n2; ++k) c += cost(k / n2, k % n2) * x[k];
      best = std::min(best, c / K);
      return;
    }
    if (j + 1 == n2) {
      if (col[j] + left > b[j]) return;
      x[i * n2 + j] = left;
      col[j] += left;
      fill(i + 1, 0, i + 1 < n1 ? a[i + 1] : 0);
      col[j] -= left;
      return;
    }
    for (int v = 0; v <= std::min(left, b[j] - col[j]); ++v) {
      x[i * n2 + j] = v;
      col[j] += v;
      fill(i, j + 1, left - v);
      col[j] -= v;
    }
  };
  fill(0, 0, a[0]);
  return best;
}

inline std::vector<int> lattice_composition(std::mt19937_64& rng, std::size_t n, int K)
{
  std::vector<int> cuts{0, K};
  std::uniform_int_distribution<int> u(0, K);
  for (std::size_t k = 0; k + 1 < n; ++k) cuts.push_back(u(rng));
  std::sort(cuts.begin(), cuts.end());
  std::vector<int> out;
  for (std::size_t k = 0; k + 1 < cuts.size(); ++k) out.push_back(cuts[k + 1] - cuts[k]);
  return out;
}

inline void ot_suite(const PropertyParams& p, std::uint64_t seed, std::size_t threads, Report& rep)
{
  struct R {
    double gap = 0, slack = 0, infeas = 0;
  };
  const auto inst = parallel_map(p.ot_instances, threads, [&](std::size_t k) {
    std::mt19937_64 rng(derive_seed(seed, "ot", k));
    const std::size_t n = std::uniform_int_distribution<std::size_t>(2, p.ot_max_n)(rng);
    const auto s = random_graph_space(rng, n);
    const double sp = (k % 3 == 0) ? 0.4 : 0.0;
    const auto mu = random_probability(rng, n, sp), nu = random_probability(rng, n, sp);
    const auto r = solve_w2(s, mu, nu);
    const auto a = audit_certificate(half_squared_cost(s), r);
    return R{a.relative_gap, a.max_slackness, a.max_infeasibility};
  });
  R w;
  for (const auto& r : inst) {
    w.gap = std::max(w.gap, r.gap);
    w.slack = std::max(w.slack, r.slack);
    w.infeas = std::max(w.infeas, r.infeas);
  }
  const auto tri = parallel_map(p.triangle_triples, threads, [&](std::size_t k) {
    std::mt19937_64 rng(derive_seed(seed, "triangle", k));
    const std::size_t n = std::uniform_int_distribution<std::size_t>(2, 20)(rng);
    const auto s = random_graph_space(rng, n);
    const auto a = random_probability(rng, n), b = random_probability(rng, n), c = random_probability(rng, n);
    return w2_distance(s, a, c) - w2_distance(s, a, b) - w2_distance(s, b, c);
  });
  const auto orc = parallel_map(p.oracle_instances, threads, [&](std::size_t k) {
    std::mt19937_64 rng(derive_seed(seed, "oracle", k));
    const std::size_t n = 2 + k % 2;
    const int K = 12;
    const auto s = random_graph_space(rng, n, 0.5);
    const auto a = lattice_composition(rng, n, K), b = lattice_composition(rng, n, K);
    std::vector<double> mu(n), nu(n);
    for (std::size_t i = 0; i < n; ++i) {
      mu[i] = double(a[i]) / K;
      nu[i] = double(b[i]) / K;
    }
    const auto cost = half_squared_cost(s);
    const auto r = solve_w2(s, ProbabilityMeasure(mu), ProbabilityMeasure(nu));
    return std::abs(r.cert.primal - lattice_transport_oracle(cost, a, b, K));
  });
  double tri_worst = -std::numeric_limits<double>::infinity(), orc_worst = 0.0;
  for (double v : tri) tri_worst = std::max(tri_worst, v);
  for (double v : orc) orc_worst = std::max(orc_worst, v);
  rep.metrics["ot"] = {{"instances", p.ot_instances},
                       {"max_n", p.ot_max_n},
                       {"triangle_triples", p.triangle_triples},
                       {"oracle_instances", p.oracle_instances}};
  rep.check_le("ot_relative_duality_gap", w.gap, 1e-9);
  rep.check_le("ot_complementary_slackness", w.slack, 1e-9);
  rep.check_le("ot_dual_infeasibility", w.infeas, 1e-9);
  rep.check_le("ot_triangle_violation", std::max(tri_worst, 0.0), 1e-9);
  rep.check_le("ot_lattice_oracle_agreement", orc_worst, 1e-6);
}

inline void heat_suite(const PropertyParams& p, std::uint64_t seed, std::size_t threads, Report& rep)
{
  struct R {
    double mass = 0, comparison = 0, contraction = 0, entropy = 0, flow_mass = 0;
  };
  const auto inst = parallel_map(p.heat_instances, threads, [&](std::size_t k) {
    std::mt19937_64 rng(derive_seed(seed, "heat", k));
    const std::size_t n = std::uniform_int_distribution<std::size_t>(2, 24)(rng);
    const auto form = random_dirichlet_form(rng, n);
    const double lambda = std::exp(std::uniform_real_distribution<double>(std::log(1e-3), std::log(10.0))(rng));
    const auto f = random_values(rng, n, 0.05, 2.0);
    auto g = f;
    for (double& x : g) x += std::uniform_real_distribution<double>(0.0, 0.5)(rng);
    const auto h = random_values(rng, n, -1.0, 1.0);
    const auto Jf = resolvent(form, f, lambda), Jg = resolvent(form, g, lambda), Jh = resolvent(form, h, lambda);
    R r;
    r.mass = std::abs(weighted_mass(form, Jf) - weighted_mass(form, f));
    for (std::size_t x = 0; x < n; ++x) r.comparison = std::max(r.comparison, Jf[x] - Jg[x]);
    for (int q : {0, 1, 2}) {
      double a = 0.0, b = 0.0;
      for (std::size_t x = 0; x < n; ++x) {
        const double u = std::abs(Jf[x] - Jh[x]), v = std::abs(f[x] - h[x]);
        if (q == 0) {
          a = std::max(a, u);
          b = std::max(b, v);
        } else {
          a += form.measure()[x] * std::pow(u, q);
          b += form.measure()[x] * std::pow(v, q);
        }
      }
      if (q == 2) {
        a = std::sqrt(a);
        b = std::sqrt(b);
      }
      r.contraction = std::max(r.contraction, a - b);
    }
    r.entropy = density_entropy(form, Jf) - density_entropy(form, f);
    const auto traj = heat_flow(form, f, lambda, 10);
    r.flow_mass = flow_diagnostics(form, traj, [](double x) { return xlogx(x); }).max_mass_drift;
    return r;
  });
  R w;
  for (const auto& r : inst) {
    w.mass = std::max(w.mass, r.mass);
    w.comparison = std::max(w.comparison, r.comparison);
    w.contraction = std::max(w.contraction, r.contraction);
    w.entropy = std::max(w.entropy, r.entropy);
    w.flow_mass = std::max(w.flow_mass, r.flow_mass);
  }
  // Two-point spectral solution against the step-size bound.
  const DirichletForm two({{0, 1, 1.0}}, {1.0, 1.0});
  double worst_ratio = 0.0;
  json spectral = json::array();
  for (double t : {0.1, 0.5, 2.0})
    for (std::size_t n : {10u, 100u, 1000u}) {
      const ScalarField f0{1.0, 0.0};
      const auto end = heat_flow(two, f0, t, n).fields.back();
      const double exact = 0.5 + 0.5 * std::exp(-2.0 * t);
      const double err2 = weighted_norm_sq(two, ScalarField{end[0] - exact, end[1] - (1.0 - exact)});
      const double bound = resolvent_error_bound(two, f0, t, n);
      worst_ratio = std::max(worst_ratio, err2 / bound);
      spectral.push_back({{"t", t}, {"n_steps", n}, {"error_sq", err2}, {"bound", bound}});
    }
  rep.metrics["heat"] = {{"instances", p.heat_instances}, {"two_point_spectral", std::move(spectral)}};
  rep.check_le("heat_mass_drift_per_step", std::max(w.mass, w.flow_mass), 1e-10);
  rep.check_le("heat_comparison_violation", w.comparison, 1e-12);
  rep.check_le("heat_contraction_violation", w.contraction, 1e-12);
  rep.check_le("heat_convex_entropy_increase", w.entropy, 1e-12);
  rep.check_le("heat_two_point_error_over_bound", worst_ratio, 1.0);
}

inline void convexity_suite(const PropertyParams& p, std::uint64_t seed, std::size_t threads, Report& rep)
{
  struct R {
    double fisher = 0, slope = 0, gamma = 0, oracle = 0;
  };
  const auto inst = parallel_map(p.convexity_trials, threads, [&](std::size_t k) {
    std::mt19937_64 rng(derive_seed(seed, "convexity", k));
    const std::size_t n = std::uniform_int_distribution<std::size_t>(2, 10)(rng);
    const auto s = random_graph_space(rng, n);
    const auto form = natural_form(s);
    const double sp = (k % 4 == 0) ? 0.3 : 0.0;
    const auto m1 = random_probability(rng, n, sp), m2 = random_probability(rng, n, sp);
    const double alpha = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
    std::vector<double> mix(n);
    for (std::size_t i = 0; i < n; ++i) mix[i] = alpha * m1[i] + (1.0 - alpha) * m2[i];
    const ProbabilityMeasure mm(mix, 1e-10);
    R r;
    const double F1 = fisher(form, m1), F2 = fisher(form, m2);
    r.fisher = fisher(form, mm) - (alpha * F1 + (1.0 - alpha) * F2);
    const double S1 = std::pow(entropy_slope(form, m1), 2), S2 = std::pow(entropy_slope(form, m2), 2);
    const double Sm = std::pow(entropy_slope(form, mm), 2);
    r.slope = Sm - (alpha * S1 + (1.0 - alpha) * S2);
    Matrix plan(n, n);
    double tot = 0.0;
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (double& x : plan.data()) tot += (x = u(rng) < 0.3 ? 0.0 : u(rng));
    for (std::size_t i = 0; i < n; ++i)
      if (plan(i, i) == 0.0) tot += (plan(i, i) = 0.1);
    for (double& x : plan.data()) x /= tot;
    const auto g = Coupling::from_plan(std::move(plan));
    r.gamma = g_gamma(s, g, mm) - (alpha * g_gamma(s, g, m1) + (1.0 - alpha) * g_gamma(s, g, m2));
    if (k % 20 == 0) {
      std::vector<ProbabilityMeasure> cand{ProbabilityMeasure::from_density(std::vector<double>(n, 1.0), s.measure)};
      for (std::size_t c = 0; c < 6; ++c) cand.push_back(random_probability(rng, n));
      const double o = slope_oracle(s, mm, cand).value;
      r.oracle = o * o - (alpha * S1 + (1.0 - alpha) * S2);
    }
    return r;
  });
  R w;
  for (const auto& r : inst) {
    w.fisher = std::max(w.fisher, r.fisher);
    w.slope = std::max(w.slope, r.slope);
    w.gamma = std::max(w.gamma, r.gamma);
    w.oracle = std::max(w.oracle, r.oracle);
  }
  rep.metrics["convexity"] = {{"trials", p.convexity_trials}};
  rep.check_le("fisher_convexity_violation", w.fisher, 1e-10);
  rep.check_le("squared_slope_convexity_violation", w.slope, 1e-10);
  rep.check_le("g_gamma_convexity_violation", w.gamma, 1e-10);
  rep.check_le("oracle_below_convex_combination", w.oracle, 1e-6, "every 20th trial, 7 candidates");
}

inline void slope_suite(const PropertyParams& p, std::uint64_t seed, std::size_t threads, Report& rep)
{
  const auto small = parallel_map(p.slope_instances, threads, [&](std::size_t k) {
    std::mt19937_64 rng(derive_seed(seed, "slope", k));
    const std::size_t n = std::uniform_int_distribution<std::size_t>(2, 8)(rng);
    const auto s = random_graph_space(rng, n);
    const auto mu = random_probability(rng, n, k % 3 == 0 ? 0.3 : 0.0);
    const auto cand = slope_candidates(s, mu, p.slope_samples, derive_seed(seed, "slope-cand", k), 8);
    return slope_oracle(s, mu, cand).value - entropy_slope(natural_form(s), mu);
  });
  double worst = -std::numeric_limits<double>::infinity();
  for (double v : small) worst = std::max(worst, v);
  rep.check_le("oracle_minus_formula_small", worst, 1e-6);

  const auto ladder = parallel_map(p.slope_ladder.size(), threads, [&](std::size_t g) {
    SpaceSpec spec;
    spec.kind = SpaceKind::circle;
    spec.n = p.slope_ladder[g];
    const auto s = build_space(spec);
    const auto mu = measure_from_expression(s, p.slope_density);
    const auto cand = slope_candidates(s, mu, p.slope_samples, derive_seed(seed, "slope-ladder", g), 16);
    const double o = slope_oracle(s, mu, cand).value;
    const double f = entropy_slope(natural_form(s), mu);
    return std::pair{o, f};
  });
  json rows = json::array();
  for (std::size_t g = 0; g < ladder.size(); ++g) {
    const auto [o, f] = ladder[g];
    rows.push_back({{"n", p.slope_ladder[g]}, {"oracle", o}, {"formula", f}, {"ratio", o / f}});
    rep.add_series("slope_ratio", double(p.slope_ladder[g]), o / f);
    if (o > f + 1e-6) worst = std::max(worst, o - f);
  }
  rep.metrics["slope"] = {{"instances", p.slope_instances}, {"density", p.slope_density}, {"ladder", std::move(rows)}};
  const auto [o, f] = ladder.back();
  rep.check_le("oracle_formula_ratio_gap_finest", std::abs(1.0 - o / f), p.slope_ratio_tol,
               "n=" + std::to_string(p.slope_ladder.back()));
}

} // namespace detail

inline Report property_suites(const PropertyParams& p, std::uint64_t seed, std::size_t threads = 1)
{
  Report rep;
  rep.experiment = "property_suites";
  rep.seed = seed;
  for (const auto& s : p.suites) {
    if (s == "ot") detail::ot_suite(p, seed, threads, rep);
    else if (s == "heat") detail::heat_suite(p, seed, threads, rep);
    else if (s == "convexity") detail::convexity_suite(p, seed, threads, rep);
    else if (s == "slope") detail::slope_suite(p, seed, threads, rep);
  }
  return rep;
}

// ------------------------------------------------------------ scenarios

struct RunOptions {
  std::optional<std::uint64_t> seed; // overrides the scenario seed
  std::size_t threads = 1;
  std::string out_dir;               // overrides the scenario output directory
  bool write = true;
};

inline constexpr std::uint64_t kDefaultSeed = 20240607;

inline Report run_experiment(const Scenario& sc, std::uint64_t seed, std::size_t threads)
{
  Report r;
  switch (sc.experiment) {
  case Experiment::hopflax_suite: r = hopflax_suite(sc.hopflax, seed, threads); break;
  case Experiment::identify: r = experiment_identify(sc.identify, seed, threads); break;
  case Experiment::brenier: r = experiment_brenier(sc.brenier, seed, threads); break;
  case Experiment::gamma_monotone: r = experiment_gamma_monotone(sc.gamma, seed, threads); break;
  case Experiment::property_suites: r = property_suites(sc.property, seed, threads); break;
  }
  r.name = sc.name;
  return r;
}

/// Runs one scenario and writes <dir>/report.json and <dir>/series.csv.
inline Report run_scenario(const Scenario& sc, const RunOptions& opt = {})
{
  const std::uint64_t seed = opt.seed.value_or(sc.seed.value_or(kDefaultSeed));
  Report r = run_experiment(sc, seed, opt.threads);
  if (opt.write) {
    std::filesystem::path dir = opt.out_dir.empty() ? std::filesystem::path(sc.output_dir.empty() ? "out" : sc.output_dir)
                                                    : std::filesystem::path(opt.out_dir);
    dir /= sc.name;
    std::filesystem::create_directories(dir);
    io::write_json((dir / "report.json").string(), r.to_json());
    std::ofstream csv(dir / "series.csv");
    csv << r.series_csv();
    if (!csv) fail("cannot write ", (dir / "series.csv").string());
  }
  return r;
}

} // namespace mmslab::harness
