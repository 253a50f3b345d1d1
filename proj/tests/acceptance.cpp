// One line per acceptance criterion; exit status 0 iff every line passes.
// Usage: mmslab_acceptance [AC4 AC7 ...] [--threads N]

#include <chrono>
#include <cstdio>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

#include "mmslab/harness.hpp"

using namespace mmslab;
using namespace mmslab::harness;

namespace {

constexpr std::uint64_t kSeed = 20240607;

struct Outcome {
  bool passed = true;
  std::string detail;
};

class Timer {
public:
  [[nodiscard]] double seconds() const
  {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

std::string fmt(double x)
{
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", x);
  return buf;
}

/// Judges the named checks of a report (all checks when `names` is empty)
/// plus a wall-clock budget.
Outcome judge(const Report& r, const std::vector<std::string>& names, double secs, double budget)
{
  Outcome o;
  std::ostringstream os;
  std::vector<const Check*> picked;
  if (names.empty()) {
    for (const auto& c : r.checks) picked.push_back(&c);
  } else {
    for (const auto& n : names) {
      const Check* c = r.find(n);
      if (!c) {
        o.passed = false;
        os << n << " missing; ";
        continue;
      }
      picked.push_back(c);
    }
  }
  for (const auto* c : picked) {
    o.passed = o.passed && c->passed;
    os << c->name << '=' << fmt(c->value);
    if (c->relation == "<=" || c->relation == ">=") os << ' ' << c->relation << ' ' << fmt(c->tolerance);
    else os << " (" << c->relation << ')';
    os << (c->passed ? " ok; " : " FAILED; ");
  }
  const bool in_time = secs < budget;
  o.passed = o.passed && in_time;
  os << "runtime " << fmt(secs) << "s < " << fmt(budget) << "s" << (in_time ? " ok" : " FAILED");
  o.detail = os.str();
  return o;
}

PropertyParams only(std::string suite)
{
  PropertyParams p;
  p.suites = {std::move(suite)};
  return p;
}

SpaceSpec circle(std::size_t n)
{
  SpaceSpec s;
  s.kind = SpaceKind::circle;
  s.n = n;
  return s;
}

} // namespace

int main(int argc, char** argv)
{
  std::set<std::string> wanted;
  std::size_t threads = std::max(1u, std::thread::hardware_concurrency());
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--threads" && i + 1 < argc) threads = std::stoul(argv[++i]);
    else wanted.insert(a);
  }
  auto want = [&](const std::string& id) { return wanted.empty() || wanted.count(id); };

  std::map<std::string, std::pair<std::string, Outcome>> lines;
  auto record = [&](const std::string& id, const std::string& title, Outcome o) {
    std::cout << id << ' ' << (o.passed ? "PASS" : "FAIL") << "  " << title << "  [" << o.detail << "]" << std::endl;
    lines[id] = {title, std::move(o)};
  };
  auto guarded = [&](const std::string& id, const std::string& title, auto body) {
    if (!want(id)) return;
    try {
      body();
    } catch (const std::exception& e) {
      record(id, title, {false, std::string("exception: ") + e.what()});
    }
  };

  guarded("AC1", "exact Hopf-Lax suite", [&] {
    Timer t;
    const auto r = hopflax_suite({}, kSeed, threads);
    record("AC1", "exact Hopf-Lax suite", judge(r, {}, t.seconds(), 10.0));
  });
  guarded("AC2", "OT certificates", [&] {
    Timer t;
    const auto r = property_suites(only("ot"), kSeed, threads);
    record("AC2", "OT certificates", judge(r, {}, t.seconds(), 30.0));
  });
  guarded("AC3", "heat-flow exactness", [&] {
    Timer t;
    const auto r = property_suites(only("heat"), kSeed, threads);
    record("AC3", "heat-flow exactness", judge(r, {}, t.seconds(), 20.0));
  });
  if (want("AC4") || want("AC5")) {
    guarded(want("AC4") ? "AC4" : "AC5", "identification", [&] {
      IdentifyParams p;
      p.base = circle(64);
      Timer t;
      const auto r = experiment_identify(p, kSeed, threads);
      const double secs = t.seconds();
      if (want("AC4"))
        record("AC4", "identification at continuum scale",
               judge(r,
                     {"heat_vs_fourier_linf_n64", "ede_relative_residual", "jko_vs_heat_tv_reference",
                      "jko_tv_decreasing_h_and_dx_halved"},
                     secs, 300.0));
      if (want("AC5"))
        record("AC5", "entropy dissipation",
               judge(r, {"entropy_rate_vs_fisher_relative", "dissipation_minus_fisher_min"}, secs, 300.0));
    });
  }
  guarded("AC6", "convexity suites", [&] {
    Timer t;
    const auto r = property_suites(only("convexity"), kSeed, threads);
    record("AC6", "convexity suites",
           judge(r, {"fisher_convexity_violation", "squared_slope_convexity_violation", "g_gamma_convexity_violation"},
                 t.seconds(), 30.0));
  });
  guarded("AC7", "metric Brenier", [&] {
    BrenierParams p;
    p.base = circle(32);
    Timer t;
    const auto r = experiment_brenier(p, kSeed, threads);
    record("AC7", "metric Brenier", judge(r, {}, t.seconds(), 120.0));
  });
  guarded("AC8", "slope consistency", [&] {
    Timer t;
    const auto r = property_suites(only("slope"), kSeed, threads);
    record("AC8", "slope consistency", judge(r, {}, t.seconds(), 60.0));
  });
  guarded("AC9", "Gamma-monotone heat flows", [&] {
    GammaParams p;
    p.space = circle(64);
    Timer t;
    const auto r = experiment_gamma_monotone(p, kSeed, threads);
    record("AC9", "Gamma-monotone heat flows", judge(r, {}, t.seconds(), 60.0));
  });

  std::size_t failed = 0;
  for (const auto& [id, line] : lines) failed += line.second.passed ? 0 : 1;
  std::cout << "acceptance: " << lines.size() - failed << "/" << lines.size() << " criteria pass" << std::endl;
  return failed == 0 ? 0 : 1;
}
