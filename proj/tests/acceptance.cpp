// Prints one PASS/FAIL line per acceptance criterion and exits nonzero if any fails.
#include "qpc/harness.hpp"

#include <cstdio>
#include <iostream>

using namespace qpc;

namespace {

constexpr double kOrbitBudgetSeconds = 120;
constexpr double kGapBudgetSeconds = 600;
constexpr double kRotationTolerance = 1e-12;
constexpr double kConstantTolerance = 1e-13;
constexpr double kSchrodingerTolerance = 1e-9;
constexpr std::int64_t kSchrodingerHorizon = 10000;

int failures = 0;

std::string seconds_text(double s) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.1f s", s);
  return buf;
}

void line(int id, bool ok, const std::string& what, const std::string& detail) {
  if (!ok) ++failures;
  std::printf("[%s] %2d %s: %s\n", ok ? "PASS" : "FAIL", id, what.c_str(), detail.c_str());
  std::fflush(stdout);
}

bool check_ok(const SuiteReport& rep, const std::string& name) {
  const auto* c = rep.find(name);
  return c && c->passed;
}

std::string witness(const SuiteReport& rep, const std::string& name) {
  const auto* c = rep.find(name);
  if (!c) return "check missing";
  return c->witness.empty() ? "ok" : c->witness;
}

template <class F>
auto timed(F&& fn, double& seconds) {
  const auto t0 = std::chrono::steady_clock::now();
  auto out = fn();
  seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return out;
}

// Sums points/mismatches over every family and level of an orbit check.
struct OrbitCounts {
  std::int64_t points = 0, mismatches = 0, brute_levels = 0, search_levels = 0, disagreements = 0;
};

OrbitCounts orbit_counts(const CheckResult& c) {
  OrbitCounts out;
  for (const auto& [fam, levels] : c.details.items()) {
    if (!levels.is_object()) continue;
    for (const auto& [lvl, t] : levels.items()) {
      out.points += t.value("points", std::int64_t{0});
      out.mismatches += t.value("mismatches", std::int64_t{0});
      out.disagreements += t.value("oracle_disagreements", std::int64_t{0});
      (t.value("cap_bound", false) ? out.search_levels : out.brute_levels) += 1;
    }
  }
  return out;
}

std::string describe(const OrbitCounts& c) {
  return std::to_string(c.points) + " points, " + std::to_string(c.mismatches) + " mismatches, " +
         std::to_string(c.brute_levels) + " levels brute+search, " + std::to_string(c.search_levels) +
         " levels search only, " + std::to_string(c.disagreements) + " oracle disagreements";
}

}  // namespace

int main(int argc, char** argv) {
  const std::string source = argc > 1 ? argv[1] : QPC_SOURCE_DIR;
  auto cfg = config_from_json(Json::parse(read_file(source + "/configs/desk.json")));
  cfg.trials = 10000;

  double orbit_s = 0;
  const auto orbit = timed([&] { return run_suite("orbit-oracle", cfg); }, orbit_s);
  {
    const auto* ret = orbit.find("return-time-oracle");
    const auto counts = ret ? orbit_counts(*ret) : OrbitCounts{};
    const bool ok = check_ok(orbit, "return-time-oracle") && check_ok(orbit, "symmetric-partition") &&
                    orbit_s < kOrbitBudgetSeconds;
    line(1, ok, "return-time oracle",
         describe(counts) + ", symmetric " + witness(orbit, "symmetric-partition") + ", suite " +
             seconds_text(orbit_s) + " (budget " + seconds_text(kOrbitBudgetSeconds) + ")");
  }
  line(2, check_ok(orbit, "three-distance"), "three-distance", witness(orbit, "three-distance"));
  {
    const auto* c = orbit.find("self-return");
    line(3, check_ok(orbit, "self-return"), "self-return times",
         (c ? describe(orbit_counts(*c)) : std::string("missing")) + ", " + witness(orbit, "self-return"));
  }
  {
    const auto* c = orbit.find("first-entry");
    line(4, check_ok(orbit, "first-entry"), "first-entry bound",
         (c ? describe(orbit_counts(*c)) : std::string("missing")) + ", " + witness(orbit, "first-entry"));
  }

  const auto sl2 = run_suite("sl2-lemmas", cfg);
  auto detail_of = [](const SuiteReport& rep, const std::string& name) {
    const auto* c = rep.find(name);
    return c ? c->details.dump() : std::string("missing");
  };
  line(5, check_ok(sl2, "svd-reconstruction"), "SVD reconstruction", detail_of(sl2, "svd-reconstruction"));
  line(6, check_ok(sl2, "nonresonant-product"), "non-resonant product", detail_of(sl2, "nonresonant-product"));
  line(7, check_ok(sl2, "resonant-cancellation"), "resonant cancellation", detail_of(sl2, "resonant-cancellation"));
  line(8, check_ok(sl2, "faa-di-bruno"), "Faa di Bruno identity", witness(sl2, "faa-di-bruno"));

  const auto construction = run_suite("construction-step", cfg);
  {
    std::string bad;
    for (const auto& c : construction.checks)
      if (!c.passed) bad += c.name + "(" + c.witness + ") ";
    line(9, construction.passed(), "construction-step verification",
         bad.empty() ? std::to_string(construction.checks.size()) + " checks passed" : bad);
  }

  double gap_s = 0;
  const auto gap = timed([&] { return run_suite("le-gap", cfg); }, gap_s);
  {
    std::string summary;
    if (const auto* c = gap.find("gap-margin"))
      for (const auto& run : c->details.at("runs")) {
        if (!run.contains("experiment")) continue;
        double worst = INFINITY;
        for (const auto& p : run.at("experiment").at("points")) worst = std::min(worst, p.at("gap_over_log_lambda").get<double>());
        summary += "lambda=" + format_double(run.at("lambda").get<double>()) + " min gap/log(lambda)=" +
                   format_double(worst) + "; ";
      }
    std::string bad;
    for (const auto& c : gap.checks)
      if (!c.passed) bad += c.name + "(" + c.witness + ") ";
    line(10, gap.passed() && gap_s <= kGapBudgetSeconds, "LE gap",
         summary + (bad.empty() ? "" : "failed: " + bad) + seconds_text(gap_s) + " (budget " + seconds_text(kGapBudgetSeconds) + ")");
  }

  {
    const auto table = FrequencySpec{GrowthRule(rules::Constant{1}), 30}.table();
    const CocycleSpec rotation{table, generators::RotHyp{0.0, function_phi([](double x) {
                                                            return 0.3 + std::sin(2 * std::numbers::pi * x);
                                                          })}};
    const CocycleSpec constant{table, generators::RotHyp{std::log(30.0), constant_phi(std::numbers::pi / 2)}};
    const CocycleSpec free{table, generators::Schrodinger{3.0, constant_phi(0.0)}};
    const double rot = finite_le(rotation, kSchrodingerHorizon, 64).value;
    const double lam = finite_le(constant, kSchrodingerHorizon, 64).value - std::log(30.0);
    const double sch = finite_le(free, kSchrodingerHorizon, 64).value - std::log((3 + std::sqrt(5.0)) / 2);
    const bool ok = std::abs(rot) <= kRotationTolerance && std::abs(lam) <= kConstantTolerance &&
                    std::abs(sch) <= kSchrodingerTolerance;
    line(11, ok, "cocycle sanity",
         "rotation " + format_double(rot) + ", constant Lambda error " + format_double(lam) +
             ", Schrodinger E=3 error " + format_double(sch) + " at N=" + std::to_string(kSchrodingerHorizon) +
             " (tolerance " + format_double(kSchrodingerTolerance) + ")");
  }

  {
    std::string bad;
    for (const std::string suite : {"sl2-lemmas", "construction-step", "le-gap"}) {
      auto c1 = cfg, c3 = cfg;
      c1.workers = 1;
      c3.workers = 3;
      if (suite == "sl2-lemmas") c1.trials = c3.trials = 2000;
      if (dump_json(to_json(run_suite(suite, c1))) != dump_json(to_json(run_suite(suite, c3)))) bad += suite + " ";
    }
    line(12, bad.empty(), "determinism across workers 1 and 3",
         bad.empty() ? "sl2-lemmas, construction-step, le-gap byte-identical" : "differs: " + bad);
  }

  std::printf("%d of 12 criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
