#pragma once

#include "qpc/config.hpp"

#include <boost/random/mersenne_twister.hpp>
#include <boost/random/uniform_int_distribution.hpp>
#include <boost/random/uniform_real_distribution.hpp>

#include <chrono>
#include <functional>
#include <map>

namespace qpc {

struct CheckResult {
  std::string name;
  std::string invariant;
  bool passed = false;
  std::string witness;  // first violating input, empty when passed
  Json details = Json::object();
};

struct SuiteReport {
  std::string suite;
  std::string config_sha256;
  std::vector<CheckResult> checks;

  bool passed() const {
    for (const auto& c : checks)
      if (!c.passed) return false;
    return !checks.empty();
  }
  const CheckResult* find(const std::string& name) const {
    for (const auto& c : checks)
      if (c.name == name) return &c;
    return nullptr;
  }
};

inline Json to_json(const SuiteReport& r) {
  Json j;
  j["schema_version"] = kSchemaVersion;
  j["suite"] = r.suite;
  j["config_sha256"] = r.config_sha256;
  j["passed"] = r.passed();
  j["checks"] = Json::array();
  for (const auto& c : r.checks) {
    Json cj;
    cj["name"] = c.name;
    cj["invariant"] = c.invariant;
    cj["passed"] = c.passed;
    cj["witness"] = c.witness.empty() ? Json(nullptr) : Json(c.witness);
    cj["details"] = c.details;
    j["checks"].push_back(cj);
  }
  return j;
}

inline Json big_json(const BigInt& v) { return detail::big_to_json(v); }

// Deterministic per-purpose generator.
inline boost::random::mt19937_64 stream(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0,
                                        std::uint64_t c = 0) {
  std::uint64_t h = seed * 0x9E3779B97F4A7C15ULL ^ (a + 0x632BE59BD9B4E019ULL);
  h = (h ^ (h >> 31)) * 0xBF58476D1CE4E5B9ULL + b;
  h = (h ^ (h >> 29)) * 0x94D049BB133111EBULL + c;
  return boost::random::mt19937_64(h ^ (h >> 32));
}

// ---------------------------------------------------------------------------
// orbit-oracle

struct NamedFrequency {
  std::string name;
  FrequencySpec spec;
};

inline std::vector<NamedFrequency> oracle_families(std::size_t depth = 15) {
  std::vector<NamedFrequency> out;
  out.push_back({"golden", {GrowthRule(rules::Constant{1}), depth}});
  out.push_back({"silver", {GrowthRule(rules::Constant{2}), depth}});
  rules::Spike sp;
  sp.base = 1;
  sp.positions = {5};
  sp.factor = 200;
  out.push_back({"spike5", {GrowthRule(sp), depth}});
  out.push_back({"random7", {GrowthRule(rules::Random{7, 1, 9}), depth}});
  out.push_back({"linear", {GrowthRule(rules::Linear{}), depth}});
  return out;
}

constexpr std::int64_t kSampleLattice = std::int64_t(1) << 20;
constexpr int kOracleMinLevel = 2;
constexpr int kOracleMaxLevel = 12;

inline Rational sample_in(const Arc& arc, boost::random::mt19937_64& gen) {
  boost::random::uniform_int_distribution<std::int64_t> d(1, kSampleLattice - 1);
  return frac(arc.lo + arc.len * Rational(d(gen), kSampleLattice));
}

inline Rational closed_endpoint(const Arc& arc) {
  return frac(arc.closure == Closure::left ? arc.lo : Rational(arc.lo + arc.len));
}

// Brute-force iteration is the primary oracle.  When it would exceed the
// budget the level is marked cap-bound and checked with the exact modular
// search instead; where both run they are compared as well.
struct LevelTally {
  std::int64_t points = 0;
  std::int64_t mismatches = 0;
  std::int64_t oracle_disagreements = 0;  // brute vs search
  bool cap_bound = false;
};

inline Json tally_json(const LevelTally& t) {
  return Json{{"points", t.points},
              {"mismatches", t.mismatches},
              {"oracle", t.cap_bound ? "search" : "brute+search"},
              {"oracle_disagreements", t.oracle_disagreements},
              {"cap_bound", t.cap_bound}};
}

inline void tally(LevelTally& t, const std::vector<std::string>& bad, const std::vector<char>& disagree,
                  CheckResult& target) {
  for (std::size_t i = 0; i < bad.size(); ++i) {
    if (!bad[i].empty()) {
      ++t.mismatches;
      if (target.witness.empty()) target.witness = bad[i];
    }
    if (disagree[i]) ++t.oracle_disagreements;
  }
  if (t.mismatches || t.oracle_disagreements) target.passed = false;
  if (t.oracle_disagreements && target.witness.empty()) target.witness = "brute force and search oracles disagree";
}

inline double big_to_double(const BigInt& v) { return std::exp(log_big(v)); }

inline SuiteReport orbit_oracle_suite(const ExperimentConfig& cfg) {
  SuiteReport rep;
  rep.suite = "orbit-oracle";
  rep.config_sha256 = config_hash(cfg);
  const unsigned workers = cfg.worker_count();
  auto families = oracle_families();
  families.push_back({"config", cfg.frequency});

  CheckResult ret{"return-time-oracle", "closed-form r_n^+/r_n^- (asymmetric I_n) equals brute force", true, "", {}};
  CheckResult sym{"symmetric-partition", "closed-form r_n^+/r_n^- on [-b_n, b_n) equals brute force", true, "", {}};
  CheckResult gaps{"three-distance", "gaps of X_n are |z_n| or |z_n|+|z_{n+1}|, successor rule, q_n large gaps", true,
                   "", {}};
  CheckResult self{"self-return", "I_n^0 self-returns lie in {q_{n+2}, q_{n+2}+q_{n+1}}", true, "", {}};
  CheckResult entry{"first-entry", "first_entry_time < q_{n+1}", true, "", {}};
  CheckResult image{"return-map-image", "T^{q_n}(I_n^0)=I_n^1, T^{q_{n+1}}(I_n^i)=I_n^{i+1}, tails in I_n^* u I_n^0",
                    true, "", {}};
  std::int64_t cap_bound_levels = 0;

  for (std::size_t fi = 0; fi < families.size(); ++fi) {
    const auto& fam_spec = families[fi];
    const auto table = fam_spec.spec.table();
    const int top = std::min(kOracleMaxLevel, table->validity_depth());
    Json fam_ret = Json::object(), fam_sym = Json::object(), fam_gap = Json::object(), fam_self = Json::object(),
         fam_entry = Json::object();
    for (int n = kOracleMinLevel; n <= top; ++n) {
      const std::string key = std::to_string(n);
      const BigInt qn = table->q(n), qn1 = table->q(n + 1), qn2 = table->q(n + 2);
      const double step_bound = big_to_double(qn + qn1);

      // return times, both conventions
      for (Convention conv : {Convention::asymmetric, Convention::symmetric}) {
        CheckResult& target = conv == Convention::asymmetric ? ret : sym;
        Json& fam_out = conv == Convention::asymmetric ? fam_ret : fam_sym;
        CriticalIntervalFamily fam(*table, n, conv);
        auto gen = stream(cfg.seed, 1, fi, static_cast<std::uint64_t>(n) * 2 + (conv == Convention::symmetric));
        std::vector<Rational> xs;
        for (const auto& tag : fam.tags()) {
          const Arc piece = fam.piece(tag);
          for (std::int64_t k = 0; k < cfg.samples; ++k) xs.push_back(sample_in(piece, gen));
          xs.push_back(closed_endpoint(piece));
        }
        LevelTally t;
        t.points = static_cast<std::int64_t>(xs.size());
        t.cap_bound = static_cast<double>(xs.size()) * 2 * step_bound > static_cast<double>(cfg.oracle_budget);
        if (t.cap_bound) ++cap_bound_levels;
        std::vector<std::string> bad(xs.size());
        std::vector<char> disagree(xs.size(), 0);
        parallel_for(xs.size(), workers, [&](std::size_t i) {
          const CirclePoint x(xs[i]);
          for (Direction d : {Direction::forward, Direction::backward}) {
            const ReturnTime closed = return_time_closed(x, *table, n, d, conv);
            const BigInt searched = return_time_search(x, *table, n, d, conv);
            BigInt oracle = searched;
            if (!t.cap_bound) {
              oracle = return_time_brute(x, *table, n, d, qn + qn1 + qn2, conv);
              if (oracle != searched) disagree[i] = 1;
            }
            if (closed.time != oracle) {
              bad[i] = fam_spec.name + " n=" + key + " x=" + to_string(xs[i]) + " " + to_string(d) +
                       " closed=" + closed.time.str() + " oracle=" + oracle.str();
              return;
            }
          }
        });
        tally(t, bad, disagree, target);
        fam_out[key] = tally_json(t);
      }

      // three-distance
      {
        Json g;
        if (qn1 > 20'000'000) {
          g["cap_bound"] = true;
          ++cap_bound_levels;
        } else {
          const auto td = three_distance(*table, n);
          const bool ok = td.gaps_two_valued && td.successor_rule_holds && BigInt(td.large_gap_count) == qn;
          g = Json{{"points", td.numerators.size()},
                   {"two_valued", td.gaps_two_valued},
                   {"successor_rule", td.successor_rule_holds},
                   {"large_gaps", td.large_gap_count},
                   {"cap_bound", false}};
          if (!ok) {
            gaps.passed = false;
            if (gaps.witness.empty())
              gaps.witness = fam_spec.name + " n=" + key + " first rule violation q=" +
                             std::to_string(td.first_rule_violation);
          }
        }
        fam_gap[key] = g;
      }

      // I_n^0 self-returns
      {
        CriticalIntervalFamily fam(*table, n, Convention::asymmetric);
        auto gen = stream(cfg.seed, 2, fi, static_cast<std::uint64_t>(n));
        const std::int64_t count = std::max<std::int64_t>(cfg.samples / 2, 1);
        LevelTally t;
        t.points = count;
        t.cap_bound = static_cast<double>(count) * big_to_double(qn2 + qn1) > static_cast<double>(cfg.oracle_budget);
        if (t.cap_bound) ++cap_bound_levels;
        std::vector<Rational> xs;
        for (std::int64_t k = 0; k < count; ++k) xs.push_back(sample_in(fam.piece(SubTag::zero()), gen));
        std::vector<std::string> bad(xs.size());
        std::vector<char> disagree(xs.size(), 0);
        parallel_for(xs.size(), workers, [&](std::size_t i) {
          const CirclePoint x(xs[i]);
          BigInt r = self_return_search(x, *table, n);
          if (!t.cap_bound) {
            const BigInt b = self_return_brute(x, *table, n, qn2 + qn1);
            if (b != r) disagree[i] = 1;
            r = b;
          }
          if (r != qn2 && r != qn2 + qn1)
            bad[i] = fam_spec.name + " n=" + key + " x=" + to_string(xs[i]) + " self-return=" + r.str();
        });
        tally(t, bad, disagree, self);
        fam_self[key] = tally_json(t);
      }

      // first entry
      {
        const std::int64_t count = 1000;
        LevelTally t;
        t.points = count;
        t.cap_bound = static_cast<double>(count) * big_to_double(qn1) > static_cast<double>(cfg.oracle_budget);
        if (t.cap_bound) ++cap_bound_levels;
        auto gen = stream(cfg.seed, 3, fi, static_cast<std::uint64_t>(n));
        std::vector<Rational> xs;
        for (std::int64_t k = 0; k < count; ++k) xs.push_back(sample_in(Arc{0, 1, Closure::left}, gen));
        std::vector<std::string> bad(xs.size());
        std::vector<char> disagree(xs.size(), 0);
        parallel_for(xs.size(), workers, [&](std::size_t i) {
          const CirclePoint x(xs[i]);
          const BigInt searched = first_entry_search(x, *table, n);
          if (!t.cap_bound) {
            try {
              if (first_entry_time(x, *table, n) != searched) disagree[i] = 1;
            } catch (const CapError&) {
              disagree[i] = searched < qn1;
            }
          }
          if (!(searched < qn1))
            bad[i] = fam_spec.name + " n=" + key + " x=" + to_string(xs[i]) + " entry=" + searched.str();
        });
        tally(t, bad, disagree, entry);
        fam_entry[key] = tally_json(t);
      }

      // return-map images (exact endpoint arithmetic)
      {
        CriticalIntervalFamily fam(*table, n, Convention::asymmetric);
        for (const auto& tag : fam.tags()) {
          const auto ic = return_map_image(*table, n, tag);
          if (!ic.exact) {
            image.passed = false;
            if (image.witness.empty()) image.witness = fam_spec.name + " n=" + key + " piece " + tag.str();
          }
        }
      }
    }
    ret.details[fam_spec.name] = fam_ret;
    sym.details[fam_spec.name] = fam_sym;
    gaps.details[fam_spec.name] = fam_gap;
    self.details[fam_spec.name] = fam_self;
    entry.details[fam_spec.name] = fam_entry;
  }
  ret.details["cap_bound_levels_total"] = cap_bound_levels;
  rep.checks = {ret, sym, gaps, self, entry, image};
  return rep;
}

// ---------------------------------------------------------------------------
// sl2-lemmas

constexpr double kSvdTolerance = 1e-12;
constexpr double kMaxCondition = 1e8;

inline Mat2 framed(double u, double log_norm, double s) {
  return frame_matrix(FrameDecomp{u, log_norm, s, true});
}

inline SuiteReport sl2_lemmas_suite(const ExperimentConfig& cfg) {
  SuiteReport rep;
  rep.suite = "sl2-lemmas";
  rep.config_sha256 = config_hash(cfg);
  using Uni = boost::random::uniform_real_distribution<double>;

  {  // SVD reconstruction
    CheckResult c{"svd-reconstruction", "A = R_u diag(e^l, e^-l) R_{pi/2-s} within 1e-12 relative", true, "", {}};
    auto gen = stream(cfg.seed, 10);
    Uni ang(0, 2 * kPi), cond(0, 0.5 * std::log(kMaxCondition));
    double worst = 0;
    for (std::int64_t t = 0; t < cfg.trials; ++t) {
      const double th1 = ang(gen), th2 = ang(gen), l = cond(gen);
      const Mat2 a = rotation(th1) * diagonal(std::exp(l), std::exp(-l)) * rotation(th2);
      const FrameDecomp f = svd_frame(a, 1.0);
      const Mat2 r = frame_matrix(f);
      // angles live in RP^1, so the frame fixes A up to the sign of both rotations
      const Mat2 dm{a.a - r.a, a.b - r.b, a.c - r.c, a.d - r.d};
      const Mat2 dp{a.a + r.a, a.b + r.b, a.c + r.c, a.d + r.d};
      const double err = std::min(op_norm(dm), op_norm(dp)) / op_norm(a);
      if (err > worst) worst = err;
      if (!(err <= kSvdTolerance) && c.passed) {
        c.passed = false;
        c.witness = "trial " + std::to_string(t) + " theta1=" + format_double(th1) + " theta2=" + format_double(th2) +
                    " log_norm=" + format_double(l);
      }
    }
    c.details = Json{{"trials", cfg.trials}, {"max_condition", kMaxCondition}, {"worst_relative_error", worst},
                     {"tolerance", kSvdTolerance}};
    rep.checks.push_back(c);
  }

  {  // non-resonant products
    CheckResult c{"nonresonant-product",
                  "|e3 - e1 e2|sin t|| <= 10 e0^{-1/2}, |s3-s1| <= e1^{-7/4}, |u3-u2| <= e2^{-7/4}", true, "", {}};
    auto gen = stream(cfg.seed, 11);
    Uni ang(0, kPi), loge(std::log(1e4), std::log(1e6)), unit(0, 1);
    double worst_norm = 0, worst_s = 0, worst_u = 0;
    std::int64_t violations = 0;
    for (std::int64_t t = 0; t < cfg.trials; ++t) {
      const double l1 = loge(gen), l2 = loge(gen);
      const double e0 = std::exp(std::min(l1, l2));
      const double tmin = std::pow(e0, -0.01);
      double theta = tmin + (kPi / 2 - tmin) * unit(gen);
      if (unit(gen) < 0.5) theta = -theta;
      const double u1 = ang(gen), s1 = ang(gen), u2 = ang(gen);
      const auto e1 = LogScaledMat2::from(framed(u1, l1, s1));
      const auto e2 = LogScaledMat2::from(framed(u2, l2, canonical_angle(u1 + theta)));
      const auto r = nonresonant_product_check(e1, e2, 0.01);
      worst_norm = std::max(worst_norm, r.discrepancy / r.norm_bound);
      worst_s = std::max(worst_s, r.drift_s / r.bound_s);
      worst_u = std::max(worst_u, r.drift_u / r.bound_u);
      if (!r.admissible || !r.passes) {
        ++violations;
        if (c.witness.empty())
          c.witness = "trial " + std::to_string(t) + " log_e1=" + format_double(l1) + " log_e2=" + format_double(l2) +
                      " theta=" + format_double(theta) + (r.admissible ? "" : " (not admissible)");
      }
    }
    c.passed = violations == 0;
    c.details = Json{{"trials", cfg.trials},
                     {"violations", violations},
                     {"worst_norm_ratio", worst_norm},
                     {"worst_s_drift_ratio", worst_s},
                     {"worst_u_drift_ratio", worst_u},
                     {"constant", kNonresonantConstant}};
    rep.checks.push_back(c);
  }

  {  // resonant cancellation
    CheckResult c{"resonant-cancellation", "u(A)=s(B) => ||BA|| <= 2 max{l^m l^-n, l^n l^-m}; misaligned control fails",
                  true, "", {}};
    auto gen = stream(cfg.seed, 12);
    Uni ang(0, kPi), logl(std::log(2.0), std::log(10.0));
    boost::random::uniform_int_distribution<int> pw(1, 7);
    const std::int64_t count = 1000;
    std::int64_t violations = 0, control_violations = 0;
    double worst_margin = -INFINITY;
    for (std::int64_t t = 0; t < count; ++t) {
      const double ll = logl(gen);
      int m = pw(gen), n = pw(gen);
      while (ll * std::max(m, n) > std::log(1e7)) {
        m = std::max(1, m - 1);
        n = std::max(1, n - 1);
        if (m == 1 && n == 1) break;
      }
      const double ua = ang(gen), sa = ang(gen), ub = ang(gen);
      const auto a = LogScaledMat2::from(framed(ua, ll * m, sa));
      const auto b = LogScaledMat2::from(framed(ub, ll * n, ua));
      const auto r = resonant_cancellation_check(a, b, {ll, double(m)}, {ll, double(n)});
      worst_margin = std::max(worst_margin, r.log_norm_product - r.log_bound);
      if (!r.aligned || !r.holds) {
        ++violations;
        if (c.witness.empty())
          c.witness = "trial " + std::to_string(t) + " log_lambda=" + format_double(ll) + " m=" + std::to_string(m) +
                      " n=" + std::to_string(n);
      }
      const auto bc = LogScaledMat2::from(framed(ub, ll * n, canonical_angle(ua + 1e-3)));
      const auto rc = resonant_cancellation_check(a, bc, {ll, double(m)}, {ll, double(n)});
      if (!rc.holds) ++control_violations;
    }
    c.passed = violations == 0 && control_violations >= 1;
    c.details = Json{{"constructions", count},
                     {"violations", violations},
                     {"worst_log_margin", worst_margin},
                     {"control_misalignment", 1e-3},
                     {"control_violations", control_violations}};
    rep.checks.push_back(c);
  }

  {  // Faa di Bruno
    CheckResult c{"faa-di-bruno", "partition sum equals R(1+R)^{n-1} exactly", true, "", {}};
    Json rows = Json::array();
    for (const Rational& R : {Rational(1), Rational(2), Rational(1, 2), Rational(5)})
      for (int n = 1; n <= 12; ++n) {
        const Rational lhs = faa_di_bruno_partition_sum(n, R), rhs = faa_di_bruno_closed_form(n, R);
        if (lhs != rhs && c.passed) {
          c.passed = false;
          c.witness = "n=" + std::to_string(n) + " R=" + to_string(R);
        }
        if (n == 12) rows.push_back(Json{{"R", to_string(R)}, {"n", n}, {"value", to_string(lhs)}});
      }
    c.details = Json{{"n_max", 12}, {"samples", rows}};
    rep.checks.push_back(c);
  }

  {  // hyperbolicity certificate sanity
    CheckResult c{"mu-hyperbolic", "constant diag blocks pass; an inserted rotation fails at its index; eps=1 passes",
                  true, "", {}};
    const double mu = 20;
    std::vector<Mat2> blocks(12, diagonal(mu, 1 / mu));
    const auto clean = check_mu_hyperbolic(blocks, mu, mu, 0.0);
    blocks[6] = rotation(kPi / 2);
    const auto broken = check_mu_hyperbolic(blocks, mu, mu, 0.1);
    const auto degenerate = check_mu_hyperbolic(blocks, mu, mu, 1.0);
    c.passed = clean.passes && !broken.passes && degenerate.passes && broken.first_forward_failure == std::size_t(6);
    if (!c.passed) c.witness = "12 blocks diag(20, 1/20), rotation at index 6";
    c.details = Json{{"clean_ratio", clean.worst_ratio},
                     {"broken_ratio", broken.worst_ratio},
                     {"broken_index", broken.worst_index},
                     {"first_forward_failure", broken.first_forward_failure ? Json(*broken.first_forward_failure)
                                                                             : Json(nullptr)},
                     {"broken_direction", to_string(broken.direction)}};
    rep.checks.push_back(c);
  }

  {  // log-scaled composition
    CheckResult c{"compose-exact-power", "10^4 copies of diag(2,1/2): logscale = 10^4 log 2 within 1e-6", true, "", {}};
    LogScaledMat2 p;
    const auto d = LogScaledMat2::from(diagonal(2, 0.5));
    for (int i = 0; i < 10000; ++i) p = compose(d, p);
    const double err = std::abs(p.log_norm() - 10000 * kLn2);
    c.passed = err <= 1e-6;
    c.details = Json{{"error", err}};
    if (!c.passed) c.witness = "diag(2,1/2)^10000";
    rep.checks.push_back(c);
  }
  return rep;
}

// ---------------------------------------------------------------------------
// construction-step and le-gap

inline Json to_json(const HyperbolicitySummary& h) {
  return Json{{"samples", h.samples},         {"failures", h.failures},   {"worst_ratio", h.worst_ratio},
              {"worst_x", h.worst_x},         {"direction", h.worst_direction}, {"worst_index", h.worst_index},
              {"log_mu", h.log_mu},           {"vacuous", h.vacuous}};
}

inline Json to_json(const StepVerification& v) {
  Json j;
  j["n"] = v.n;
  j["tilde"] = v.tilde;
  j["accepted"] = v.accepted;
  j["identity_residual"] = v.identity_residual;
  j["identity_tolerance"] = v.identity_tolerance;
  if (!v.tilde) j["ramp_min_ratio"] = v.ramp_min_ratio;
  j["hyperbolicity"] = to_json(v.hyperbolicity);
  j["sup_correction"] = v.sup_correction;
  j["bound_shape"] = v.bound_shape;
  j["fitted_constant"] = v.fitted_constant;
  j["support_exact"] = v.support_exact;
  j["support_samples"] = v.support_samples;
  j["knots"] = v.knots;
  j["refinement_change"] = v.refinement_change;
  j["refinement_converged"] = v.refinement_converged;
  j["ill_defined_frames"] = v.ill_defined_frames;
  j["failures"] = v.failures;
  return j;
}

inline Json to_json(const LambdaSchedule& s) {
  Json j;
  j["class"] = s.cls;
  j["log_lambda"] = s.log_lambda;
  j["N"] = s.first_level;
  j["n_max"] = s.last_level;
  j["log_lambda_n"] = s.log_lambda_n;
  if (!s.log_lambda_tilde_n.empty()) j["log_lambda_tilde_n"] = s.log_lambda_tilde_n;
  j["log_lambda_inf"] = s.log_lambda_inf;
  j["strictly_decreasing"] = s.strictly_decreasing;
  j["all_above_one"] = s.all_above_one;
  j["band_holds"] = s.band_holds;
  j["sums"] = Json::array();
  for (const auto& ss : s.sums)
    j["sums"].push_back(Json{{"name", ss.name}, {"value", ss.value}, {"bound", ss.bound}, {"holds", ss.holds},
                             {"terms", ss.terms}});
  j["threshold"] = Json{{"name", s.threshold.name},
                        {"log_log_required", s.threshold.log_log_required},
                        {"log_log_lambda", s.threshold.log_log_lambda},
                        {"relaxation", s.threshold.relaxation},
                        {"holds_literal", s.threshold.holds_literal},
                        {"holds_relaxed", s.threshold.holds_relaxed}};
  return j;
}

inline Json to_json(const FiniteLEEstimate& e) {
  return Json{{"horizon", e.horizon},         {"grid", e.grid},
              {"value", e.value},             {"std_error", e.std_error},
              {"excluded_fraction", e.excluded_fraction}, {"used_points", e.used_points}};
}

inline Json to_json(const GapExperiment& g) {
  Json j;
  j["n"] = g.n;
  j["horizon"] = g.horizon;
  j["requested_horizon"] = g.requested_horizon;
  j["cap_bound"] = g.cap_bound;
  j["log_lambda"] = g.log_lambda;
  j["exclusion_measure"] = to_double(g.exclusion_measure);
  j["points"] = Json::array();
  for (const auto& p : g.points)
    j["points"].push_back(Json{{"grid", p.grid},
                               {"le_A", to_json(p.le_a)},
                               {"le_Atilde", to_json(p.le_tilde)},
                               {"le_A_unexcluded", to_json(p.le_a_full)},
                               {"gap", p.gap},
                               {"gap_over_log_lambda", p.gap_over_log_lambda},
                               {"exclusion_shift", p.control_gap}});
  return j;
}

inline Json to_json(const CancellationTrace& t) {
  return Json{{"available", t.available},     {"returns", t.returns},       {"start", t.start},
              {"per_step_A", t.per_step_a},   {"per_step_Atilde", t.per_step_tilde},
              {"log_lambda", t.log_lambda},   {"holds", t.holds}};
}

struct ConstructionRun {
  double lambda = 0;
  ConstructionContext context;
  CorrectionLedger ledger;
  std::vector<StepVerification> steps;
  std::vector<StepVerification> tilde_steps;
  bool complete = false;  // every level accepted, tilde included
};

inline ConstructionRun run_construction(const ExperimentConfig& cfg, std::shared_ptr<const ConvergentTable> table,
                                        double lambda) {
  ConstructionRun run;
  run.lambda = lambda;
  run.context = make_context(cfg, std::move(table), lambda);
  run.ledger = CorrectionLedger(run.context.base);
  run.complete = true;
  for (int n = cfg.N; n <= cfg.n_max; ++n) {
    auto built = build_phi_n(run.ledger, n, run.context);
    run.steps.push_back(built.report);
    if (!built.report.accepted) {
      run.complete = false;
      break;
    }
    auto tilde = build_phi_tilde_n(built.ledger, n, run.context);
    run.tilde_steps.push_back(tilde.report);
    run.ledger = tilde.report.accepted ? tilde.ledger : built.ledger;
    if (!tilde.report.accepted) {
      run.complete = false;
      break;
    }
  }
  return run;
}

inline Json ledger_json(const CorrectionLedger& ledger) {
  Json steps = Json::array();
  for (const auto& s : ledger.steps()) {
    Json j;
    j["n"] = s->n;
    j["half_width"] = to_string(s->half_width);
    j["bump_nu"] = s->bump.nu();
    j["knot_x0"] = s->e_spline.x0();
    j["knot_step"] = s->e_spline.step();
    j["e_values"] = s->e_spline.values();
    j["has_tilde"] = s->has_tilde;
    if (s->has_tilde) j["tilde_values"] = s->tilde_spline.values();
    steps.push_back(j);
  }
  return steps;
}

inline SuiteReport construction_step_suite(const ExperimentConfig& cfg) {
  SuiteReport rep;
  rep.suite = "construction-step";
  rep.config_sha256 = config_hash(cfg);
  const auto table = cfg.frequency.table();
  const ConstructionRun run = run_construction(cfg, table, cfg.lambda);

  CheckResult steps{"step-verification",
                    "hyperbolicity with mu = lambda_n, |s_n-u_n-phi_0| <= tol on I_n/10, ramp bound, "
                    "support discipline",
                    run.complete, "", {}};
  steps.details["lambda"] = cfg.lambda;
  steps.details["steps"] = Json::array();
  for (const auto& s : run.steps) {
    steps.details["steps"].push_back(to_json(s));
    if (!s.accepted && steps.witness.empty()) steps.witness = "step " + std::to_string(s.n) + ": " + s.failures.front();
  }
  rep.checks.push_back(steps);

  CheckResult tilde{"tilde-verification", "|s~_n - u~_n| <= tol on I_n/10, hyperbolicity, support of e~_n",
                    run.complete && run.tilde_steps.size() == run.steps.size(), "", {}};
  tilde.details["steps"] = Json::array();
  for (const auto& s : run.tilde_steps) {
    tilde.details["steps"].push_back(to_json(s));
    if (!s.accepted && tilde.witness.empty()) tilde.witness = "step " + std::to_string(s.n) + ": " + s.failures.front();
  }
  rep.checks.push_back(tilde);

  CheckResult sched{"schedule-monotone", "lambda_n strictly decreasing", run.context.schedule.strictly_decreasing, "",
                    to_json(run.context.schedule)};
  if (!sched.passed) sched.witness = "schedule not decreasing";
  rep.checks.push_back(sched);

  CheckResult excl{"exceptional-set", "B_n intervals disjoint, measure <= 2 q_{n+1}^{-1/2}", true, "", {}};
  excl.details = Json::array();
  for (int n = cfg.N; n <= cfg.n_max; ++n) {
    const auto bn = exceptional_set(*table, n);
    const double bound = 2 / std::sqrt(big_to_double(table->q(n + 1)));
    bool disjoint = true;
    for (std::size_t i = 1; i < bn.intervals.size(); ++i)
      disjoint = disjoint && bn.intervals[i - 1].hi() < bn.intervals[i].lo;
    const bool ok = disjoint && to_double(bn.measure) <= bound;
    excl.details.push_back(Json{{"n", n},
                                {"balls", big_json(bn.ball_count)},
                                {"intervals", bn.intervals.size()},
                                {"measure", to_double(bn.measure)},
                                {"bound", bound},
                                {"disjoint", disjoint}});
    if (!ok) {
      excl.passed = false;
      if (excl.witness.empty()) excl.witness = "n=" + std::to_string(n);
    }
  }
  rep.checks.push_back(excl);

  if (run.complete) {
    const auto trace = cancellation_trace(run.ledger, cfg.n_max, run.context);
    CheckResult ct{"cancellation-trace",
                   "A~_n per-step log-norm <= log(lambda)/2 and A_n >= (1-eps') log(lambda) along consecutive returns",
                   trace.available && trace.holds, "", to_json(trace)};
    if (!ct.passed) ct.witness = trace.available ? "start " + trace.start : "frequency has no spike at n_max";
    rep.checks.push_back(ct);
  }
  return rep;
}

struct GapRun {
  double lambda = 0;
  bool construction_complete = false;
  GapExperiment experiment;
};

inline std::vector<GapRun> run_gap_sweep(const ExperimentConfig& cfg) {
  const auto table = cfg.frequency.table();
  std::vector<GapRun> out;
  for (double factor : cfg.lambda_factors) {
    GapRun g;
    g.lambda = cfg.lambda * factor;
    const auto run = run_construction(cfg, table, g.lambda);
    g.construction_complete = run.complete;
    if (run.complete)
      g.experiment = le_gap_experiment(run.ledger, cfg.n_max, run.context, cfg.grid, cfg.horizon, cfg.horizon_cap);
    out.push_back(std::move(g));
  }
  return out;
}

constexpr double kGapStabilityFraction = 0.02;  // spread of gap across grids, in units of log(lambda)

inline SuiteReport le_gap_suite(const ExperimentConfig& cfg) {
  SuiteReport rep;
  rep.suite = "le-gap";
  rep.config_sha256 = config_hash(cfg);
  const auto table = cfg.frequency.table();
  const auto sweep = run_gap_sweep(cfg);
  const std::int64_t qn2 = to_int64(table->q(cfg.n_max + 2));

  CheckResult gap{"gap-margin", "L(A~_n) <= L(A_n off B_n) - gap_fraction log(lambda) on every grid", true, "", {}};
  CheckResult stable{"gap-stability", "gap spread across grids <= 0.02 log(lambda)", true, "", {}};
  CheckResult horizon{"horizon", "horizon >= q_{n+2} and not cap-bound", true, "", {}};
  CheckResult control{"control", "A~ replaced by A gives zero gap", true, "", {}};
  gap.details["gap_fraction"] = cfg.gap_fraction;
  gap.details["runs"] = Json::array();
  for (const auto& g : sweep) {
    Json rj{{"lambda", g.lambda}, {"construction_complete", g.construction_complete}};
    if (!g.construction_complete) {
      gap.passed = stable.passed = horizon.passed = false;
      if (gap.witness.empty()) gap.witness = "construction rejected at lambda=" + format_double(g.lambda);
      gap.details["runs"].push_back(rj);
      continue;
    }
    const auto& e = g.experiment;
    rj["experiment"] = to_json(e);
    gap.details["runs"].push_back(rj);
    double lo = INFINITY, hi = -INFINITY;
    for (const auto& p : e.points) {
      lo = std::min(lo, p.gap);
      hi = std::max(hi, p.gap);
      if (!(p.gap >= cfg.gap_fraction * e.log_lambda)) {
        gap.passed = false;
        if (gap.witness.empty())
          gap.witness = "lambda=" + format_double(g.lambda) + " grid=" + std::to_string(p.grid) +
                        " gap/log(lambda)=" + format_double(p.gap_over_log_lambda);
      }
    }
    if (!(hi - lo <= kGapStabilityFraction * e.log_lambda)) {
      stable.passed = false;
      if (stable.witness.empty()) stable.witness = "lambda=" + format_double(g.lambda);
    }
    stable.details[format_double(g.lambda)] = Json{{"min_gap", lo}, {"max_gap", hi}};
    if (e.horizon < qn2 || e.cap_bound) {
      horizon.passed = false;
      if (horizon.witness.empty()) horizon.witness = "horizon " + std::to_string(e.horizon);
    }
    horizon.details[format_double(g.lambda)] =
        Json{{"horizon", e.horizon}, {"q_n_plus_2", qn2}, {"cap_bound", e.cap_bound}};
  }
  // control: identical cocycles give an identical estimate, so the gap is zero
  {
    const auto run = run_construction(cfg, table, cfg.lambda);
    if (run.complete) {
      const auto spec = ledger_cocycle(run.context, run.ledger, false);
      const auto a = finite_le(spec, qn2, cfg.grid.front(), cfg.worker_count());
      const auto b = finite_le(spec, qn2, cfg.grid.front(), cfg.worker_count());
      control.passed = a.value == b.value;
      control.details = Json{{"gap", a.value - b.value}, {"grid", cfg.grid.front()}, {"std_error", a.std_error}};
    } else {
      control.passed = false;
      control.witness = "construction rejected";
    }
  }
  rep.checks = {gap, stable, horizon, control};
  return rep;
}

inline const std::vector<std::string>& suite_names() {
  static const std::vector<std::string> names{"orbit-oracle", "sl2-lemmas", "construction-step", "le-gap", "all"};
  return names;
}

// Runs the named suite; "all" concatenates the four suites' checks.
inline SuiteReport run_suite(const std::string& name, const ExperimentConfig& cfg) {
  auto guarded = [&](const std::string& suite, auto&& fn) {
    try {
      return fn(cfg);
    } catch (const CapError& e) {
      SuiteReport r;
      r.suite = suite;
      r.config_sha256 = config_hash(cfg);
      r.checks.push_back({"budget", "resource budget", false, e.what(), {}});
      return r;
    }
  };
  if (name == "orbit-oracle") return guarded(name, orbit_oracle_suite);
  if (name == "sl2-lemmas") return guarded(name, sl2_lemmas_suite);
  if (name == "construction-step") return guarded(name, construction_step_suite);
  if (name == "le-gap") return guarded(name, le_gap_suite);
  if (name == "all") {
    SuiteReport all;
    all.suite = "all";
    all.config_sha256 = config_hash(cfg);
    for (const auto& sub : {"orbit-oracle", "sl2-lemmas", "construction-step", "le-gap"}) {
      auto r = run_suite(sub, cfg);
      for (auto& c : r.checks) {
        c.name = std::string(sub) + "/" + c.name;
        all.checks.push_back(std::move(c));
      }
    }
    return all;
  }
  throw ConfigError("unknown suite '" + name + "'");
}

}  // namespace qpc
