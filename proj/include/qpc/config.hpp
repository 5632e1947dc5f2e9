#pragma once

#include "qpc/construction.hpp"
#include "qpc/json_io.hpp"

#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace qpc {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

constexpr int kSchemaVersion = 1;
constexpr const char* kArtifactVersion = "0.1.0";

// ---------------------------------------------------------------------------
// Frequency sources.

namespace freq_rules {
struct Explicit {
  BigInt a0 = 0;
  std::vector<BigInt> quotients;
};
struct FromRational {
  Rational value;
};
}  // namespace freq_rules

struct FrequencySpec {
  std::variant<GrowthRule, freq_rules::Explicit, freq_rules::FromRational> source;
  std::size_t depth = 16;

  PartialQuotients quotients() const {
    if (const auto* g = std::get_if<GrowthRule>(&source)) return synthesize(*g, depth);
    if (const auto* e = std::get_if<freq_rules::Explicit>(&source)) {
      PartialQuotients pq;
      pq.a0 = e->a0;
      pq.quotients = e->quotients;
      return pq;
    }
    return expand_real(std::get<freq_rules::FromRational>(source).value, depth);
  }
  std::shared_ptr<const ConvergentTable> table() const { return std::make_shared<const ConvergentTable>(quotients()); }
};

namespace detail {

inline void reject_unknown(const Json& j, const std::set<std::string>& allowed, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + ": expected an object");
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!allowed.count(it.key())) throw ConfigError(where + ": unknown field '" + it.key() + "'");
}

template <class T>
T get_required(const Json& j, const std::string& key, const std::string& where) {
  if (!j.contains(key)) throw ConfigError(where + ": missing field '" + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(where + "." + key + ": " + e.what());
  }
}

template <class T>
T get_or(const Json& j, const std::string& key, T fallback, const std::string& where) {
  if (!j.contains(key)) return fallback;
  return get_required<T>(j, key, where);
}

inline double get_number(const Json& j, const std::string& key, double fallback, const std::string& where) {
  if (!j.contains(key)) return fallback;
  if (!j.at(key).is_number()) throw ConfigError(where + "." + key + ": expected a number");
  return j.at(key).get<double>();
}

inline BigInt big_from_json(const Json& v, const std::string& where) {
  if (v.is_number_unsigned()) return BigInt(v.get<std::uint64_t>());
  if (v.is_number_integer()) return BigInt(v.get<std::int64_t>());
  if (v.is_string()) {
    try {
      return BigInt(v.get<std::string>());
    } catch (const std::runtime_error&) {
    }
  }
  throw ConfigError(where + ": expected an integer");
}

inline Json big_to_json(const BigInt& v) {
  if (fits_int64(v)) return Json(to_int64(v));
  return Json(v.str());
}

}  // namespace detail

inline Json to_json(const FrequencySpec& f) {
  Json j;
  if (const auto* g = std::get_if<GrowthRule>(&f.source)) {
    if (const auto* c = std::get_if<rules::Constant>(g)) {
      j["rule"] = "constant";
      j["a"] = detail::big_to_json(c->a);
    } else if (const auto* p = std::get_if<rules::Pattern>(g)) {
      j["rule"] = "pattern";
      j["values"] = Json::array();
      for (const auto& v : p->values) j["values"].push_back(detail::big_to_json(v));
    } else if (const auto* s = std::get_if<rules::Spike>(g)) {
      j["rule"] = "spike";
      j["base"] = detail::big_to_json(s->base);
      j["positions"] = s->positions;
      j["factor"] = detail::big_to_json(s->factor);
    } else if (const auto* r = std::get_if<rules::Random>(g)) {
      j["rule"] = "random";
      j["seed"] = r->seed;
      j["lo"] = r->lo;
      j["hi"] = r->hi;
    } else {
      j["rule"] = "linear";
    }
  } else if (const auto* e = std::get_if<freq_rules::Explicit>(&f.source)) {
    j["rule"] = "explicit";
    j["a0"] = detail::big_to_json(e->a0);
    j["quotients"] = Json::array();
    for (const auto& v : e->quotients) j["quotients"].push_back(detail::big_to_json(v));
  } else {
    j["rule"] = "rational";
    j["value"] = to_string(std::get<freq_rules::FromRational>(f.source).value);
  }
  j["depth"] = f.depth;
  return j;
}

inline FrequencySpec frequency_from_json(const Json& j, const std::string& where = "freq_rule") {
  if (!j.is_object()) throw ConfigError(where + ": expected an object");
  const auto rule = detail::get_required<std::string>(j, "rule", where);
  FrequencySpec f;
  f.depth = detail::get_required<std::size_t>(j, "depth", where);
  if (f.depth < 3 || f.depth > 200) throw ConfigError(where + ".depth: must lie in [3, 200]");
  auto big_list = [&](const std::string& key) {
    std::vector<BigInt> out;
    const Json& arr = j.at(key);
    if (!arr.is_array() || arr.empty()) throw ConfigError(where + "." + key + ": expected a nonempty array");
    for (const auto& v : arr) out.push_back(detail::big_from_json(v, where + "." + key));
    return out;
  };
  if (rule == "constant") {
    detail::reject_unknown(j, {"rule", "a", "depth"}, where);
    f.source = GrowthRule(rules::Constant{detail::big_from_json(j.value("a", Json(1)), where + ".a")});
  } else if (rule == "pattern") {
    detail::reject_unknown(j, {"rule", "values", "depth"}, where);
    if (!j.contains("values")) throw ConfigError(where + ": missing field 'values'");
    f.source = GrowthRule(rules::Pattern{big_list("values")});
  } else if (rule == "spike") {
    detail::reject_unknown(j, {"rule", "base", "positions", "factor", "depth"}, where);
    rules::Spike s;
    s.base = detail::big_from_json(j.value("base", Json(1)), where + ".base");
    s.positions = detail::get_required<std::vector<int>>(j, "positions", where);
    s.factor = detail::big_from_json(j.value("factor", Json(200)), where + ".factor");
    f.source = GrowthRule(s);
  } else if (rule == "random") {
    detail::reject_unknown(j, {"rule", "seed", "lo", "hi", "depth"}, where);
    rules::Random r;
    r.seed = detail::get_or<std::uint64_t>(j, "seed", 7, where);
    r.lo = detail::get_or<std::int64_t>(j, "lo", 1, where);
    r.hi = detail::get_or<std::int64_t>(j, "hi", 9, where);
    f.source = GrowthRule(r);
  } else if (rule == "linear") {
    detail::reject_unknown(j, {"rule", "depth"}, where);
    f.source = GrowthRule(rules::Linear{});
  } else if (rule == "explicit") {
    detail::reject_unknown(j, {"rule", "a0", "quotients", "depth"}, where);
    if (!j.contains("quotients")) throw ConfigError(where + ": missing field 'quotients'");
    freq_rules::Explicit e{detail::big_from_json(j.value("a0", Json(0)), where + ".a0"), big_list("quotients")};
    if (e.quotients.size() != f.depth) throw ConfigError(where + ": depth must equal the number of quotients");
    f.source = e;
  } else if (rule == "rational") {
    detail::reject_unknown(j, {"rule", "value", "depth"}, where);
    try {
      f.source = freq_rules::FromRational{parse_rational(detail::get_required<std::string>(j, "value", where))};
    } catch (const DomainError& e) {
      throw ConfigError(where + ".value: " + e.what());
    }
  } else {
    throw ConfigError(where + ".rule: unknown rule '" + rule + "'");
  }
  return f;
}

inline std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == sep) {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

// golden:D, silver:D, constant:A:D, cf:A0;A1,A2,..., spike:BASE:P1,P2:FACTOR:D,
// random:SEED:LO:HI:D, linear:D, rational:P/Q:D
inline FrequencySpec parse_frequency(const std::string& text) {
  const auto parts = split(text, ':');
  auto num = [&](std::size_t i) -> std::string {
    if (i >= parts.size()) throw ConfigError("frequency '" + text + "': missing field");
    return parts[i];
  };
  auto to_size = [&](const std::string& s) {
    try {
      return static_cast<std::size_t>(std::stoull(s));
    } catch (const std::exception&) {
      throw ConfigError("frequency '" + text + "': bad integer '" + s + "'");
    }
  };
  Json j;
  const std::string& kind = parts[0];
  try {
    if (kind == "golden" || kind == "silver") {
      j = {{"rule", "constant"}, {"a", kind == "golden" ? 1 : 2}, {"depth", to_size(num(1))}};
    } else if (kind == "constant") {
      j = {{"rule", "constant"}, {"a", num(1)}, {"depth", to_size(num(2))}};
    } else if (kind == "cf") {
      const auto halves = split(num(1), ';');
      if (halves.size() != 2) throw ConfigError("frequency '" + text + "': expected cf:A0;A1,A2,...");
      Json qs = Json::array();
      for (const auto& a : split(halves[1], ',')) qs.push_back(a);
      j = {{"rule", "explicit"}, {"a0", halves[0]}, {"quotients", qs}, {"depth", qs.size()}};
    } else if (kind == "spike") {
      Json pos = Json::array();
      for (const auto& p : split(num(2), ',')) pos.push_back(static_cast<int>(to_size(p)));
      j = {{"rule", "spike"}, {"base", num(1)}, {"positions", pos}, {"factor", num(3)}, {"depth", to_size(num(4))}};
    } else if (kind == "random") {
      j = {{"rule", "random"},
           {"seed", to_size(num(1))},
           {"lo", to_size(num(2))},
           {"hi", to_size(num(3))},
           {"depth", to_size(num(4))}};
    } else if (kind == "linear") {
      j = {{"rule", "linear"}, {"depth", to_size(num(1))}};
    } else if (kind == "rational") {
      j = {{"rule", "rational"}, {"value", num(1)}, {"depth", to_size(num(2))}};
    } else {
      throw ConfigError("unknown frequency kind '" + kind + "'");
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("frequency '" + text + "': " + e.what());
  }
  return frequency_from_json(j, "frequency");
}

// ---------------------------------------------------------------------------
// Experiment configuration.

struct ExperimentConfig {
  int schema_version = kSchemaVersion;
  SmoothnessClass smoothness = classes::Cl{};
  double bump_nu = 2.0;
  FrequencySpec frequency;
  int N = 5;
  int n_max = 5;
  double lambda = 30.0;
  std::vector<double> lambda_factors{1.0, 2.0};
  std::vector<std::int64_t> grid{256, 512, 1024};
  std::int64_t horizon = 0;  // 0 selects 2 q_{n_max+2}
  std::int64_t horizon_cap = 1'000'000;
  Tolerances tolerances;
  double gap_fraction = 0.1;
  std::uint64_t seed = 1;
  std::int64_t trials = 10000;
  std::int64_t samples = 200;
  std::int64_t oracle_budget = 300'000'000;  // brute-force steps per family and level
  std::optional<unsigned> workers;
  std::optional<std::string> output_dir;

  unsigned worker_count() const { return workers ? *workers : default_workers(); }
};

inline Json class_params_to_json(const SmoothnessClass& c, double nu) {
  Json j;
  if (const auto* p = std::get_if<classes::Cl>(&c)) {
    j["l"] = p->l;
    j["delta0"] = p->delta0;
    j["delta1"] = p->delta1;
    j["plateau"] = p->plateau;
  } else if (const auto* p = std::get_if<classes::Cinf>(&c)) {
    j["sigma"] = p->sigma;
    j["delta"] = p->brjuno_delta;
  } else {
    const auto& g = std::get<classes::Gevrey>(c);
    j["s"] = g.s;
    j["strong"] = g.strong;
    j["tau"] = g.tau;
    j["gamma"] = g.gamma;
  }
  j["nu"] = nu;
  return j;
}

inline Json tolerances_to_json(const Tolerances& t) {
  return Json{{"angle", t.angle},
              {"resonance", t.resonance},
              {"epsilon", t.epsilon},
              {"frame_floor", t.frame_floor},
              {"eta", t.eta},
              {"schedule_epsilon", t.schedule_epsilon},
              {"lambda_relaxation", t.lambda_relaxation},
              {"cancellation_epsilon", t.cancellation_epsilon},
              {"knots_initial", t.knots_initial},
              {"knots_max", t.knots_max},
              {"check_points", t.check_points},
              {"ramp_points", t.ramp_points},
              {"hyperbolicity_samples", t.hyperbolicity_samples},
              {"support_samples", t.support_samples}};
}

inline Json to_json(const ExperimentConfig& c) {
  Json j;
  j["schema_version"] = c.schema_version;
  j["class"] = class_name(c.smoothness);
  j["class_params"] = class_params_to_json(c.smoothness, c.bump_nu);
  j["freq_rule"] = to_json(c.frequency);
  j["N"] = c.N;
  j["n_max"] = c.n_max;
  j["lambda"] = c.lambda;
  j["lambda_factors"] = c.lambda_factors;
  j["grid"] = c.grid;
  j["horizon"] = c.horizon;
  j["horizon_cap"] = c.horizon_cap;
  j["tolerances"] = tolerances_to_json(c.tolerances);
  j["gap_fraction"] = c.gap_fraction;
  j["seed"] = c.seed;
  j["trials"] = c.trials;
  j["samples"] = c.samples;
  j["oracle_budget"] = c.oracle_budget;
  if (c.workers) j["workers"] = *c.workers;
  if (c.output_dir) j["output_dir"] = *c.output_dir;
  return j;
}

inline ExperimentConfig config_from_json(const Json& j) {
  using detail::get_number;
  using detail::get_or;
  detail::reject_unknown(j,
                         {"schema_version", "class", "class_params", "freq_rule", "N", "n_max", "lambda",
                          "lambda_factors", "grid", "horizon", "horizon_cap", "tolerances", "gap_fraction", "seed",
                          "trials", "samples", "oracle_budget", "workers", "output_dir"},
                         "config");
  ExperimentConfig c;
  c.schema_version = detail::get_required<int>(j, "schema_version", "config");
  if (c.schema_version != kSchemaVersion)
    throw ConfigError("config.schema_version: expected " + std::to_string(kSchemaVersion));
  const auto cls = detail::get_required<std::string>(j, "class", "config");
  const Json params = j.value("class_params", Json::object());
  const std::string pw = "config.class_params";
  if (cls == "Cl") {
    detail::reject_unknown(params, {"l", "delta0", "delta1", "plateau", "nu"}, pw);
    classes::Cl p;
    p.l = get_or<int>(params, "l", p.l, pw);
    p.delta0 = get_number(params, "delta0", p.delta0, pw);
    p.delta1 = get_number(params, "delta1", p.delta1, pw);
    p.plateau = get_number(params, "plateau", p.plateau, pw);
    c.smoothness = p;
  } else if (cls == "Cinf") {
    detail::reject_unknown(params, {"sigma", "delta", "nu"}, pw);
    classes::Cinf p;
    p.sigma = get_number(params, "sigma", p.sigma, pw);
    p.brjuno_delta = get_number(params, "delta", p.brjuno_delta, pw);
    c.smoothness = p;
  } else if (cls == "Gevrey") {
    detail::reject_unknown(params, {"s", "strong", "tau", "gamma", "nu"}, pw);
    classes::Gevrey p;
    p.s = get_number(params, "s", p.s, pw);
    p.strong = get_or<bool>(params, "strong", p.strong, pw);
    p.tau = get_number(params, "tau", p.tau, pw);
    p.gamma = get_number(params, "gamma", p.gamma, pw);
    c.smoothness = p;
  } else {
    throw ConfigError("config.class: expected Cl, Cinf or Gevrey");
  }
  c.bump_nu = get_number(params, "nu", c.bump_nu, pw);
  try {
    validate_class(c.smoothness);
  } catch (const DomainError& e) {
    throw ConfigError(pw + ": " + e.what());
  }
  if (!(c.bump_nu > 1)) throw ConfigError(pw + ".nu: must exceed 1");
  if (const auto* g = std::get_if<classes::Gevrey>(&c.smoothness); g && !(c.bump_nu < g->s))
    throw ConfigError(pw + ".nu: must lie below s");
  if (!j.contains("freq_rule")) throw ConfigError("config: missing field 'freq_rule'");
  c.frequency = frequency_from_json(j.at("freq_rule"), "config.freq_rule");
  c.N = detail::get_required<int>(j, "N", "config");
  c.n_max = detail::get_required<int>(j, "n_max", "config");
  if (c.N < 1 || c.n_max < c.N) throw ConfigError("config: need 1 <= N <= n_max");
  if (static_cast<std::size_t>(c.n_max + 3) > c.frequency.depth)
    throw ConfigError("config: freq_rule.depth must be at least n_max + 3");
  c.lambda = get_number(j, "lambda", NAN, "config");
  if (!(c.lambda > 1)) throw ConfigError("config.lambda: must exceed 1");
  c.lambda_factors = get_or<std::vector<double>>(j, "lambda_factors", c.lambda_factors, "config");
  if (c.lambda_factors.empty()) throw ConfigError("config.lambda_factors: must be nonempty");
  for (double f : c.lambda_factors)
    if (!(f > 0) || !(c.lambda * f > 1)) throw ConfigError("config.lambda_factors: lambda * factor must exceed 1");
  c.grid = get_or<std::vector<std::int64_t>>(j, "grid", c.grid, "config");
  if (c.grid.empty()) throw ConfigError("config.grid: must be nonempty");
  for (auto g : c.grid)
    if (g < 1 || g > 1'000'000) throw ConfigError("config.grid: sizes must lie in [1, 1e6]");
  c.horizon = get_or<std::int64_t>(j, "horizon", c.horizon, "config");
  c.horizon_cap = detail::get_required<std::int64_t>(j, "horizon_cap", "config");
  if (c.horizon < 0 || c.horizon_cap < 1 || c.horizon_cap > kIterateBudget)
    throw ConfigError("config: horizon >= 0 and 1 <= horizon_cap <= 1e7 required");
  const Json tol = j.value("tolerances", Json::object());
  const std::string tw = "config.tolerances";
  detail::reject_unknown(tol,
                         {"angle", "resonance", "epsilon", "frame_floor", "eta", "schedule_epsilon",
                          "lambda_relaxation", "cancellation_epsilon", "knots_initial", "knots_max", "check_points",
                          "ramp_points", "hyperbolicity_samples", "support_samples"},
                         tw);
  Tolerances& t = c.tolerances;
  t.angle = get_number(tol, "angle", t.angle, tw);
  t.resonance = get_number(tol, "resonance", t.resonance, tw);
  t.epsilon = get_number(tol, "epsilon", t.epsilon, tw);
  t.frame_floor = get_number(tol, "frame_floor", t.frame_floor, tw);
  t.eta = get_number(tol, "eta", t.eta, tw);
  t.schedule_epsilon = get_number(tol, "schedule_epsilon", t.schedule_epsilon, tw);
  t.lambda_relaxation = get_number(tol, "lambda_relaxation", t.lambda_relaxation, tw);
  t.cancellation_epsilon = get_number(tol, "cancellation_epsilon", t.cancellation_epsilon, tw);
  t.knots_initial = get_or<int>(tol, "knots_initial", t.knots_initial, tw);
  t.knots_max = get_or<int>(tol, "knots_max", t.knots_max, tw);
  t.check_points = get_or<int>(tol, "check_points", t.check_points, tw);
  t.ramp_points = get_or<int>(tol, "ramp_points", t.ramp_points, tw);
  t.hyperbolicity_samples = get_or<int>(tol, "hyperbolicity_samples", t.hyperbolicity_samples, tw);
  t.support_samples = get_or<int>(tol, "support_samples", t.support_samples, tw);
  if (!(t.angle > 0 && t.resonance > 0 && t.epsilon >= 0 && t.epsilon < 1 && t.eta >= 0 && t.frame_floor >= 1))
    throw ConfigError(tw + ": out of range");
  if (!(t.schedule_epsilon > 0 && t.schedule_epsilon < 1 && t.lambda_relaxation >= 1))
    throw ConfigError(tw + ": schedule settings out of range");
  if (t.knots_initial < 4 || t.knots_max < 2 * t.knots_initial || t.check_points < 1 || t.ramp_points < 10 ||
      t.hyperbolicity_samples < 1 || t.support_samples < 2)
    throw ConfigError(tw + ": sample counts out of range");
  c.gap_fraction = get_number(j, "gap_fraction", c.gap_fraction, "config");
  c.seed = detail::get_required<std::uint64_t>(j, "seed", "config");
  c.trials = get_or<std::int64_t>(j, "trials", c.trials, "config");
  c.samples = get_or<std::int64_t>(j, "samples", c.samples, "config");
  c.oracle_budget = get_or<std::int64_t>(j, "oracle_budget", c.oracle_budget, "config");
  if (c.trials < 1 || c.samples < 1 || c.oracle_budget < 1) throw ConfigError("config: counts must be positive");
  if (j.contains("workers")) {
    const auto w = detail::get_required<std::int64_t>(j, "workers", "config");
    if (w < 1 || w > 256) throw ConfigError("config.workers: must lie in [1, 256]");
    c.workers = static_cast<unsigned>(w);
  }
  if (j.contains("output_dir")) c.output_dir = detail::get_required<std::string>(j, "output_dir", "config");
  return c;
}

inline ExperimentConfig load_config(const std::string& path) {
  Json j;
  try {
    j = Json::parse(read_file(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(path + ": " + e.what());
  }
  return config_from_json(j);
}

// Hash of the canonical serialization; workers and output_dir do not affect results.
inline std::string config_hash(const ExperimentConfig& c) {
  Json j = to_json(c);
  j.erase("workers");
  j.erase("output_dir");
  return sha256_hex(dump_json(j));
}

inline ConstructionContext make_context(const ExperimentConfig& c, std::shared_ptr<const ConvergentTable> table,
                                        double lambda) {
  ConstructionContext ctx;
  ctx.table = std::move(table);
  ctx.base = SampleFunction(c.smoothness);
  ctx.log_lambda = std::log(lambda);
  ctx.tol = c.tolerances;
  ctx.bump_nu = c.bump_nu;
  ctx.workers = c.worker_count();
  ctx.schedule = lambda_schedule(c.smoothness, ctx.log_lambda, c.N, c.n_max, *ctx.table, c.tolerances.schedule_epsilon,
                                 c.tolerances.lambda_relaxation);
  return ctx;
}

}  // namespace qpc
