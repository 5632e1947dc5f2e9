#pragma once

#include "qpc/suites.hpp"

#include <chrono>
#include <ctime>
#include <filesystem>

namespace qpc {

struct RunError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Files written by run_construct, in manifest order.  manifest.json itself is
// excluded from the digests since it carries the timestamp.
inline const std::vector<std::string>& run_outputs() {
  static const std::vector<std::string> names{"config.json", "ledger.json", "verification.json", "le_gap.json"};
  return names;
}

inline std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

struct RunManifest {
  std::string config_sha256;
  std::string timestamp;
  std::string artifact_version = kArtifactVersion;
  Json step_outcomes = Json::array();
  std::vector<std::pair<std::string, std::string>> digests;  // file, sha256
  bool passed = false;
};

inline Json to_json(const RunManifest& m) {
  Json j;
  j["config_sha256"] = m.config_sha256;
  j["timestamp"] = m.timestamp;
  j["artifact_version"] = m.artifact_version;
  j["schema_version"] = kSchemaVersion;
  j["passed"] = m.passed;
  j["steps"] = m.step_outcomes;
  j["outputs"] = Json::object();
  for (const auto& [file, digest] : m.digests) j["outputs"][file] = digest;
  return j;
}

// Construct at every lambda in the sweep, run the gap experiment on each
// completed ledger and persist the lot under `dir`.
inline RunManifest run_construct(const ExperimentConfig& cfg, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  const auto table = cfg.frequency.table();
  Json ledgers = Json::array(), verification = Json::array(), gaps = Json::array();
  RunManifest m;
  m.config_sha256 = config_hash(cfg);
  m.passed = true;
  for (double factor : cfg.lambda_factors) {
    const double lambda = cfg.lambda * factor;
    const auto run = run_construction(cfg, table, lambda);
    ledgers.push_back(Json{{"lambda", lambda}, {"steps", ledger_json(run.ledger)}});
    Json steps = Json::array();
    auto record = [&](const StepVerification& s) {
      steps.push_back(to_json(s));
      m.step_outcomes.push_back(Json{{"lambda", lambda}, {"n", s.n}, {"tilde", s.tilde}, {"accepted", s.accepted}});
    };
    for (std::size_t i = 0; i < run.steps.size(); ++i) {
      record(run.steps[i]);
      if (i < run.tilde_steps.size()) record(run.tilde_steps[i]);
    }
    verification.push_back(Json{{"lambda", lambda},
                                {"complete", run.complete},
                                {"schedule", to_json(run.context.schedule)},
                                {"steps", steps}});
    m.passed = m.passed && run.complete;
    if (run.complete) {
      const auto gap = le_gap_experiment(run.ledger, cfg.n_max, run.context, cfg.grid, cfg.horizon, cfg.horizon_cap);
      gaps.push_back(Json{{"lambda", lambda}, {"experiment", to_json(gap)}});
    }
  }
  Json cfg_json = to_json(cfg);
  cfg_json.erase("workers");
  cfg_json.erase("output_dir");
  const std::vector<std::pair<std::string, Json>> files{
      {"config.json", cfg_json}, {"ledger.json", ledgers}, {"verification.json", verification}, {"le_gap.json", gaps}};
  for (const auto& [name, body] : files) {
    const std::string text = dump_json(body);
    write_file((dir / name).string(), text);
    m.digests.emplace_back(name, sha256_hex(text));
  }
  m.timestamp = utc_timestamp();
  write_file((dir / "manifest.json").string(), dump_json(to_json(m)));
  return m;
}

// ---------------------------------------------------------------------------
// Cocycle spec files for the `cocycle` verb:
//   {"freq_rule": {...}, "generator": {"type": "rothyp", "lambda": 30, "phi": PHI}}
//   {"freq_rule": {...}, "generator": {"type": "schrodinger", "E": 3, "v": PHI}}
// PHI is {"constant": c} or {"sample": "Cl"|"Cinf"|"Gevrey", "class_params": {...}}.

inline PhiField phi_from_json(const Json& j, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + ": expected an object");
  if (j.contains("constant")) {
    detail::reject_unknown(j, {"constant"}, where);
    return constant_phi(detail::get_required<double>(j, "constant", where));
  }
  detail::reject_unknown(j, {"sample", "class_params"}, where);
  Json cfg = {{"schema_version", kSchemaVersion},
              {"class", detail::get_required<std::string>(j, "sample", where)},
              {"class_params", j.value("class_params", Json::object())},
              {"freq_rule", {{"rule", "constant"}, {"depth", 8}}},
              {"N", 1},
              {"n_max", 1},
              {"lambda", 2.0},
              {"horizon_cap", 1},
              {"seed", 0}};
  auto fn = std::make_shared<SampleFunction>(config_from_json(cfg).smoothness);
  return function_phi([fn](double x) { return (*fn)(x); });
}

inline CocycleSpec cocycle_from_json(const Json& j) {
  detail::reject_unknown(j, {"freq_rule", "generator"}, "cocycle");
  if (!j.contains("freq_rule") || !j.contains("generator")) throw ConfigError("cocycle: needs freq_rule and generator");
  const auto table = frequency_from_json(j.at("freq_rule"), "cocycle.freq_rule").table();
  const Json& g = j.at("generator");
  const std::string where = "cocycle.generator";
  const auto type = detail::get_required<std::string>(g, "type", where);
  CocycleSpec spec{table, {}};
  if (type == "rothyp") {
    detail::reject_unknown(g, {"type", "lambda", "phi"}, where);
    const double lambda = detail::get_required<double>(g, "lambda", where);
    if (!(lambda >= 1)) throw ConfigError(where + ".lambda: must be >= 1");
    if (!g.contains("phi")) throw ConfigError(where + ": missing field 'phi'");
    spec.generator = generators::RotHyp{std::log(lambda), phi_from_json(g.at("phi"), where + ".phi")};
  } else if (type == "schrodinger") {
    detail::reject_unknown(g, {"type", "E", "v"}, where);
    if (!g.contains("v")) throw ConfigError(where + ": missing field 'v'");
    spec.generator =
        generators::Schrodinger{detail::get_required<double>(g, "E", where), phi_from_json(g.at("v"), where + ".v")};
  } else {
    throw ConfigError(where + ".type: expected rothyp or schrodinger");
  }
  spec.validate();
  return spec;
}

// ---------------------------------------------------------------------------
// export

enum class ExportFormat { csv, json };

inline ExportFormat parse_export_format(const std::string& s) {
  if (s == "csv") return ExportFormat::csv;
  if (s == "json") return ExportFormat::json;
  throw ConfigError("export format must be csv or json, got '" + s + "'");
}

constexpr int kExportVersion = 1;

// Stable column order.  Bump kExportVersion when these change.
inline const std::vector<std::string>& step_columns() {
  static const std::vector<std::string> c{"lambda",    "n",         "tilde",          "accepted",
                                          "identity_residual", "sup_correction", "knots",
                                          "hyperbolicity_failures", "hyperbolicity_worst_ratio"};
  return c;
}

inline const std::vector<std::string>& gap_columns() {
  static const std::vector<std::string> c{"lambda",   "n",          "grid",         "horizon",       "cap_bound",
                                          "le_A",     "le_A_stderr", "le_Atilde",   "le_Atilde_stderr", "gap",
                                          "gap_over_log_lambda", "excluded_fraction"};
  return c;
}

inline Json load_run_file(const std::filesystem::path& dir, const std::string& name) {
  const auto path = dir / name;
  if (!std::filesystem::exists(path)) throw RunError("missing run artifact " + path.string());
  return Json::parse(read_file(path.string()));
}

struct ExportRows {
  std::string config_sha256;
  std::vector<Json> steps;
  std::vector<Json> gaps;
};

inline ExportRows collect_rows(const std::filesystem::path& dir) {
  const Json manifest = load_run_file(dir, "manifest.json");
  for (const auto& name : run_outputs()) {
    if (!std::filesystem::exists(dir / name)) throw RunError("missing run artifact " + (dir / name).string());
    const std::string text = read_file((dir / name).string());
    if (manifest.at("outputs").value(name, std::string()) != sha256_hex(text))
      throw RunError("digest mismatch for " + name);
  }
  ExportRows rows;
  rows.config_sha256 = manifest.at("config_sha256").get<std::string>();
  for (const auto& lam : load_run_file(dir, "verification.json")) {
    for (const auto& s : lam.at("steps")) {
      Json r = Json::object();
      r["lambda"] = lam.at("lambda");
      r["n"] = s.at("n");
      r["tilde"] = s.at("tilde");
      r["accepted"] = s.at("accepted");
      r["identity_residual"] = s.at("identity_residual");
      r["sup_correction"] = s.at("sup_correction");
      r["knots"] = s.at("knots");
      r["hyperbolicity_failures"] = s.at("hyperbolicity").at("failures");
      r["hyperbolicity_worst_ratio"] = s.at("hyperbolicity").at("worst_ratio");
      rows.steps.push_back(r);
    }
  }
  for (const auto& lam : load_run_file(dir, "le_gap.json")) {
    const Json& e = lam.at("experiment");
    for (const auto& p : e.at("points")) {
      Json r = Json::object();
      r["lambda"] = lam.at("lambda");
      r["n"] = e.at("n");
      r["grid"] = p.at("grid");
      r["horizon"] = e.at("horizon");
      r["cap_bound"] = e.at("cap_bound");
      r["le_A"] = p.at("le_A").at("value");
      r["le_A_stderr"] = p.at("le_A").at("std_error");
      r["le_Atilde"] = p.at("le_Atilde").at("value");
      r["le_Atilde_stderr"] = p.at("le_Atilde").at("std_error");
      r["gap"] = p.at("gap");
      r["gap_over_log_lambda"] = p.at("gap_over_log_lambda");
      r["excluded_fraction"] = p.at("le_A").at("excluded_fraction");
      rows.gaps.push_back(r);
    }
  }
  return rows;
}

inline std::string csv_cell(const Json& v) {
  if (v.is_number_float()) return format_double(v.get<double>());
  if (v.is_boolean()) return v.get<bool>() ? "1" : "0";
  if (v.is_string()) return v.get<std::string>();
  return v.dump();
}

inline std::string to_csv(const std::string& table, const std::vector<std::string>& columns,
                          const std::vector<Json>& rows) {
  std::string out = "# qpc " + table + " csv v" + std::to_string(kExportVersion) + "\n";
  for (std::size_t i = 0; i < columns.size(); ++i) out += (i ? "," : "") + columns[i];
  out += "\n";
  for (const auto& r : rows) {
    for (std::size_t i = 0; i < columns.size(); ++i) out += (i ? "," : "") + csv_cell(r.at(columns[i]));
    out += "\n";
  }
  return out;
}

// Writes into <run_dir>/export and returns the paths written.
inline std::vector<std::filesystem::path> export_run(const std::filesystem::path& dir, ExportFormat format) {
  const ExportRows rows = collect_rows(dir);
  const auto out_dir = dir / "export";
  std::filesystem::create_directories(out_dir);
  std::vector<std::filesystem::path> written;
  if (format == ExportFormat::csv) {
    written.push_back(out_dir / "steps.csv");
    write_file(written.back().string(), to_csv("steps", step_columns(), rows.steps));
    written.push_back(out_dir / "le_gap.csv");
    write_file(written.back().string(), to_csv("le_gap", gap_columns(), rows.gaps));
  } else {
    Json j;
    j["export_version"] = kExportVersion;
    j["config_sha256"] = rows.config_sha256;
    j["steps"] = rows.steps;
    j["le_gap"] = rows.gaps;
    written.push_back(out_dir / "report.json");
    write_file(written.back().string(), dump_json(j));
  }
  return written;
}

}  // namespace qpc
