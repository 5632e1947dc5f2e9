#include "CLI11.hpp"
#include "qpc/harness.hpp"
#include "qpc_schemas.hpp"

#include <iostream>

using namespace qpc;

namespace {

// Rows {n, a, p, q, z_num, z_den} of a convergent table.
Json convergent_rows(const ConvergentTable& t) {
  Json rows = Json::array();
  for (const auto& r : t.rows())
    rows.push_back(Json{{"n", r.n},
                        {"a", r.a.str()},
                        {"p", r.p.str()},
                        {"q", r.q.str()},
                        {"z_num", num_of(r.z).str()},
                        {"z_den", den_of(r.z).str()}});
  return rows;
}

std::string synth_text(const std::string& rule, std::size_t depth, std::uint64_t seed) {
  const auto parts = split(rule, ':');
  const std::string d = std::to_string(depth);
  if (parts[0] == "random") {
    if (parts.size() != 3) throw ConfigError("random rule is random:LO:HI");
    return "random:" + std::to_string(seed) + ":" + parts[1] + ":" + parts[2] + ":" + d;
  }
  return rule + ":" + d;
}

void print_csv_header(const std::vector<std::string>& cols) {
  for (std::size_t i = 0; i < cols.size(); ++i) std::cout << (i ? "," : "") << cols[i];
  std::cout << "\n";
}

ExperimentConfig load_with_workers(const std::string& path, std::optional<unsigned> cli_workers) {
  ExperimentConfig cfg = load_config(path);
  if (cli_workers) cfg.workers = *cli_workers;
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"quasiperiodic cocycle construction toolkit"};
  app.require_subcommand(1);

  // freq
  auto* freq = app.add_subcommand("freq", "continued fractions and frequency classes");
  freq->require_subcommand(1);
  std::string rational_text, rule_text, freq_text;
  std::size_t depth = 16;
  std::uint64_t seed = 7;
  auto* expand = freq->add_subcommand("expand", "expand a rational number");
  expand->add_option("--rational", rational_text, "P/Q in (0,1)")->required();
  expand->add_option("--depth", depth, "number of partial quotients");
  auto* synth = freq->add_subcommand("synth", "synthesize a frequency from a growth rule");
  synth->add_option("--rule", rule_text,
                    "golden | silver | constant:A | spike:BASE:P1,P2:FACTOR | random:LO:HI | linear")
      ->required();
  synth->add_option("--depth", depth, "number of partial quotients");
  synth->add_option("--seed", seed, "seed for random rules");
  ClassifyParams cp;
  auto* classify_cmd = freq->add_subcommand("classify", "finite-truncation class estimates");
  classify_cmd->add_option("--freq", freq_text, "frequency, e.g. golden:20 or spike:1:7:200:12")->required();
  classify_cmd->add_option("--gamma", cp.gamma);
  classify_cmd->add_option("--tau", cp.tau);
  classify_cmd->add_option("--delta", cp.delta);

  // orbit
  auto* orbit = app.add_subcommand("orbit", "return times and three-distance structure");
  orbit->require_subcommand(1);
  int level = 2;
  std::int64_t samples = 10;
  bool brute = false, symmetric = false;
  auto* gaps_cmd = orbit->add_subcommand("gaps", "gaps of X_n");
  gaps_cmd->add_option("--freq", freq_text)->required();
  gaps_cmd->add_option("--n", level)->required();
  auto* ret_cmd = orbit->add_subcommand("return", "closed-form return times on I_n");
  ret_cmd->add_option("--freq", freq_text)->required();
  ret_cmd->add_option("--n", level)->required();
  ret_cmd->add_option("--samples", samples, "samples per subinterval");
  ret_cmd->add_option("--seed", seed);
  ret_cmd->add_flag("--brute", brute, "compare with brute-force iteration");
  ret_cmd->add_flag("--symmetric", symmetric, "use the symmetric interval [-b_n, b_n)");

  // sl2
  auto* sl2 = app.add_subcommand("sl2", "SL(2,R) lemma checks");
  sl2->require_subcommand(1);
  std::string lemma;
  std::int64_t trials = 10000;
  std::uint64_t sl2_seed = 1;
  auto* sl2_verify = sl2->add_subcommand("verify", "randomized lemma check");
  sl2_verify->add_option("--lemma", lemma)->required()->check(CLI::IsMember({"basic", "resonant", "hyperbolic", "faa",
                                                                             "svd"}));
  sl2_verify->add_option("--trials", trials);
  sl2_verify->add_option("--seed", sl2_seed);

  // cocycle
  auto* cocycle = app.add_subcommand("cocycle", "finite Lyapunov exponents and frames");
  cocycle->require_subcommand(1);
  std::string spec_path;
  std::int64_t horizon = 1000, grid = 256;
  std::optional<unsigned> workers;
  auto* le_cmd = cocycle->add_subcommand("le", "finite-horizon LE on a uniform grid");
  le_cmd->add_option("--spec", spec_path)->required();
  le_cmd->add_option("--N", horizon);
  le_cmd->add_option("--grid", grid);
  le_cmd->add_option("--workers", workers);
  auto* frames_cmd = cocycle->add_subcommand("frames", "s_n, u_n on samples of I_n");
  frames_cmd->add_option("--spec", spec_path)->required();
  frames_cmd->add_option("--level", level)->required();
  frames_cmd->add_option("--samples", samples);
  frames_cmd->add_option("--workers", workers);

  // construct
  auto* construct = app.add_subcommand("construct", "the correction construction");
  construct->require_subcommand(1);
  std::string config_path, out_dir;
  auto* run_cmd = construct->add_subcommand("run", "build, verify and persist a run");
  run_cmd->add_option("--config", config_path)->required();
  run_cmd->add_option("--out", out_dir);
  run_cmd->add_option("--workers", workers);

  // verify
  std::string suite_name, report_path;
  auto* verify = app.add_subcommand("verify", "run an acceptance suite");
  verify->add_option("--suite", suite_name)->required()->check(CLI::IsMember({"orbit-oracle", "sl2-lemmas",
                                                                              "construction-step", "le-gap", "all"}));
  verify->add_option("--config", config_path)->required();
  verify->add_option("--report", report_path, "write the JSON report here instead of stdout");
  verify->add_option("--workers", workers);

  // export
  std::string run_dir, format = "csv";
  auto* export_cmd = app.add_subcommand("export", "export a completed run");
  export_cmd->add_option("run_dir", run_dir)->required();
  export_cmd->add_option("--format", format)->check(CLI::IsMember({"csv", "json"}));

  // schema
  std::string schema_name = "config";
  auto* schema_cmd = app.add_subcommand("schema", "print a shipped JSON schema");
  schema_cmd->add_option("name", schema_name)->check(CLI::IsMember({"config", "report", "export"}));

  CLI11_PARSE(app, argc, argv);

  try {
    if (expand->parsed()) {
      FrequencySpec f;
      f.source = freq_rules::FromRational{parse_rational(rational_text)};
      f.depth = depth;
      const auto pq = f.quotients();
      Json out{{"finite", pq.finite}, {"rows", convergent_rows(ConvergentTable(pq))}};
      std::cout << dump_json(out);
    } else if (synth->parsed()) {
      const auto f = parse_frequency(synth_text(rule_text, depth, seed));
      std::cout << dump_json(Json{{"freq_rule", to_json(f)}, {"rows", convergent_rows(*f.table())}});
    } else if (classify_cmd->parsed()) {
      const auto rep = classify(*parse_frequency(freq_text).table(), cp);
      Json levels = Json::array();
      for (const auto& l : rep.levels)
        levels.push_back(Json{{"n", l.n},
                              {"evaluated", l.evaluated},
                              {"bounded", l.bounded_pass},
                              {"sdc", l.sdc_pass},
                              {"dc", l.dc_pass}});
      std::cout << dump_json(Json{{"beta_hat", rep.beta_hat},
                                  {"beta_delta_hat", rep.beta_delta_hat},
                                  {"bounded_M_hat", rep.bounded_M_hat},
                                  {"tail_log_ratio", rep.tail_log_ratio},
                                  {"bounded", rep.bounded_pass},
                                  {"sdc", rep.sdc_pass},
                                  {"dc", rep.dc_pass},
                                  {"finite_truncation_caveat", rep.caveat},
                                  {"levels", levels}});
    } else if (gaps_cmd->parsed()) {
      const auto table = parse_frequency(freq_text).table();
      const auto td = three_distance(*table, level);
      std::cout << "# small_gap=" << td.small_gap << " large_gap=" << td.large_gap
                << " large_count=" << td.large_gap_count << " two_valued=" << td.gaps_two_valued
                << " successor_rule=" << td.successor_rule_holds << "\n";
      print_csv_header({"q", "position_num", "den", "gap_num"});
      for (std::size_t i = 0; i < td.gaps.size(); ++i)
        std::cout << td.numerators[i] << "," << td.positions[i] << "," << td.modulus << "," << td.gaps[i] << "\n";
    } else if (ret_cmd->parsed()) {
      const auto table = parse_frequency(freq_text).table();
      const Convention conv = symmetric ? Convention::symmetric : Convention::asymmetric;
      CriticalIntervalFamily fam(*table, level, conv);
      auto gen = stream(seed, 1, 0, static_cast<std::uint64_t>(level));
      print_csv_header({"x_num", "x_den", "subinterval", "direction", "t_closed", "t_brute", "match"});
      bool all_match = true;
      const BigInt cap = table->q(level) + table->q(level + 1) + table->q(level + 2);
      for (const auto& tag : fam.tags()) {
        std::vector<Rational> xs;
        for (std::int64_t k = 0; k < samples; ++k) xs.push_back(sample_in(fam.piece(tag), gen));
        xs.push_back(closed_endpoint(fam.piece(tag)));
        for (const auto& x : xs)
          for (Direction d : {Direction::forward, Direction::backward}) {
            const auto closed = return_time_closed(CirclePoint(x), *table, level, d, conv);
            std::string t_brute, match;
            if (brute) {
              const BigInt b = return_time_brute(CirclePoint(x), *table, level, d, cap, conv);
              t_brute = b.str();
              match = b == closed.time ? "1" : "0";
              all_match = all_match && b == closed.time;
            }
            std::cout << num_of(x) << "," << den_of(x) << "," << closed.piece.str() << "," << to_string(d) << ","
                      << closed.time << "," << t_brute << "," << match << "\n";
          }
      }
      return all_match ? 0 : 1;
    } else if (sl2_verify->parsed()) {
      ExperimentConfig cfg;
      cfg.frequency = parse_frequency("golden:8");
      cfg.trials = trials;
      cfg.seed = sl2_seed;
      const auto rep = sl2_lemmas_suite(cfg);
      const std::map<std::string, std::string> names{{"basic", "nonresonant-product"},
                                                     {"resonant", "resonant-cancellation"},
                                                     {"hyperbolic", "mu-hyperbolic"},
                                                     {"faa", "faa-di-bruno"},
                                                     {"svd", "svd-reconstruction"}};
      const CheckResult* c = rep.find(names.at(lemma));
      Json out{{"lemma", lemma},
               {"trials", trials},
               {"violations", c->details.value("violations", c->passed ? 0 : 1)},
               {"passed", c->passed},
               {"worst_case", c->details},
               {"witness", c->witness.empty() ? Json(nullptr) : Json(c->witness)}};
      std::cout << dump_json(out);
      return c->passed ? 0 : 1;
    } else if (le_cmd->parsed()) {
      const auto spec = cocycle_from_json(Json::parse(read_file(spec_path)));
      const unsigned w = workers.value_or(default_workers());
      const auto values = le_samples(spec, horizon, grid, w);
      const auto est = finite_le(spec, horizon, grid, w);
      std::cout << "# finite LE, horizon " << horizon << ": value=" << format_double(est.value)
                << " stderr=" << format_double(est.std_error) << "\n";
      print_csv_header({"x", "logscale"});
      for (std::size_t j = 0; j < values.size(); ++j)
        std::cout << j << "/" << grid << "," << format_double(values[j] * static_cast<double>(horizon)) << "\n";
    } else if (frames_cmd->parsed()) {
      const auto spec = cocycle_from_json(Json::parse(read_file(spec_path)));
      const unsigned w = workers.value_or(default_workers());
      CriticalIntervalFamily fam(*spec.frequency, level, Convention::symmetric);
      const Arc whole = fam.whole();
      std::vector<Rational> xs;
      for (std::int64_t k = 0; k < samples; ++k) xs.push_back(frac(whole.lo + whole.len * Rational(k, samples)));
      print_csv_header({"x", "logscale", "s_angle", "u_angle", "flags"});
      for (const auto& f : frame_fields(spec, level, xs, kDefaultFrameFloor, w))
        std::cout << to_string(f.x) << "," << format_double(f.log_norm_forward) << "," << format_double(f.s_angle)
                  << "," << format_double(f.u_angle) << "," << (f.well_defined ? "ok" : "ill_defined") << "\n";
    } else if (run_cmd->parsed()) {
      const auto cfg = load_with_workers(config_path, workers);
      const std::string dir = !out_dir.empty() ? out_dir : cfg.output_dir.value_or("run");
      const auto m = run_construct(cfg, dir);
      std::cout << dump_json(to_json(m));
      return m.passed ? 0 : 1;
    } else if (verify->parsed()) {
      const auto cfg = load_with_workers(config_path, workers);
      const auto rep = run_suite(suite_name, cfg);
      const std::string text = dump_json(to_json(rep));
      if (report_path.empty()) std::cout << text;
      else write_file(report_path, text);
      for (const auto& c : rep.checks)
        if (!c.passed) std::cerr << "FAIL " << c.name << ": " << c.invariant << " witness: " << c.witness << "\n";
      return rep.passed() ? 0 : 1;
    } else if (export_cmd->parsed()) {
      for (const auto& p : export_run(run_dir, parse_export_format(format))) std::cout << p.string() << "\n";
    } else if (schema_cmd->parsed()) {
      std::cout << schema_text(schema_name);
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const CapError& e) {
    std::cerr << "budget exceeded: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
