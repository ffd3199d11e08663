#pragma once

// Command implementations behind the `edisc` executable. Stages exchange
// data only through files in their output directories.

#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "edisc/baseline.hpp"
#include "edisc/bayesnet.hpp"
#include "edisc/config.hpp"
#include "edisc/dataio.hpp"
#include "edisc/ensemble.hpp"
#include "edisc/error.hpp"
#include "edisc/evolution.hpp"
#include "edisc/solver.hpp"

namespace edisc::cli {

namespace fs = std::filesystem;
using nlohmann::json;

// ---------------------------------------------------------------------------
// Shared helpers

inline std::uint64_t run_seed(const Config& cfg) {
  const auto& s = cfg.str("evo.seed");
  return static_cast<std::uint64_t>(s == "auto" ? cfg.integer("run.seed") : cfg.integer("evo.seed"));
}

inline DataSet load_data(const Config& cfg) {
  if (cfg.str("data.path").empty()) throw ConfigError("config key 'data.path' is required");
  auto vars = cfg.list("data.variables");
  return load_csv(cfg.str("data.path"), cfg.str("data.time_column"), cfg.list("data.columns"),
                  vars);
}

inline DiffOptions diff_options(const Config& cfg) {
  DiffOptions o;
  o.method = parse_diff_method(cfg.str("diff.method"));
  o.window = static_cast<int>(cfg.integer("diff.window"));
  o.max_order = static_cast<int>(cfg.integer("diff.max_order"));
  return o;
}

/// Observations with derivatives up to diff.max_order, optionally normalized.
inline DataSet prepared_data(const Config& cfg) {
  auto data = load_data(cfg);
  if (cfg.boolean("data.normalize")) data = normalize(data).data;
  return with_all_derivatives(data, diff_options(cfg));
}

inline EvoConfig evo_config(const Config& cfg) {
  EvoConfig e;
  e.population = static_cast<int>(cfg.integer("evo.population"));
  e.generations = static_cast<int>(cfg.integer("evo.generations"));
  e.min_terms = static_cast<int>(cfg.integer("evo.min_terms"));
  e.max_terms = static_cast<int>(cfg.integer("evo.max_terms"));
  e.crossover_rate = cfg.real("evo.crossover_rate");
  e.mutation_rate = cfg.real("evo.mutation_rate");
  e.resolve_margin = cfg.real("evo.resolve_margin");
  e.elites_per_complexity = static_cast<int>(cfg.integer("evo.elites"));
  e.tokens.variables = cfg.variables();
  e.tokens.limits.max_factors = static_cast<int>(cfg.integer("tokens.max_factors"));
  e.tokens.limits.max_power = static_cast<int>(cfg.integer("tokens.max_power"));
  e.tokens.limits.max_order = static_cast<int>(cfg.integer("diff.max_order"));
  e.tokens.inverse_coordinate = cfg.boolean("tokens.inverse_coordinate");
  e.tokens.constant = cfg.boolean("tokens.constant");
  e.tokens.axis = "t";
  if (cfg.str("regression.lambda") != "auto") {
    auto l = parse_number(cfg.str("regression.lambda"));
    if (!l || *l < 0) throw ConfigError("config key 'regression.lambda' expects 'auto' or a number >= 0");
    e.fit.lambda = *l;
  }
  e.fit.epsilon = cfg.real("regression.epsilon");
  e.fit.lasso.max_sweeps = static_cast<int>(cfg.integer("regression.max_sweeps"));
  e.fit.lasso.tol = cfg.real("regression.tol");
  if (e.population < 1) throw ConfigError("config key 'evo.population' must be >= 1");
  if (e.generations < 0) throw ConfigError("config key 'evo.generations' must be >= 0");
  if (e.min_terms < 2 || e.max_terms < e.min_terms)
    throw ConfigError("config keys 'evo.min_terms'/'evo.max_terms' need 2 <= min <= max");
  return e;
}

inline LotkaVolterra reference(const Config& cfg) {
  return {cfg.real("compare.alpha"), cfg.real("compare.beta"), cfg.real("compare.gamma"),
          cfg.real("compare.delta")};
}

inline void write_text(const fs::path& p, const std::string& s) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw LoadError("cannot write '" + p.string() + "'");
  out << s;
}

inline std::string read_text(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw LoadError("cannot read '" + p.string() + "'");
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

inline void write_json(const fs::path& p, const json& j) { write_text(p, j.dump(2) + "\n"); }

inline json read_json(const fs::path& p) {
  try {
    return json::parse(read_text(p));
  } catch (const json::exception& e) {
    throw LoadError("malformed JSON in '" + p.string() + "': " + e.what());
  }
}

/// Creates the directory and records the resolved config and tool version.
inline fs::path prepare_output(const Config& cfg, const std::string& sub = {}) {
  fs::path dir = cfg.str("run.output_dir");
  if (!sub.empty()) dir /= sub;
  fs::create_directories(dir);
  write_text(dir / "resolved.cfg", cfg.dump());
  write_text(dir / "VERSION", std::string(kVersion) + "\n");
  return dir;
}

inline json equation_json(const Equation& eq) {
  json terms = json::array(), coefs = json::array();
  for (const auto& t : eq.terms()) {
    terms.push_back(canonical_key(t));
    coefs.push_back(t.coefficient());
  }
  return {{"variable", eq.variable()}, {"equation", render(eq)},
          {"target", canonical_key(eq.target())}, {"terms", terms}, {"coefficients", coefs},
          {"complexity", eq.complexity()}};
}

inline Equation equation_from_json(const json& j) {
  const auto keys = j.at("terms").get<std::vector<std::string>>();
  const auto coefs = j.at("coefficients").get<std::vector<double>>();
  if (keys.size() != coefs.size()) throw LoadError("terms and coefficients differ in length");
  const auto target = j.at("target").get<std::string>();
  std::vector<Term> terms;
  std::optional<std::size_t> ti;
  for (std::size_t i = 0; i < keys.size(); ++i) {
    if (keys[i] == target) ti = i;
    terms.push_back(parse_term_key(keys[i], coefs[i]));
  }
  if (!ti) throw LoadError("target '" + target + "' missing from its equation");
  return Equation(std::move(terms), *ti);
}

inline json front_json(const std::vector<Individual>& members) {
  json arr = json::array();
  for (const auto& m : members) {
    auto j = equation_json(normalize_target(m.equation));
    j["quality"] = m.objectives->quality;
    j["complexity"] = m.objectives->complexity;
    arr.push_back(j);
  }
  return arr;
}

inline SystemFront read_fronts(const fs::path& dir, const std::vector<std::string>& vars) {
  SystemFront f;
  for (const auto& v : vars) {
    const auto p = dir / ("front_" + v + ".json");
    if (!fs::exists(p)) throw LoadError("missing '" + p.string() + "'");
    for (const auto& e : read_json(p)) f[v].push_back(equation_from_json(e));
  }
  return f;
}

// ---------------------------------------------------------------------------
// Commands

/// Evolves every variable once and writes front_<var>.json and equations.txt.
inline void cmd_discover(const Config& cfg) {
  const auto data = prepared_data(cfg);
  const auto ecfg = evo_config(cfg);
  const auto dir = prepare_output(cfg);
  const auto seed = run_seed(cfg);
  std::string text;
  for (std::size_t k = 0; k < ecfg.tokens.variables.size(); ++k) {
    const auto& var = ecfg.tokens.variables[k];
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(k)};
    std::mt19937_64 rng(seq);
    auto c = ecfg;
    c.target_variable = var;
    const auto members = front_members(evolve(data, c, rng));
    write_json(dir / ("front_" + var + ".json"), front_json(members));
    text += "# " + var + "\n";
    for (const auto& m : members)
      text += render(normalize_target(m.equation)) + "    [quality " +
              format_number(m.objectives->quality) + ", terms " +
              std::to_string(m.objectives->complexity) + "]\n";
  }
  write_text(dir / "equations.txt", text);
  std::cout << text;
}

inline std::map<std::string, std::string> anchors_for(const Config& cfg) {
  auto a = cfg.anchors();
  for (const auto& v : cfg.variables())
    if (!a.count(v)) a[v] = default_anchor(v);
  return a;
}

/// Collects fronts (fresh runs, or existing discover directories given in
/// `from`) into the pooled and per-variable term tables.
inline void cmd_ensemble(const Config& cfg, int runs, const std::vector<std::string>& from) {
  const auto vars = cfg.variables();
  SystemEnsemble ens;
  ens.variables = vars;
  const auto dir = prepare_output(cfg);
  json meta;
  if (!from.empty()) {
    std::vector<std::string> used;
    for (const auto& d : from) {
      ens.runs.push_back(read_fronts(d, vars));
      used.push_back(fs::path(d).lexically_normal().generic_string());
    }
    meta["sources"] = used;
  } else {
    if (runs < 1) throw ConfigError("config key 'ensemble.runs' must be >= 1");
    const auto data = prepared_data(cfg);
    ens = collect(data, runs, evo_config(cfg), run_seed(cfg));
    for (std::size_t i = 0; i < ens.runs.size(); ++i) {
      char name[32];
      std::snprintf(name, sizeof(name), "run_%03zu", i);
      const auto rd = dir / "runs" / name;
      fs::create_directories(rd);
      for (const auto& v : vars) {
        json arr = json::array();
        for (const auto& eq : ens.runs[i].at(v)) arr.push_back(equation_json(eq));
        write_json(rd / ("front_" + v + ".json"), arr);
      }
    }
    meta["seeds"] = ens.seeds;
  }
  if (ens.runs.empty()) throw InsufficientDataError("ensemble has no successful runs");
  meta["runs"] = ens.runs.size();
  meta["skipped"] = ens.skipped;

  std::set<std::string> keep;
  for (const auto& [v, key] : anchors_for(cfg)) keep.insert(key);
  auto pooled = pooled_table(ens);
  const auto min_support = static_cast<int>(cfg.integer("ensemble.min_support"));
  const auto dropped = drop_rare_columns(pooled, min_support, keep);
  write_table(pooled, (dir / "table").string());
  for (const auto& v : vars) {
    auto e = ens.for_variable(v);
    if (e.size() == 0) continue;
    write_table(tabulate(e), (dir / ("table_" + v)).string());
  }
  meta["rows"] = pooled.rows();
  meta["columns"] = pooled.columns;
  meta["dropped"] = dropped;
  write_json(dir / "ensemble.json", meta);
  std::string noise;
  for (const auto& k : dropped) noise += k + "\n";
  write_text(dir / "noise_candidates.txt", noise);
  std::cout << "pooled table: " << pooled.rows() << " rows x " << pooled.cols() << " columns ("
            << dropped.size() << " rare columns dropped)\n";
}

inline void cmd_bnet(const Config& cfg, const std::string& in) {
  const auto stem = (fs::path(in) / "table").string();
  if (!fs::exists(stem + ".csv")) throw LoadError("no term table in '" + in + "'");
  const auto table = read_table(stem);
  const auto dag = learn_structure(table, static_cast<int>(cfg.integer("bn.max_parents")));
  const auto bn = fit_parameters(dag, table);
  const auto dir = prepare_output(cfg);
  write_json(dir / "network.json", to_json(bn));
  write_text(dir / "network.dot", to_dot(bn));
  std::string text = "nodes: " + std::to_string(bn.nodes.size()) +
                     "\nedges: " + std::to_string(bn.dag.edge_count()) + "\ncomponents:\n";
  for (const auto& comp : components(bn.dag)) {
    text += " ";
    for (auto j : comp) text += " " + bn.nodes[j];
    text += "\n";
  }
  write_text(dir / "network.txt", text);
  std::cout << text;
}

struct SolveSetup {
  std::vector<double> y0;
  std::vector<double> report;
};

inline SolveSetup solve_setup(const Config& cfg, const DataSet& data,
                              const std::vector<std::string>& vars) {
  SolveSetup s;
  for (const auto& v : vars) s.y0.push_back(data.channel(v).front());
  double t0 = data.grid().front(), t1 = data.grid().back();
  if (cfg.str("solve.t_span") != "data") {
    const auto parts = cfg.list("solve.t_span");
    std::optional<double> a, b;
    if (parts.size() == 2) a = parse_number(parts[0]), b = parse_number(parts[1]);
    if (!a || !b || !(*b > *a))
      throw ConfigError("config key 'solve.t_span' expects 'data' or 't0,t1' with t1 > t0");
    t0 = *a;
    t1 = *b;
  }
  if (cfg.str("solve.report_points") == "data" && cfg.str("solve.t_span") == "data") {
    s.report = data.grid();
  } else {
    const auto& rp = cfg.str("solve.report_points");
    const auto n = rp == "data" ? static_cast<long>(data.size()) : cfg.integer("solve.report_points");
    if (n < 2) throw ConfigError("config key 'solve.report_points' must be >= 2");
    s.report = uniform_times(t0, t1, static_cast<int>(n));
  }
  return s;
}

inline json summary_json(const std::vector<TermSummary>& summary) {
  json arr = json::array();
  for (const auto& t : summary) {
    json j{{"variable", t.variable}, {"key", t.key}, {"present", t.present},
           {"presence_rate", t.presence_rate}};
    j["mean"] = t.mean ? json(*t.mean) : json(nullptr);
    j["half_width"] = t.half_width ? json(*t.half_width) : json(nullptr);
    arr.push_back(j);
  }
  return arr;
}

inline std::string key_of(std::initializer_list<std::string> fields) {
  std::vector<Token> f;
  for (const auto& x : fields) f.push_back(Token::field(x));
  return canonical_key(Term(f));
}

/// Samples systems from the network, summarizes coefficients, integrates
/// every sample and writes trajectories, the envelope and its plot.
inline void cmd_sample_solve(const Config& cfg, const std::string& in, int n) {
  const auto netp = fs::path(in) / "network.json";
  if (!fs::exists(netp)) throw LoadError("no network.json in '" + in + "'");
  const auto bn = network_from_json(read_json(netp));
  const auto vars = cfg.variables();
  const auto anchors = anchors_for(cfg);
  std::mt19937_64 rng(static_cast<std::uint64_t>(cfg.integer("run.seed")));
  const auto samples = sample_systems(bn, anchors, n, rng);
  const auto dir = prepare_output(cfg);

  json sj = json::array();
  for (const auto& s : samples) {
    json e = json::object();
    for (const auto& [v, eq] : s.equations) e[v] = equation_json(eq);
    sj.push_back({{"index", s.index}, {"equations", e}});
  }
  write_json(dir / "samples.json", sj);

  const auto summary = summarize(samples);
  json out{{"samples", samples.size()}, {"terms", summary_json(summary)}};
  std::string text = "# all samples (spread is the sampling spread)\n";
  for (const auto& v : vars) {
    auto it = anchors.find(v);
    const auto target = it->second.substr(0, it->second.size() - v.size() - 1);
    text += render_summary(summary, v, target) + "\n";
  }

  json groups = json::array();
  for (const auto& g : group_by_support(samples)) {
    groups.push_back({{"support", g.support}, {"count", g.members.size()}});
  }
  out["groups"] = groups;

  // Samples whose equations contain the Lotka-Volterra base terms.
  if (vars.size() == 2) {
    const auto& u = vars[0];
    const auto& v = vars[1];
    const auto uv = key_of({u, v});
    std::vector<SampledSystem> base;
    for (const auto& s : samples) {
      const auto& eu = s.equations.at(u);
      const auto& ev = s.equations.at(v);
      if (eu.find(u) && eu.find(uv) && ev.find(v) && ev.find(uv)) base.push_back(s);
    }
    json bj{{"count", base.size()}};
    if (base.size() >= 2) {
      const auto bs = summarize(base);
      bj["terms"] = summary_json(bs);
      text += "# samples containing the {" + u + ", " + uv + "} / {" + v + ", " + uv +
              "} base: " + std::to_string(base.size()) + "\n";
      for (const auto& var : vars) {
        const auto& a = anchors.at(var);
        text += render_summary(bs, var, a.substr(0, a.size() - var.size() - 1)) + "\n";
      }
    }
    out["reference_base"] = bj;
  }
  write_json(dir / "summary.json", out);
  write_text(dir / "summary.txt", text);
  std::cout << text;

  const auto data = load_data(cfg);
  const auto setup = solve_setup(cfg, data, vars);
  IntegrateOptions io;
  io.rtol = cfg.real("solve.rtol");
  io.atol = cfg.real("solve.atol");
  std::vector<Trajectory> trajectories;
  json failures = json::array();
  fs::create_directories(dir / "trajectories");
  for (const auto& s : samples) {
    try {
      std::map<std::string, Equation> eqs;
      for (const auto& v : vars) eqs.emplace(v, s.equations.at(v));
      auto rs = resolve(eqs);
      auto tr = integrate(rs, setup.y0, setup.report, io);
      char name[40];
      std::snprintf(name, sizeof(name), "sample_%03zu.csv", s.index);
      std::ofstream f(dir / "trajectories" / name, std::ios::binary);
      write_trajectory_csv(tr, f);
      trajectories.push_back(std::move(tr));
    } catch (const IntegrationError& e) {
      std::cerr << "warning: sample " << s.index << " excluded: " << e.what() << "\n";
      failures.push_back({{"index", s.index}, {"reason", e.what()},
                          {"last_good_time", e.last_good_time()}});
    } catch (const Error& e) {
      std::cerr << "warning: sample " << s.index << " excluded: " << e.what() << "\n";
      failures.push_back({{"index", s.index}, {"reason", e.what()}});
    }
  }
  json solve{{"integrated", trajectories.size()}, {"excluded", failures},
             {"initial_state", setup.y0}, {"rtol", io.rtol}, {"atol", io.atol}};
  write_json(dir / "solve.json", solve);
  if (trajectories.empty()) throw IntegrationError("no sampled system could be integrated", 0.0);
  const auto env = envelope(trajectories, failures.size());
  std::ofstream ef(dir / "envelope.csv", std::ios::binary);
  write_envelope_csv(env, ef);
  write_text(dir / "envelope.svg", envelope_svg(env, &data));
  std::cout << "integrated " << trajectories.size() << " of " << samples.size() << " samples\n";
}

inline BaselineOptions baseline_options(const Config& cfg, int n_boot) {
  BaselineOptions o;
  o.n_boot = n_boot;
  o.keep_fraction = cfg.real("baseline.keep_fraction");
  o.threshold = cfg.real("baseline.threshold");
  o.normalize = cfg.boolean("baseline.normalize");
  o.interpolate = static_cast<int>(cfg.integer("baseline.interpolate"));
  o.inclusion = cfg.real("baseline.inclusion");
  o.resample_rows = cfg.boolean("baseline.resample_rows");
  return o;
}

inline void cmd_baseline(const Config& cfg, int n_boot) {
  auto data = load_data(cfg);
  auto d = diff_options(cfg);
  d.max_order = 1;
  data = with_all_derivatives(data, d);
  const auto opt = baseline_options(cfg, n_boot);
  const auto vars = cfg.variables();
  const auto dir = prepare_output(cfg);
  json out = json::object();
  std::string text;
  for (std::size_t k = 0; k < vars.size(); ++k) {
    std::seed_seq seq{static_cast<std::uint32_t>(cfg.integer("run.seed")),
                      static_cast<std::uint32_t>(k)};
    std::mt19937_64 rng(seq);
    const auto r = bootstrap_discover(data, vars[k], opt, rng);
    json terms = json::array();
    for (const auto& t : r.terms) {
      json j{{"key", t.key}, {"inclusion", t.inclusion}};
      j["mean"] = t.mean ? json(*t.mean) : json(nullptr);
      j["half_width"] = t.half_width ? json(*t.half_width) : json(nullptr);
      terms.push_back(j);
    }
    out[vars[k]] = {{"terms", terms}, {"support", r.support(opt.inclusion)},
                    {"skipped", r.skipped}, {"trials", r.trials.size()},
                    {"equation", render_baseline(r, opt.inclusion)}};
    text += render_baseline(r, opt.inclusion) + "\n";
  }
  write_json(dir / "baseline.json", out);
  write_text(dir / "baseline.txt", text);
  std::cout << text;
}

/// Coefficients a stage reports for its main system: the reference base of
/// sample-solve or the supported terms of baseline.
inline std::map<std::string, std::map<std::string, double>> reported_coefficients(
    const fs::path& dir, std::string& label) {
  std::map<std::string, std::map<std::string, double>> c;
  if (fs::exists(dir / "summary.json")) {
    label = "bayesian network";
    const auto j = read_json(dir / "summary.json");
    if (!j.contains("reference_base") || !j["reference_base"].contains("terms"))
      throw InsufficientDataError("'" + dir.string() + "' has no sampled base system to compare");
    for (const auto& t : j["reference_base"]["terms"])
      if (!t["mean"].is_null())
        c[t["variable"].get<std::string>()][t["key"].get<std::string>()] = t["mean"].get<double>();
    return c;
  }
  if (fs::exists(dir / "baseline.json")) {
    label = "baseline";
    const auto j = read_json(dir / "baseline.json");
    for (const auto& [var, body] : j.items()) {
      std::set<std::string> sup;
      for (const auto& k : body["support"]) sup.insert(k.get<std::string>());
      for (const auto& t : body["terms"])
        if (sup.count(t["key"].get<std::string>()) && !t["mean"].is_null())
          c[var][t["key"].get<std::string>()] = t["mean"].get<double>();
    }
    return c;
  }
  throw LoadError("'" + dir.string() + "' holds neither summary.json nor baseline.json");
}

inline void cmd_compare(const Config& cfg, const std::vector<std::string>& in) {
  if (in.empty()) throw ConfigError("compare needs at least one --in directory");
  const auto vars = cfg.variables();
  if (vars.size() != 2) throw ConfigError("compare needs exactly two variables");
  const auto ref = reference(cfg);
  json rows = json::array();
  auto pct = [](double x) {
    char b[32];
    std::snprintf(b, sizeof(b), "%.1f%%", 100.0 * x);
    return std::string(b);
  };
  std::string text = "source | " + vars[0] + " | " + vars[1] + " | mean(uv) | mean(error)\n";
  for (const auto& d : in) {
    std::string label;
    const auto c = reported_coefficients(d, label);
    const auto e = coefficient_errors(c, vars[0], vars[1], ref);
    rows.push_back({{"source", fs::path(d).lexically_normal().generic_string()},
                    {"kind", label},
                    {"u", e.u},
                    {"v", e.v},
                    {"uv_u", e.uv_u},
                    {"uv_v", e.uv_v},
                    {"mean_uv", e.mean_uv()},
                    {"mean_error", e.mean()}});
    text += fs::path(d).lexically_normal().generic_string() + " (" + label + ") | " + pct(e.u) +
            " | " + pct(e.v) + " | " + pct(e.mean_uv()) + " | " + pct(e.mean()) + "\n";
  }
  const auto dir = prepare_output(cfg);
  write_json(dir / "compare.json", rows);
  write_text(dir / "compare.txt", text);
  std::cout << text;
}

// ---------------------------------------------------------------------------
// Entry point

/// Parses arguments and dispatches; returns the process exit code.
inline int run(int argc, const char* const* argv) {
  CLI::App app{"Equation discovery with term-level uncertainty"};
  app.require_subcommand(1);
  std::string config_path, out, seed;
  std::vector<std::string> in;
  int runs = -1, n = -1;

  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "run configuration file")->required();
    sub->add_option("--seed", seed, "overrides run.seed");
    sub->add_option("--out", out, "overrides run.output_dir");
  };
  auto* discover = app.add_subcommand("discover", "evolve a Pareto front per variable");
  common(discover);
  auto* ensemble = app.add_subcommand("ensemble", "aggregate discovery runs into term tables");
  common(ensemble);
  ensemble->add_option("--runs", runs, "number of discovery runs (ensemble.runs)");
  ensemble->add_option("--from", in, "existing discover output directories");
  auto* bnet = app.add_subcommand("bnet", "learn the term network from an ensemble");
  common(bnet);
  bnet->add_option("--in", in, "ensemble output directory")->expected(1);
  auto* sample = app.add_subcommand("sample-solve", "sample systems and integrate them");
  common(sample);
  sample->add_option("--in", in, "bnet output directory")->expected(1);
  sample->add_option("--n", n, "number of samples (bn.samples)");
  auto* base = app.add_subcommand("baseline", "fixed-library bootstrapped baseline");
  common(base);
  base->add_option("--n-boot", n, "bootstrap trials (baseline.n_boot)");
  auto* compare = app.add_subcommand("compare", "coefficient errors against the reference");
  common(compare);
  compare->add_option("--in", in, "sample-solve or baseline output directories");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    Config cfg = Config::load(config_path);
    if (!seed.empty()) cfg.set("run.seed", seed);
    if (!out.empty()) cfg.set("run.output_dir", out);
    cfg.resolve();
    auto input = [&]() {
      return in.empty() ? cfg.str("run.output_dir") : in.front();
    };
    if (*discover) {
      cmd_discover(cfg);
    } else if (*ensemble) {
      cmd_ensemble(cfg, runs > 0 ? runs : static_cast<int>(cfg.integer("ensemble.runs")), in);
    } else if (*bnet) {
      cmd_bnet(cfg, input());
    } else if (*sample) {
      cmd_sample_solve(cfg, input(), n > 0 ? n : static_cast<int>(cfg.integer("bn.samples")));
    } else if (*base) {
      cmd_baseline(cfg, n > 0 ? n : static_cast<int>(cfg.integer("baseline.n_boot")));
    } else if (*compare) {
      cmd_compare(cfg, in.empty() ? std::vector<std::string>{cfg.str("run.output_dir")} : in);
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

}  // namespace edisc::cli
