#include "decompart/cli.hpp"

#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <json.hpp>

#include "decompart/check.hpp"
#include "decompart/diact.hpp"
#include "decompart/linear.hpp"

#ifndef DECOMPART_VERSION
#define DECOMPART_VERSION "dev"
#endif

namespace decompart {

namespace {

using nlohmann::json;

struct CommonOptions {
  std::string model_path;
  double t_end = 10.0;
  std::string grid;  // a:b:step
  double rtol = 1e-8;
  double atol = 1e-10;
  int cycles = 6;
  std::string diact_kinds = "all";
  std::vector<std::string> extra_paths;  // file or inline declaration
  std::string out_dir = "out";
  std::string format = "csv";
};

void add_common(CLI::App* cmd, CommonOptions& o, bool dynamic) {
  cmd->add_option("model", o.model_path, "model document (JSON)")->required();
  if (dynamic) {
    cmd->add_option("--t-end", o.t_end, "integration end time");
    cmd->add_option("--grid", o.grid, "sample grid a:b:step");
    cmd->add_option("--rtol", o.rtol, "relative tolerance");
    cmd->add_option("--atol", o.atol, "absolute tolerance");
  }
  cmd->add_option("--cycles", o.cycles, "default cycle unroll depth for closed paths");
  cmd->add_option("--diact", o.diact_kinds, "diact kinds: any of d,i,a,c,t or 'all'");
  cmd->add_option("--paths", o.extra_paths, "path declaration (inline) or file of declarations");
  cmd->add_option("--out", o.out_dir, "output directory");
  cmd->add_option("--format", o.format, "table format: csv or json")
      ->check(CLI::IsMember({"csv", "json"}));
}

std::vector<double> parse_grid(const std::string& spec, double t0, double t_end) {
  std::vector<double> grid;
  if (spec.empty()) {
    grid.resize(201);
    for (int i = 0; i <= 200; ++i) grid[static_cast<std::size_t>(i)] = t0 + (t_end - t0) * i / 200.0;
    return grid;
  }
  double a = 0, b = 0, step = 0;
  auto p1 = spec.find(':');
  auto p2 = spec.find(':', p1 == std::string::npos ? p1 : p1 + 1);
  if (p1 == std::string::npos || p2 == std::string::npos)
    throw SchemaError("grid must be a:b:step");
  a = std::stod(spec.substr(0, p1));
  b = std::stod(spec.substr(p1 + 1, p2 - p1 - 1));
  step = std::stod(spec.substr(p2 + 1));
  if (step <= 0 || b < a) throw SchemaError("grid must have step > 0 and b >= a");
  for (double t = a; t <= b + 0.5 * step; t += step) grid.push_back(std::min(t, b));
  if (!grid.empty() && grid.back() < b - 1e-12) grid.push_back(b);
  return grid;
}

std::vector<DiactKind> parse_kinds(const std::string& s) {
  std::vector<DiactKind> kinds;
  std::string src = s == "all" ? "diact" : s;
  for (char c : src) {
    switch (c) {
      case 'd': kinds.push_back(DiactKind::Direct); break;
      case 'i': kinds.push_back(DiactKind::Indirect); break;
      case 'a': kinds.push_back(DiactKind::Acyclic); break;
      case 'c': kinds.push_back(DiactKind::Cycling); break;
      case 't': kinds.push_back(DiactKind::Transfer); break;
      case ',': break;
      default: throw SchemaError(std::string("unknown diact kind '") + c + "'");
    }
  }
  if (kinds.empty()) throw SchemaError("no diact kinds selected");
  return kinds;
}

std::vector<PathSpec> collect_paths(const LoadedDocument& doc, const CommonOptions& o) {
  std::vector<PathSpec> specs = doc.paths;
  for (const std::string& entry : o.extra_paths) {
    if (entry.find(':') != std::string::npos && !std::filesystem::exists(entry)) {
      specs.push_back(parse_path_spec(entry));
    } else {
      std::ifstream in(entry);
      if (!in) throw IOError("cannot open path file " + entry);
      std::string line;
      while (std::getline(in, line)) {
        auto first = line.find_first_not_of(" \t\r\n");
        if (first == std::string::npos || line[first] == '#') continue;
        specs.push_back(parse_path_spec(line));
      }
    }
  }
  return specs;
}

IntegratorConfig make_config(const CommonOptions& o) {
  IntegratorConfig cfg;
  cfg.t0 = 0.0;
  cfg.t_end = o.t_end;
  cfg.rtol = o.rtol;
  cfg.atol = o.atol;
  cfg.sample_grid = parse_grid(o.grid, cfg.t0, cfg.t_end);
  if (cfg.sample_grid.empty() || cfg.sample_grid.back() < cfg.t_end)
    cfg.sample_grid.push_back(cfg.t_end);
  return cfg;
}

json config_echo(const CommonOptions& o, const IntegratorConfig& cfg) {
  json j;
  j["model"] = o.model_path;
  j["t_end"] = cfg.t_end;
  j["rtol"] = cfg.rtol;
  j["atol"] = cfg.atol;
  j["cycles"] = o.cycles;
  j["samples"] = cfg.sample_grid.size();
  return j;
}

ResultBundle make_bundle(const std::string& run, const std::string& command,
                         const CommonOptions& o, const IntegratorConfig& cfg) {
  ResultBundle b;
  b.run_name = run;
  b.command = command;
  b.engine_version = DECOMPART_VERSION;
  b.config_json = config_echo(o, cfg).dump();
  return b;
}

void emit_bundle(const ResultBundle& bundle, const CommonOptions& o) {
  std::filesystem::path dir = std::filesystem::path(o.out_dir) / bundle.run_name;
  if (o.format == "json") {
    // JSON mirrors of the CSV tables, one file per table plus the manifest
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw IOError("cannot create output directory " + dir.string());
    ResultBundle manifest_only = bundle;
    manifest_only.tables.clear();
    for (const Table& t : bundle.tables) {
      json jt;
      jt["columns"] = t.columns;
      jt["rows"] = t.rows;
      std::ofstream os(dir / (t.name + ".json"));
      if (!os) throw IOError("cannot write table " + t.name);
      os << jt.dump() << "\n";
      Table stub;
      stub.name = t.name;
      stub.columns = t.columns;
      manifest_only.tables.push_back(stub);
    }
    emit_tables(manifest_only, dir);
    return;
  }
  emit_tables(bundle, dir);
}

const CompartmentalModel& require_model(const LoadedDocument& doc) {
  if (!doc.model) throw SchemaError(doc.name + ": subcommand needs a dynamic model block");
  return *doc.model;
}

std::vector<std::string> label_columns(const LoadedDocument& doc, const std::string& prefix) {
  std::vector<std::string> cols;
  for (const auto& label : doc.compartments) cols.push_back(prefix + label);
  return cols;
}

void add_decomposition_tables(ResultBundle& bundle, const LoadedDocument& doc,
                              const CompartmentalModel& model,
                              const DecomposedTrajectory& traj) {
  std::vector<VectorXd> xs, xbars, xinits;
  std::vector<MatrixXd> X, Xinit, Tin, Tout, Tin_init, Tout_init, D;
  std::vector<VectorXd> D0;
  for (std::size_t s = 0; s < traj.times.size(); ++s) {
    const DecomposedState& st = traj.states[s];
    xs.push_back(st.x);
    xbars.push_back(st.xbar());
    xinits.push_back(st.x0_vec());
    X.push_back(st.X);
    Xinit.push_back(st.Xinit);
    SubflowMatrices sub = decomposed_snapshot(model, traj.times[s], st);
    Tin.push_back(sub.Tin);
    Tout.push_back(sub.Tout);
    Tin_init.push_back(sub.Tin_init);
    Tout_init.push_back(sub.Tout_init);
    D.push_back(sub.D);
    D0.push_back(sub.D0);
  }
  bundle.tables.push_back(
      Table::vector_series("state", label_columns(doc, "x."), traj.times, xs));
  bundle.tables.push_back(
      Table::vector_series("state_input_derived", label_columns(doc, "xbar."), traj.times, xbars));
  bundle.tables.push_back(Table::vector_series("state_initial_derived",
                                               label_columns(doc, "xinit."), traj.times, xinits));
  bundle.tables.push_back(Table::matrix_series("substorage", "X", traj.times, X));
  bundle.tables.push_back(Table::matrix_series("substorage_init", "Xinit", traj.times, Xinit));
  bundle.tables.push_back(Table::matrix_series("subthroughflow_in", "Tin", traj.times, Tin));
  bundle.tables.push_back(Table::matrix_series("subthroughflow_out", "Tout", traj.times, Tout));
  bundle.tables.push_back(
      Table::matrix_series("subthroughflow_in_init", "Tin0", traj.times, Tin_init));
  bundle.tables.push_back(
      Table::matrix_series("subthroughflow_out_init", "Tout0", traj.times, Tout_init));
  bundle.tables.push_back(Table::matrix_series("decomposition_factors", "D", traj.times, D));
  bundle.tables.push_back(
      Table::vector_series("decomposition_factors_init", label_columns(doc, "D0."), traj.times, D0));
}

int cmd_simulate(const CommonOptions& o) {
  LoadedDocument doc = load_model(o.model_path);
  const CompartmentalModel& model = require_model(doc);
  IntegratorConfig cfg = make_config(o);
  DecomposedTrajectory traj = integrate(model, cfg, IntegrationMode::Original);
  ResultBundle bundle = make_bundle(doc.name + "-simulate", "simulate", o, cfg);
  std::vector<VectorXd> xs;
  for (const auto& st : traj.states) xs.push_back(st.x);
  bundle.tables.push_back(Table::vector_series("state", label_columns(doc, "x."), traj.times, xs));
  emit_bundle(bundle, o);
  return 0;
}

int cmd_decompose(const CommonOptions& o) {
  LoadedDocument doc = load_model(o.model_path);
  const CompartmentalModel& model = require_model(doc);
  IntegratorConfig cfg = make_config(o);
  DecomposedTrajectory traj = integrate(model, cfg);
  ResultBundle bundle = make_bundle(doc.name + "-decompose", "decompose", o, cfg);
  add_decomposition_tables(bundle, doc, model, traj);
  emit_bundle(bundle, o);
  return 0;
}

int cmd_paths(const CommonOptions& o) {
  LoadedDocument doc = load_model(o.model_path);
  const CompartmentalModel& model = require_model(doc);
  IntegratorConfig cfg = make_config(o);
  std::vector<PathSpec> specs = collect_paths(doc, o);
  if (specs.empty()) throw SchemaError("no paths declared (document `paths` or --paths)");
  auto program =
      std::make_shared<PathProgram>(PathProgram::compile(model, specs, o.cycles, cfg.t0));
  DecomposedTrajectory traj =
      integrate(model, cfg, IntegrationMode::DecomposedWithPaths, program);

  ResultBundle bundle = make_bundle(doc.name + "-paths", "paths", o, cfg);
  add_decomposition_tables(bundle, doc, model, traj);

  // per path: cumulative substorage / inflow / outflow per visited node, and
  // terminal output flow where the path exits the system
  Table t;
  t.name = "transient";
  t.columns.push_back("t");
  const auto& visits = program->visits();
  for (std::size_t pi = 0; pi < program->paths().size(); ++pi) {
    const auto& cp = program->paths()[pi];
    std::vector<int> nodes;
    for (int v : cp.chain)
      if (std::find(nodes.begin(), nodes.end(), visits[static_cast<std::size_t>(v)].node) ==
          nodes.end())
        nodes.push_back(visits[static_cast<std::size_t>(v)].node);
    for (int node : nodes) {
      std::string base = "p" + std::to_string(pi + 1) + "." + doc.compartments[static_cast<std::size_t>(node)];
      t.columns.push_back(base + ".x");
      t.columns.push_back(base + ".in");
      t.columns.push_back(base + ".out");
    }
    if (cp.terminal_output) t.columns.push_back("p" + std::to_string(pi + 1) + ".terminal");
  }
  for (std::size_t s = 0; s < traj.times.size(); ++s) {
    const DecomposedState& ds = traj.states[s];
    FlowSnapshot sys = snapshot(model, traj.times[s], ds.x);
    const VectorXd& p = traj.path_states[s];
    VectorXd inflow = program->inflows(traj.times[s], sys, ds, p);
    VectorXd outflow = program->link_outflows(sys, p);
    VectorXd terminal = program->terminal_flows(traj.times[s], sys, p);
    std::vector<double> row;
    row.push_back(traj.times[s]);
    for (std::size_t pi = 0; pi < program->paths().size(); ++pi) {
      const auto& cp = program->paths()[pi];
      std::vector<int> nodes;
      for (int v : cp.chain)
        if (std::find(nodes.begin(), nodes.end(), visits[static_cast<std::size_t>(v)].node) ==
            nodes.end())
          nodes.push_back(visits[static_cast<std::size_t>(v)].node);
      for (int node : nodes) {
        double cx = 0, cin = 0, cout = 0;
        for (int v : cp.chain) {
          if (visits[static_cast<std::size_t>(v)].node != node) continue;
          cx += p[v];
          cin += inflow[v];
          cout += outflow[v];
        }
        row.push_back(cx);
        row.push_back(cin);
        row.push_back(cout);
      }
      if (cp.terminal_output) row.push_back(terminal[static_cast<int>(pi)]);
    }
    t.rows.push_back(std::move(row));
  }
  bundle.tables.push_back(std::move(t));
  for (std::size_t pi = 0; pi < program->paths().size(); ++pi)
    bundle.flags.push_back("p" + std::to_string(pi + 1) + " = " +
                           format_path_spec(specs[static_cast<std::size_t>(
                               program->paths()[pi].spec)]));
  emit_bundle(bundle, o);
  return 0;
}

int cmd_diact(const CommonOptions& o) {
  LoadedDocument doc = load_model(o.model_path);
  const CompartmentalModel& model = require_model(doc);
  IntegratorConfig cfg = make_config(o);
  DecomposedTrajectory traj = integrate(model, cfg);

  DiactOptions dopts;
  dopts.kinds = parse_kinds(o.diact_kinds);
  dopts.rtol = o.rtol;
  dopts.atol = o.atol;
  DiactSeries series = compute_diact_series(model, traj, dopts);

  ResultBundle bundle = make_bundle(doc.name + "-diact", "diact", o, cfg);
  for (std::size_t ki = 0; ki < series.kinds.size(); ++ki) {
    std::string sym(1, kDiactSymbol[static_cast<int>(series.kinds[ki])]);
    bundle.tables.push_back(
        Table::matrix_series("diact_" + sym + "_N", "N" + sym, series.times, series.N[ki]));
    const char* variant_name[4] = {"flow", "flow_simple", "flow_init", "flow_simple_init"};
    const char* variant_sym[4] = {"T", "Ts", "T0", "Ts0"};
    for (int v = 0; v < 4; ++v)
      bundle.tables.push_back(Table::matrix_series("diact_" + sym + "_" + variant_name[v],
                                                   variant_sym[v] + sym, series.times,
                                                   series.flows[ki][static_cast<std::size_t>(v)]));
    if (series.has_storages) {
      const char* sname[4] = {"storage", "storage_simple", "storage_init", "storage_simple_init"};
      const char* ssym[4] = {"X", "Xs", "X0", "Xs0"};
      for (int v = 0; v < 4; ++v)
        bundle.tables.push_back(
            Table::matrix_series("diact_" + sym + "_" + sname[v], ssym[v] + sym, series.times,
                                 series.storages[ki][static_cast<std::size_t>(v)]));
    }
  }
  for (const auto& [t, comp] : series.degeneracies)
    bundle.flags.push_back("degenerate diagonal subthroughflow at t=" + format_double(t) +
                           " compartment " + doc.compartments[static_cast<std::size_t>(comp)]);
  if (bundle.flags.size() > 200) {
    std::size_t total = bundle.flags.size();
    bundle.flags.resize(200);
    bundle.flags.push_back("... " + std::to_string(total - 200) + " more degeneracy flags");
  }
  emit_bundle(bundle, o);
  return 0;
}

int cmd_static(const CommonOptions& o) {
  LoadedDocument doc = load_model(o.model_path);
  if (!doc.static_system)
    throw SchemaError(doc.name + ": static subcommand needs a `static` block");
  const StaticSystem& s = *doc.static_system;
  IntegratorConfig cfg;  // unused; config echo only
  cfg.t_end = 0.0;
  cfg.sample_grid = {0.0};
  ResultBundle bundle = make_bundle(doc.name + "-static", "static", o, cfg);

  StaticDecomposition dec = static_decompose(s);
  bundle.tables.push_back(Table::vector_series(
      "throughflow", label_columns(doc, "tau."), {0.0}, {s.tau}));
  bundle.tables.push_back(Table::single_matrix("subthroughflow_matrix", "T", 0.0, dec.T));
  if (dec.X)
    bundle.tables.push_back(Table::single_matrix("substorage_matrix", "X", 0.0, *dec.X));
  for (const std::string& note : dec.notices) bundle.flags.push_back(note);

  if (s.x) {
    ResidenceReport rr = residence_times(s);
    bundle.tables.push_back(
        Table::vector_series("residence_times", label_columns(doc, "r."), {0.0}, {rr.r}));
    bundle.flags.push_back("residence times derived from supplied storages");
  }

  StaticDiact d = static_diact(s);
  for (DiactKind kind : parse_kinds(o.diact_kinds)) {
    int k = static_cast<int>(kind);
    std::string sym(1, kDiactSymbol[k]);
    bundle.tables.push_back(Table::single_matrix("static_diact_" + sym + "_N", "N" + sym, 0.0, d.N[k]));
    bundle.tables.push_back(
        Table::single_matrix("static_diact_" + sym + "_flow", "T" + sym, 0.0, d.T[k]));
    bundle.tables.push_back(Table::single_matrix("static_diact_" + sym + "_flow_simple",
                                                 "Ts" + sym, 0.0, d.Tsimple[k]));
    if (d.storages_available) {
      bundle.tables.push_back(
          Table::single_matrix("static_diact_" + sym + "_S", "S" + sym, 0.0, d.S[k]));
      bundle.tables.push_back(
          Table::single_matrix("static_diact_" + sym + "_storage", "X" + sym, 0.0, d.X[k]));
      bundle.tables.push_back(Table::single_matrix("static_diact_" + sym + "_storage_simple",
                                                   "Xs" + sym, 0.0, d.Xsimple[k]));
    }
  }
  if (!s.zero_input.empty()) {
    std::string cols;
    for (int k : s.zero_input) cols += (cols.empty() ? "" : ", ") + doc.compartments[static_cast<std::size_t>(k)];
    bundle.flags.push_back("zero-input compartments: " + cols);
  }
  if (!s.balanced)
    bundle.flags.push_back("flow dataset is not balanced: relative residual " +
                           format_double(s.balance_residual_rel));
  emit_bundle(bundle, o);
  return 0;
}

int cmd_linear(const CommonOptions& o) {
  LoadedDocument doc = load_model(o.model_path);
  const CompartmentalModel& model = require_model(doc);
  if (!model.is_linear())
    throw SchemaError(doc.name + ": model is not linear; use decompose instead");
  LinearModel lm = LinearModel::from_model(model);
  IntegratorConfig cfg = make_config(o);
  LinearSolution sol = solve_linear(lm, cfg.sample_grid, cfg.t0);

  ResultBundle bundle = make_bundle(doc.name + "-linear", "linear", o, cfg);
  bundle.tables.push_back(Table::vector_series("state", label_columns(doc, "x."), sol.times, sol.x));
  bundle.tables.push_back(Table::matrix_series("substorage", "X", sol.times, sol.X));
  bundle.tables.push_back(Table::matrix_series("substorage_init", "Xinit", sol.times, sol.Xinit));
  if ((model.x0().array() > 0.0).all()) {
    std::vector<MatrixXd> V;
    VectorXd inv_x0 = model.x0().cwiseInverse();
    for (const MatrixXd& Xi : sol.Xinit) V.push_back(Xi * inv_x0.asDiagonal());
    bundle.tables.push_back(Table::matrix_series("fundamental", "V", sol.times, V));
  }
  emit_bundle(bundle, o);
  return 0;
}

int cmd_check(const CommonOptions& o, double t_end_given) {
  LoadedDocument doc = load_model(o.model_path);
  CheckOptions copts;
  copts.t_end = t_end_given;
  copts.rtol = o.rtol;
  copts.atol = o.atol;
  copts.cycles = o.cycles;
  std::vector<CheckResult> results = run_model_checks(doc, copts);
  for (const auto& r : results) {
    std::cout << (r.pass ? "PASS " : "FAIL ") << r.name;
    if (!r.detail.empty()) std::cout << ": " << r.detail;
    std::cout << "\n";
  }
  return all_pass(results) ? 0 : 4;
}

}  // namespace

int run_command(const std::vector<std::string>& argv) {
  CLI::App app{"decompart: decomposition engine for dynamic compartmental systems"};
  app.set_version_flag("--version", std::string(DECOMPART_VERSION));
  app.require_subcommand(1);

  CommonOptions opts[7];
  CLI::App* simulate = app.add_subcommand("simulate", "integrate the original system");
  add_common(simulate, opts[0], true);
  CLI::App* decompose = app.add_subcommand("decompose", "integrate the decomposed system");
  add_common(decompose, opts[1], true);
  CLI::App* paths = app.add_subcommand("paths", "integrate transient subflows along paths");
  add_common(paths, opts[2], true);
  CLI::App* diact = app.add_subcommand("diact", "diact flow and storage matrices along a run");
  add_common(diact, opts[3], true);
  CLI::App* stat = app.add_subcommand("static", "steady-state decomposition and diact analysis");
  add_common(stat, opts[4], false);
  CLI::App* linear = app.add_subcommand("linear", "closed-form solution for linear models");
  add_common(linear, opts[5], true);
  CLI::App* check = app.add_subcommand("check", "run the invariant suites");
  add_common(check, opts[6], true);
  opts[6].t_end = 5.0;

  std::vector<std::string> args(argv.rbegin(), argv.rend());
  try {
    app.parse(args);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    if (simulate->parsed()) return cmd_simulate(opts[0]);
    if (decompose->parsed()) return cmd_decompose(opts[1]);
    if (paths->parsed()) return cmd_paths(opts[2]);
    if (diact->parsed()) return cmd_diact(opts[3]);
    if (stat->parsed()) return cmd_static(opts[4]);
    if (linear->parsed()) return cmd_linear(opts[5]);
    if (check->parsed()) return cmd_check(opts[6], opts[6].t_end);
  } catch (const SchemaError& e) {
    std::cerr << "model error: " << e.what() << "\n";
    return 2;
  } catch (const UnknownLabel& e) {
    std::cerr << "model error: " << e.what() << "\n";
    return 2;
  } catch (const IOError& e) {
    std::cerr << "model error: " << e.what() << "\n";
    return 2;
  } catch (const Error& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 3;
  }
  return 1;
}

}  // namespace decompart
