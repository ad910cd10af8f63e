#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <iostream>
#include <set>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "anisoflow/anisotropy.hpp"
#include "anisoflow/curve.hpp"
#include "anisoflow/dewetting.hpp"
#include "anisoflow/diagnostics.hpp"
#include "anisoflow/error.hpp"
#include "anisoflow/format.hpp"
#include "anisoflow/io.hpp"
#include "anisoflow/solver.hpp"
#include "anisoflow/stabilizer.hpp"
#include "config.hpp"

namespace anisoflow::cli {

namespace fs = std::filesystem;

enum ExitCode : int { kOk = 0, kRunFailure = 1, kConfigError = 2 };

struct RunOptions {
  std::string config;
  std::string out;
  double snapshot_every = -1.0;  // <0: take the config value
  int workers = 0;               // 0: take the config value
};

namespace detail {

inline std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

inline json table_json(const KSource& k) {
  if (!k.has_table()) return nullptr;
  const auto& t = k.stabilizer_table();
  return {{"theta", t.thetas()}, {"k0", t.values()}, {"factor", k.factor()}};
}

/// Step indices at which snapshots are written.
inline std::set<long> snapshot_steps(const ExperimentConfig& c, long steps) {
  std::set<long> out;
  auto add = [&](double t) {
    if (t < 0.0 || t > c.t_end + 1e-9 * c.tau) return;
    const long s = static_cast<long>(std::ceil(t / c.tau - 1e-9));
    out.insert(std::clamp(s, 0L, steps));
  };
  for (double t : c.output.snapshot_times) add(t);
  if (c.output.snapshot_every > 0.0) {
    const long n = static_cast<long>(std::floor(c.t_end / c.output.snapshot_every + 1e-9));
    for (long i = 0; i <= n; ++i) add(static_cast<double>(i) * c.output.snapshot_every);
  }
  return out;
}

inline void write_record(const fs::path& path, const RunRecord& rec, int every) {
  auto os = io::open_out(path);
  os << io::record_header(rec) << '\n';
  for (std::size_t i = 0; i < rec.rows.size(); ++i)
    if (i % static_cast<std::size_t>(every) == 0 || i + 1 == rec.rows.size())
      io::write_record_row(os, rec.rows[i]);
}

inline void write_manifest(const fs::path& path, const std::string& command,
                           const ExperimentConfig& c, const KSource& k, const json& extra) {
  json m;
  m["manifest_version"] = 1;
  m["command"] = command;
  m["config"] = to_json(c);
  m["topology"] = to_string(c.topology());
  m["anisotropy"] = c.anisotropy.describe();
  m["shape"] = describe(c.shape);
  m["k_source"] = k.describe();
  m["k0_table"] = table_json(k);
  for (auto it = extra.begin(); it != extra.end(); ++it) m[it.key()] = it.value();
  m["generated_at"] = utc_timestamp();
  auto os = io::open_out(path);
  os << m.dump(2) << '\n';
}

/// Inline JSON, a file holding an anisotropy object, or a full config file.
inline Anisotropy anisotropy_from_arg(const std::string& arg) {
  json j;
  const auto first = arg.find_first_not_of(" \t\n");
  if (first != std::string::npos && arg[first] == '{') {
    try {
      j = json::parse(arg);
    } catch (const json::parse_error& e) {
      throw ConfigError(std::string("--gamma: ") + e.what());
    }
  } else {
    j = read_json(arg);
    if (j.is_object() && j.contains("manifest_version") && j.contains("config")) j = j.at("config");
  }
  if (j.is_object() && j.contains("anisotropy")) j = j.at("anisotropy");
  return parse_anisotropy(j);
}

inline json report_json(const StabilityReport& r) {
  json crit = json::array();
  for (const auto& c : r.critical_angles)
    crit.push_back({{"theta", c.theta}, {"margin", c.margin}, {"abs_dgamma", c.abs_dgamma}});
  return {{"satisfied", r.satisfied},
          {"min_margin", r.min_margin},
          {"critical_angles", crit},
          {"violation_count", r.violations.size()},
          {"violations", r.violations}};
}

}  // namespace detail

/// simulate / dewet.
inline int cmd_run(const std::string& command, const RunOptions& opt, std::ostream& out,
                   std::ostream& err) {
  ExperimentConfig c = load_config(opt.config);
  if (!opt.out.empty()) c.output.directory = opt.out;
  if (opt.snapshot_every >= 0.0) c.output.snapshot_every = opt.snapshot_every;
  const bool open = c.topology() == Topology::OpenOnSubstrate;
  if (command == "simulate" && open)
    throw ConfigError("simulate needs a closed shape; use dewet for open shapes");
  if (command == "dewet" && !open) throw ConfigError("dewet needs an open shape");

  PolygonalCurve c0;
  try {
    c0 = make_shape(c.shape, c.n_vertices);
  } catch (const ConstructionError& e) {
    throw ConfigError(std::string("shape: ") + e.what());
  }

  const fs::path dir = c.output.directory;
  KSource k;
  try {
    k = make_k_source(c);
  } catch (const DivergenceError& e) {
    err << "error: " << e.what() << '\n';
    return kRunFailure;
  }
  const RunConfig rc = run_config(c, k);
  SolverState state = make_state(std::move(c0), c.anisotropy, rc);
  const long steps = anisoflow::detail::step_count(0.0, c.t_end, c.tau);
  const std::set<long> snaps = detail::snapshot_steps(c, steps);

  json snapshot_files = json::array();
  auto snapshot = [&](const SolverState& s) {
    if (!snaps.count(s.step)) return;
    const std::string name = "t_" + format_double(s.time) + ".csv";
    io::write_curve_csv(dir / "snapshots" / name, s.curve);
    snapshot_files.push_back("snapshots/" + name);
  };
  snapshot(state);

  const std::vector<StepObserver> observers{
      [&](const SolverState& s, const StepStats&) { snapshot(s); }};
  RunRecord rec;
  json extra;
  int status = kOk;
  try {
    rec = open ? evolve_open(state, rc, c.anisotropy, *c.dewetting, observers)
               : evolve(state, rc, c.anisotropy, observers);
    extra["status"] = "ok";
  } catch (const RunFailure& e) {
    rec = e.partial_record();
    extra["status"] = "failed";
    extra["error"] = e.what();
    err << "error: run failed at t = " << format_double(rec.rows.empty() ? 0.0 : rec.rows.back().t)
        << ": " << e.what() << '\n';
    status = kRunFailure;
  }
  extra["steps"] = rec.rows.empty() ? 0 : rec.rows.size() - 1;
  extra["snapshots"] = snapshot_files;
  detail::write_record(dir / "record.csv", rec, c.output.csv_every);
  if (k.has_table()) io::write_table_csv(dir / "k0_table.csv", k.stabilizer_table());
  detail::write_manifest(dir / "manifest.json", command, c, k, extra);

  if (status == kOk && !rec.rows.empty()) {
    const auto ind = normalized_indicators(rec);
    double max_loss = 0.0;
    for (const auto& r : ind) max_loss = std::max(max_loss, std::abs(r.area_loss));
    out << command << ": " << rec.rows.size() - 1 << " steps to t = " << format_double(rec.rows.back().t)
        << ", max |area loss| = " << format_double(max_loss)
        << ", W/W0 = " << format_double(ind.back().energy_ratio)
        << ", mesh ratio = " << format_double(rec.rows.back().mesh_ratio) << '\n';
  }
  return status;
}

inline int cmd_k0(const std::string& gamma, const std::string& config, int n, int phi,
                  const std::string& out_path, std::ostream& out, std::ostream& err) {
  Anisotropy a;
  if (!gamma.empty()) {
    a = detail::anisotropy_from_arg(gamma);
  } else {
    const ExperimentConfig c = load_config(config);
    a = c.anisotropy;
    if (n <= 0) n = c.k.n_theta_samples;
    if (phi <= 0) phi = c.k.phi_samples;
  }
  if (n <= 0) n = 20;
  if (phi <= 0) phi = 2001;
  if (n < 2) throw ConfigError("--n must be >= 2");
  StabilizerTable t;
  try {
    t = build_table(a, n, phi);
  } catch (const DivergenceError& e) {
    err << "error: " << e.what() << '\n';
    return kRunFailure;
  }
  if (out_path.empty() || out_path == "-") io::write_table_csv(out, t);
  else io::write_table_csv(fs::path(out_path), t);
  return kOk;
}

inline int cmd_check_gamma(const std::string& gamma, const std::string& config, int n_grid,
                           std::ostream& out) {
  const Anisotropy a = !gamma.empty() ? detail::anisotropy_from_arg(gamma) : load_config(config).anisotropy;
  if (n_grid < 360) throw ConfigError("--n-grid must be >= 360");
  const StabilityReport r = check_energy_stable(a, n_grid);
  out << detail::report_json(r).dump(2) << '\n';
  return r.satisfied ? kOk : kRunFailure;
}

inline int cmd_converge(const RunOptions& opt, std::ostream& out, std::ostream& err) {
  ExperimentConfig c = load_config(opt.config);
  if (!opt.out.empty()) c.output.directory = opt.out;
  if (!c.convergence) throw ConfigError("converge: config has no 'convergence' block");
  const ConvergenceBlock& b = *c.convergence;

  ConvergenceSetup s;
  s.anisotropy = c.anisotropy;
  s.shape = c.shape;
  s.h_list = b.h_list;
  s.t_checkpoints = b.t_checkpoints;
  s.ref_h = b.ref_h;
  s.ref_tau = b.ref_tau;
  s.dewetting = c.dewetting;
  s.newton_tol = c.newton_tol;
  s.newton_max_iters = c.newton_max_iters;
  s.workers = opt.workers > 0 ? opt.workers : b.workers;
  const fs::path dir = c.output.directory;
  if (const char* env = std::getenv("ANISOFLOW_CACHE"); env && *env) s.cache_dir = env;
  else if (!b.cache_dir.empty()) s.cache_dir = b.cache_dir;
  else s.cache_dir = dir / "reference_cache";

  try {
    s.k_source = make_k_source(c);
  } catch (const DivergenceError& e) {
    err << "error: " << e.what() << '\n';
    return kRunFailure;
  }

  std::vector<ConvergenceRow> rows;
  try {
    rows = convergence_study(s);
  } catch (const ArgumentError& e) {
    throw ConfigError(std::string("convergence: ") + e.what());
  } catch (const Error& e) {
    err << "error: convergence study failed: " << e.what() << '\n';
    return kRunFailure;
  }

  auto emit = [&](std::ostream& os) {
    os << "h,t,error,order\n";
    for (const auto& r : rows)
      os << format_double(r.h) << ',' << format_double(r.t) << ',' << format_double(r.error) << ','
         << (std::isnan(r.order) ? std::string() : format_double(r.order)) << '\n';
  };
  {
    auto os = io::open_out(dir / "convergence.csv");
    emit(os);
  }
  emit(out);
  json extra;
  extra["status"] = "ok";
  extra["cache_dir"] = s.cache_dir.string();
  detail::write_manifest(dir / "manifest.json", "converge", c, s.k_source, extra);
  return kOk;
}

inline int cmd_distance(const std::string& a, const std::string& b, const std::string& topology,
                        std::ostream& out, std::ostream& err) {
  Topology t;
  if (topology == "closed") t = Topology::Closed;
  else if (topology == "open") t = Topology::OpenOnSubstrate;
  else throw ConfigError("--topology must be 'closed' or 'open'");
  PolygonalCurve c1, c2;
  try {
    c1 = io::read_curve_csv(a, t);
    c2 = io::read_curve_csv(b, t);
  } catch (const ConstructionError& e) {
    throw ConfigError(std::string("curve input: ") + e.what());
  } catch (const DegenerateMeshError& e) {
    throw ConfigError(std::string("curve input: ") + e.what());
  }
  try {
    out << format_double(manifold_distance(c1, c2)) << '\n';
  } catch (const GeometryError& e) {
    err << "error: " << e.what() << '\n';
    return kRunFailure;
  }
  return kOk;
}

/// Entry point; args exclude the program name.
inline int run(std::vector<std::string> args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Structure-preserving parametric FEM for anisotropic surface diffusion and dewetting",
               "anisoflow"};
  app.require_subcommand(1);

  RunOptions sim_opt, dew_opt, conv_opt;
  auto add_run = [&app](const char* name, const char* help, RunOptions& o) {
    auto* sub = app.add_subcommand(name, help);
    sub->add_option("--config", o.config, "experiment config (JSON) or run manifest")->required();
    sub->add_option("--out", o.out, "output directory (overrides output.directory)");
    sub->add_option("--snapshot-every", o.snapshot_every, "snapshot interval in time units")
        ->check(CLI::NonNegativeNumber);
    return sub;
  };
  auto* sim = add_run("simulate", "evolve a closed curve", sim_opt);
  auto* dew = add_run("dewet", "evolve an open curve on the substrate", dew_opt);

  std::string k0_gamma, k0_config, k0_out;
  int k0_n = 0, k0_phi = 0;
  auto* k0 = app.add_subcommand("k0", "tabulate the minimal stabilizing function");
  auto* k0g = k0->add_option("--gamma", k0_gamma, "anisotropy as inline JSON or a JSON file");
  auto* k0c = k0->add_option("--config", k0_config, "take the anisotropy from a config");
  k0g->excludes(k0c);
  k0->add_option("--n", k0_n, "number of table angles (default 20)");
  k0->add_option("--phi-samples", k0_phi, "phi grid size (default 2001)");
  k0->add_option("--out", k0_out, "output CSV (default stdout)");

  std::string cg_gamma, cg_config;
  int cg_grid = 3600;
  auto* cg = app.add_subcommand("check-gamma", "check the energy-stable condition");
  auto* cgg = cg->add_option("--gamma", cg_gamma, "anisotropy as inline JSON or a JSON file");
  auto* cgc = cg->add_option("--config", cg_config, "take the anisotropy from a config");
  cgg->excludes(cgc);
  cg->add_option("--n-grid", cg_grid, "scan grid size");

  auto* conv = app.add_subcommand("converge", "spatial convergence study");
  conv->add_option("--config", conv_opt.config, "experiment config with a convergence block")->required();
  conv->add_option("--out", conv_opt.out, "output directory");
  conv->add_option("--workers", conv_opt.workers, "concurrent runs")->check(CLI::PositiveNumber);

  std::string d_a, d_b, d_topo = "closed";
  auto* dist = app.add_subcommand("distance", "manifold distance between two curve CSVs");
  dist->add_option("first", d_a, "curve CSV")->required();
  dist->add_option("second", d_b, "curve CSV")->required();
  dist->add_option("--topology", d_topo, "closed or open");

  std::reverse(args.begin(), args.end());
  try {
    app.parse(std::move(args));
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kConfigError;
  }

  try {
    if (*sim) return cmd_run("simulate", sim_opt, out, err);
    if (*dew) return cmd_run("dewet", dew_opt, out, err);
    if (*k0) {
      if (k0_gamma.empty() && k0_config.empty()) throw ConfigError("k0: give --gamma or --config");
      return cmd_k0(k0_gamma, k0_config, k0_n, k0_phi, k0_out, out, err);
    }
    if (*cg) {
      if (cg_gamma.empty() && cg_config.empty()) throw ConfigError("check-gamma: give --gamma or --config");
      return cmd_check_gamma(cg_gamma, cg_config, cg_grid, out);
    }
    if (*conv) return cmd_converge(conv_opt, out, err);
    if (*dist) return cmd_distance(d_a, d_b, d_topo, out, err);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kConfigError;
  } catch (const io::IoError& e) {
    err << "input error: " << e.what() << '\n';
    return kConfigError;
  } catch (const json::exception& e) {
    err << "config error: " << e.what() << '\n';
    return kConfigError;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return kRunFailure;
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << '\n';
    return kRunFailure;
  }
  return kConfigError;
}

}  // namespace anisoflow::cli
