#pragma once

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "anisoflow/anisotropy.hpp"
#include "anisoflow/curve.hpp"
#include "anisoflow/error.hpp"
#include "anisoflow/scheme.hpp"
#include "anisoflow/stabilizer.hpp"

namespace anisoflow::cli {

using nlohmann::json;

struct KBlock {
  enum class Source { K0, Zero, Scaled };
  Source source = Source::K0;
  double factor = 1.0;
  int n_theta_samples = 20;
  int phi_samples = 2001;
};

struct OutputBlock {
  std::string directory = "out";
  std::vector<double> snapshot_times;
  double snapshot_every = 0.0;  // 0: off
  int csv_every = 1;            // record every k-th step (the last one always)
};

struct ConvergenceBlock {
  std::vector<double> h_list;
  std::vector<double> t_checkpoints;
  double ref_h = 1.0 / 128.0;
  double ref_tau = 1.0 / 1024.0;
  std::string cache_dir;  // empty: <output>/reference_cache
  int workers = 1;
};

struct ExperimentConfig {
  json anisotropy_spec;
  Anisotropy anisotropy;
  json shape_spec;
  ShapeSpec shape;
  int n_vertices = 128;
  double tau = 16.0 / (128.0 * 128.0);
  bool tau_is_default = true;
  double t_end = 1.0;
  double newton_tol = 1e-12;
  int newton_max_iters = 50;
  KBlock k;
  std::optional<DewettingParams> dewetting;
  OutputBlock output;
  std::optional<ConvergenceBlock> convergence;

  Topology topology() const { return shape_topology(shape); }
};

namespace detail {

inline void require_object(const json& j, const std::string& what) {
  if (!j.is_object()) throw ConfigError(what + ": expected an object");
}

inline void reject_unknown(const json& j, const std::string& what,
                           std::initializer_list<const char*> allowed) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || it.key() == a;
    if (!ok) throw ConfigError(what + ": unknown key '" + it.key() + "'");
  }
}

inline std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t");
  const auto e = s.find_last_not_of(" \t");
  return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
}

inline double parse_plain(const std::string& s, const std::string& what) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    throw ConfigError(what + ": not a number: '" + s + "'");
  }
  if (used != s.size()) throw ConfigError(what + ": not a number: '" + s + "'");
  return v;
}

}  // namespace detail

/// A JSON number or a string: decimal, or "b^e" (exact for b = 2).
inline double parse_number(const json& j, const std::string& what) {
  if (j.is_number()) return j.get<double>();
  if (!j.is_string()) throw ConfigError(what + ": expected a number");
  const std::string s = detail::trim(j.get<std::string>());
  const auto caret = s.find('^');
  if (caret == std::string::npos) return detail::parse_plain(s, what);
  const double base = detail::parse_plain(detail::trim(s.substr(0, caret)), what);
  const double ex = detail::parse_plain(detail::trim(s.substr(caret + 1)), what);
  if (base == 2.0 && ex == std::floor(ex) && std::abs(ex) < 1000)
    return std::ldexp(1.0, static_cast<int>(ex));
  return std::pow(base, ex);
}

inline int parse_int(const json& j, const std::string& what) {
  const double v = parse_number(j, what);
  if (v != std::floor(v) || std::abs(v) > 1e9) throw ConfigError(what + ": expected an integer");
  return static_cast<int>(v);
}

inline double get_number(const json& j, const char* key, double fallback, const std::string& what) {
  return j.contains(key) ? parse_number(j.at(key), what + "." + key) : fallback;
}

inline Anisotropy parse_anisotropy(const json& j) {
  detail::require_object(j, "anisotropy");
  if (!j.contains("kind") || !j.at("kind").is_string())
    throw ConfigError("anisotropy: missing string field 'kind'");
  const std::string kind = j.at("kind").get<std::string>();
  try {
    if (kind == "isotropic") {
      detail::reject_unknown(j, "anisotropy", {"kind"});
      return Anisotropy::isotropic();
    }
    if (kind == "mfold") {
      detail::reject_unknown(j, "anisotropy", {"kind", "m", "beta", "theta0"});
      if (!j.contains("m") || !j.contains("beta"))
        throw ConfigError("anisotropy mfold: 'm' and 'beta' are required");
      return Anisotropy::mfold(parse_int(j.at("m"), "anisotropy.m"),
                               parse_number(j.at("beta"), "anisotropy.beta"),
                               get_number(j, "theta0", 0.0, "anisotropy"));
    }
    if (kind == "ellipsoidal") {
      detail::reject_unknown(j, "anisotropy", {"kind", "a", "b"});
      if (!j.contains("a") || !j.contains("b"))
        throw ConfigError("anisotropy ellipsoidal: 'a' and 'b' are required");
      return Anisotropy::ellipsoidal(parse_number(j.at("a"), "anisotropy.a"),
                                     parse_number(j.at("b"), "anisotropy.b"));
    }
    if (kind == "riemannian") {
      detail::reject_unknown(j, "anisotropy", {"kind", "matrices"});
      if (!j.contains("matrices") || !j.at("matrices").is_array())
        throw ConfigError("anisotropy riemannian: 'matrices' must be a list");
      std::vector<Eigen::Matrix2d> mats;
      for (const auto& m : j.at("matrices")) {
        // Row-major: [g11, g12, g21, g22] or [[g11, g12], [g21, g22]].
        std::vector<double> v;
        if (m.is_array() && m.size() == 2 && m[0].is_array()) {
          for (const auto& row : m) {
            if (!row.is_array() || row.size() != 2)
              throw ConfigError("anisotropy riemannian: rows must have 2 entries");
            for (const auto& e : row) v.push_back(parse_number(e, "anisotropy.matrices"));
          }
        } else if (m.is_array() && m.size() == 4) {
          for (const auto& e : m) v.push_back(parse_number(e, "anisotropy.matrices"));
        } else {
          throw ConfigError("anisotropy riemannian: each matrix needs 4 entries");
        }
        Eigen::Matrix2d g;
        g << v[0], v[1], v[2], v[3];
        mats.push_back(g);
      }
      return Anisotropy::riemannian_sum(std::move(mats));
    }
    if (kind == "piecewise") {
      detail::reject_unknown(j, "anisotropy", {"kind"});
      return Anisotropy::piecewise_sgn();
    }
  } catch (const ConstructionError& e) {
    throw ConfigError(std::string("anisotropy: ") + e.what());
  }
  if (kind == "custom") throw ConfigError("anisotropy: custom evaluators cannot be loaded from a config");
  throw ConfigError("anisotropy: unknown kind '" + kind + "'");
}

inline ShapeSpec parse_shape(const json& j) {
  detail::require_object(j, "shape");
  if (!j.contains("kind") || !j.at("kind").is_string())
    throw ConfigError("shape: missing string field 'kind'");
  const std::string kind = j.at("kind").get<std::string>();
  if (kind == "ellipse") {
    detail::reject_unknown(j, "shape", {"kind", "rx", "ry", "rotation"});
    return shapes::Ellipse{get_number(j, "rx", 2.0, "shape"), get_number(j, "ry", 0.5, "shape"),
                           get_number(j, "rotation", 0.0, "shape")};
  }
  if (kind == "half_ellipse") {
    detail::reject_unknown(j, "shape", {"kind", "rx", "ry"});
    return shapes::HalfEllipse{get_number(j, "rx", 2.0, "shape"), get_number(j, "ry", 0.5, "shape")};
  }
  if (kind == "open_rectangle") {
    detail::reject_unknown(j, "shape", {"kind", "w", "h"});
    return shapes::OpenRectangle{get_number(j, "w", 4.0, "shape"), get_number(j, "h", 1.0, "shape")};
  }
  if (kind == "star") {
    detail::reject_unknown(j, "shape", {"kind"});
    return shapes::FourFoldStar{};
  }
  throw ConfigError("shape: unknown kind '" + kind + "'");
}

inline std::vector<double> parse_number_list(const json& j, const std::string& what) {
  if (!j.is_array()) throw ConfigError(what + ": expected a list");
  std::vector<double> out;
  for (const auto& e : j) out.push_back(parse_number(e, what));
  return out;
}

inline ExperimentConfig parse_config(const json& root) {
  detail::require_object(root, "config");
  detail::reject_unknown(root, "config",
                         {"anisotropy", "shape", "solver", "k", "dewetting", "output", "convergence"});
  ExperimentConfig c;
  if (!root.contains("anisotropy")) throw ConfigError("config: 'anisotropy' block is required");
  if (!root.contains("shape")) throw ConfigError("config: 'shape' block is required");
  c.anisotropy_spec = root.at("anisotropy");
  c.anisotropy = parse_anisotropy(c.anisotropy_spec);
  c.shape_spec = root.at("shape");
  c.shape = parse_shape(c.shape_spec);

  const json solver = root.value("solver", json::object());
  detail::require_object(solver, "solver");
  detail::reject_unknown(solver, "solver",
                         {"n_vertices", "h", "tau", "t_end", "newton_tol", "newton_max_iters"});
  if (solver.contains("n_vertices") && solver.contains("h"))
    throw ConfigError("solver: give either 'n_vertices' or 'h', not both");
  if (solver.contains("h")) {
    const double h = parse_number(solver.at("h"), "solver.h");
    if (!(h > 0.0)) throw ConfigError("solver.h must be > 0");
    const double n = 1.0 / h;
    if (std::abs(n - std::round(n)) > 1e-9 * n) throw ConfigError("solver.h must be 1/N for integer N");
    c.n_vertices = static_cast<int>(std::lround(n));
  } else if (solver.contains("n_vertices")) {
    c.n_vertices = parse_int(solver.at("n_vertices"), "solver.n_vertices");
  }
  if (c.n_vertices < 3) throw ConfigError("solver: need at least 3 segments");
  const double h = 1.0 / c.n_vertices;
  c.tau = 16.0 * h * h;
  if (solver.contains("tau")) {
    const json& t = solver.at("tau");
    if (!(t.is_string() && detail::trim(t.get<std::string>()) == "16h2")) {
      c.tau = parse_number(t, "solver.tau");
      c.tau_is_default = false;
    }
  }
  if (!(c.tau > 0.0)) throw ConfigError("solver.tau must be > 0");
  c.t_end = get_number(solver, "t_end", 1.0, "solver");
  if (!(c.t_end >= 0.0)) throw ConfigError("solver.t_end must be >= 0");
  c.newton_tol = get_number(solver, "newton_tol", 1e-12, "solver");
  if (!(c.newton_tol > 0.0)) throw ConfigError("solver.newton_tol must be > 0");
  if (solver.contains("newton_max_iters"))
    c.newton_max_iters = parse_int(solver.at("newton_max_iters"), "solver.newton_max_iters");
  if (c.newton_max_iters < 1) throw ConfigError("solver.newton_max_iters must be >= 1");

  const json k = root.value("k", json::object());
  detail::require_object(k, "k");
  detail::reject_unknown(k, "k", {"source", "n_theta_samples", "phi_samples"});
  if (k.contains("source")) {
    const json& s = k.at("source");
    if (s.is_string() && s.get<std::string>() == "k0") {
      c.k.source = KBlock::Source::K0;
    } else if (s.is_string() && s.get<std::string>() == "zero") {
      c.k.source = KBlock::Source::Zero;
    } else if (s.is_object() && s.size() == 1 && s.contains("k0_scaled")) {
      c.k.source = KBlock::Source::Scaled;
      c.k.factor = parse_number(s.at("k0_scaled"), "k.source.k0_scaled");
      if (!(c.k.factor >= 1.0)) throw ConfigError("k.source.k0_scaled must be >= 1");
    } else {
      throw ConfigError("k.source: expected \"k0\", \"zero\" or {\"k0_scaled\": factor}");
    }
  }
  if (k.contains("n_theta_samples"))
    c.k.n_theta_samples = parse_int(k.at("n_theta_samples"), "k.n_theta_samples");
  if (c.k.n_theta_samples < 2) throw ConfigError("k.n_theta_samples must be >= 2");
  if (k.contains("phi_samples")) c.k.phi_samples = parse_int(k.at("phi_samples"), "k.phi_samples");
  if (c.k.phi_samples < 2) throw ConfigError("k.phi_samples must be >= 2");

  if (root.contains("dewetting")) {
    const json& d = root.at("dewetting");
    detail::require_object(d, "dewetting");
    detail::reject_unknown(d, "dewetting", {"sigma", "eta"});
    if (!d.contains("sigma")) throw ConfigError("dewetting: 'sigma' is required");
    DewettingParams p;
    p.sigma = parse_number(d.at("sigma"), "dewetting.sigma");
    p.eta = get_number(d, "eta", 100.0, "dewetting");
    if (!(std::abs(p.sigma) < 1.0)) throw ConfigError("dewetting.sigma must lie in (-1, 1)");
    if (!(p.eta > 0.0)) throw ConfigError("dewetting.eta must be > 0");
    c.dewetting = p;
  }
  const bool open = c.topology() == Topology::OpenOnSubstrate;
  if (open && !c.dewetting) throw ConfigError("config: open shapes need a 'dewetting' block");
  if (!open && c.dewetting) throw ConfigError("config: 'dewetting' block given for a closed shape");

  const json out = root.value("output", json::object());
  detail::require_object(out, "output");
  detail::reject_unknown(out, "output", {"directory", "snapshot_times", "snapshot_every", "csv_every"});
  if (out.contains("directory")) {
    if (!out.at("directory").is_string()) throw ConfigError("output.directory must be a string");
    c.output.directory = out.at("directory").get<std::string>();
  }
  if (out.contains("snapshot_times"))
    c.output.snapshot_times = parse_number_list(out.at("snapshot_times"), "output.snapshot_times");
  c.output.snapshot_every = get_number(out, "snapshot_every", 0.0, "output");
  if (c.output.snapshot_every < 0.0) throw ConfigError("output.snapshot_every must be >= 0");
  if (out.contains("csv_every")) c.output.csv_every = parse_int(out.at("csv_every"), "output.csv_every");
  if (c.output.csv_every < 1) throw ConfigError("output.csv_every must be >= 1");

  if (root.contains("convergence")) {
    const json& v = root.at("convergence");
    detail::require_object(v, "convergence");
    detail::reject_unknown(v, "convergence",
                           {"h_list", "t_checkpoints", "ref_h", "ref_tau", "cache_dir", "workers"});
    ConvergenceBlock b;
    if (!v.contains("h_list") || !v.contains("t_checkpoints"))
      throw ConfigError("convergence: 'h_list' and 't_checkpoints' are required");
    b.h_list = parse_number_list(v.at("h_list"), "convergence.h_list");
    b.t_checkpoints = parse_number_list(v.at("t_checkpoints"), "convergence.t_checkpoints");
    b.ref_h = get_number(v, "ref_h", b.ref_h, "convergence");
    b.ref_tau = get_number(v, "ref_tau", b.ref_tau, "convergence");
    if (v.contains("cache_dir")) {
      if (!v.at("cache_dir").is_string()) throw ConfigError("convergence.cache_dir must be a string");
      b.cache_dir = v.at("cache_dir").get<std::string>();
    }
    if (v.contains("workers")) b.workers = parse_int(v.at("workers"), "convergence.workers");
    if (b.workers < 1) throw ConfigError("convergence.workers must be >= 1");
    c.convergence = b;
  }
  return c;
}

/// Fully resolved config; parse_config(to_json(c)) reproduces c.
inline json to_json(const ExperimentConfig& c) {
  json j;
  j["anisotropy"] = c.anisotropy_spec;
  j["shape"] = c.shape_spec;
  j["solver"] = {{"n_vertices", c.n_vertices},
                 {"tau", c.tau},
                 {"t_end", c.t_end},
                 {"newton_tol", c.newton_tol},
                 {"newton_max_iters", c.newton_max_iters}};
  json src;
  switch (c.k.source) {
    case KBlock::Source::K0: src = "k0"; break;
    case KBlock::Source::Zero: src = "zero"; break;
    case KBlock::Source::Scaled: src = {{"k0_scaled", c.k.factor}}; break;
  }
  j["k"] = {{"source", src}, {"n_theta_samples", c.k.n_theta_samples}, {"phi_samples", c.k.phi_samples}};
  if (c.dewetting) j["dewetting"] = {{"sigma", c.dewetting->sigma}, {"eta", c.dewetting->eta}};
  j["output"] = {{"directory", c.output.directory},
                 {"snapshot_times", c.output.snapshot_times},
                 {"snapshot_every", c.output.snapshot_every},
                 {"csv_every", c.output.csv_every}};
  if (c.convergence) {
    const auto& b = *c.convergence;
    j["convergence"] = {{"h_list", b.h_list}, {"t_checkpoints", b.t_checkpoints},
                        {"ref_h", b.ref_h},   {"ref_tau", b.ref_tau},
                        {"cache_dir", b.cache_dir}, {"workers", b.workers}};
  }
  return j;
}

inline json read_json(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot read config " + path.string());
  try {
    return json::parse(is);
  } catch (const json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

/// Loads a config file; a run manifest is accepted too (its "config" member is used).
inline ExperimentConfig load_config(const std::filesystem::path& path) {
  json j = read_json(path);
  if (j.is_object() && j.contains("config") && j.contains("manifest_version")) j = j.at("config");
  try {
    return parse_config(j);
  } catch (const json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

/// Builds the k source; DivergenceError propagates for unstable anisotropies.
inline KSource make_k_source(const ExperimentConfig& c) {
  switch (c.k.source) {
    case KBlock::Source::Zero: return KSource::zero();
    case KBlock::Source::K0:
      return KSource::table(build_table(c.anisotropy, c.k.n_theta_samples, c.k.phi_samples));
    case KBlock::Source::Scaled:
      return KSource::scaled(build_table(c.anisotropy, c.k.n_theta_samples, c.k.phi_samples),
                             c.k.factor);
  }
  return KSource::zero();
}

inline RunConfig run_config(const ExperimentConfig& c, KSource k) {
  RunConfig r;
  r.n_vertices = c.n_vertices;
  r.tau = c.tau;
  r.t_end = c.t_end;
  r.k_source = std::move(k);
  r.newton_tol = c.newton_tol;
  r.newton_max_iters = c.newton_max_iters;
  return r;
}

}  // namespace anisoflow::cli
