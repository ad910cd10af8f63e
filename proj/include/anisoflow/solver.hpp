#pragma once

#include <cmath>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Sparse>

#include "anisoflow/anisotropy.hpp"
#include "anisoflow/curve.hpp"
#include "anisoflow/error.hpp"
#include "anisoflow/record.hpp"
#include "anisoflow/scheme.hpp"

namespace anisoflow {

/// Called after every accepted step.
using StepObserver = std::function<void(const SolverState&, const StepStats&)>;

/// tau = 16 h^2 with h = 1/N.
inline double default_tau(int n_vertices) {
  if (n_vertices < 1) throw ArgumentError("default_tau: n_vertices must be >= 1");
  const double h = 1.0 / n_vertices;
  return 16.0 * h * h;
}

namespace detail {

inline void check_state(const SolverState& s) {
  if (s.mu.size() != s.curve.vertex_count())
    throw ArgumentError("solver state: mu must have one entry per vertex");
  if (s.time < 0.0 || s.step < 0) throw ArgumentError("solver state: time and step must be >= 0");
}

inline std::pair<SolverState, StepStats> step_impl(const SolverState& prev, const RunConfig& cfg,
                                                   const Anisotropy& a,
                                                   std::optional<DewettingParams> wet) {
  cfg.validate();
  check_state(prev);
  const Scheme scheme(prev.curve, a, cfg, wet);
  std::vector<Point> x0(prev.curve.vertices().begin(), prev.curve.vertices().end());
  NewtonResult nr = newton_solve(scheme, std::move(x0), prev.mu, cfg);

  if (wet && nr.x.front().x() > nr.x.back().x())
    throw StepFailure("contact points crossed (x_l > x_r)", nr.history);

  PolygonalCurve next = prev.curve.with_vertices(std::move(nr.x));

  StepStats stats;
  stats.newton_iters = nr.iterations;
  stats.residual_norm = nr.residual_norm;
  stats.roundoff_floor = nr.roundoff_floor;
  stats.residual_history = std::move(nr.history);
  stats.area_after = area(next);
  stats.energy_after = wet ? energy(next, a, wet->sigma) : energy(next, a);

  SolverState out{std::move(next), std::move(nr.mu), prev.time + cfg.tau, prev.step + 1};
  return {std::move(out), std::move(stats)};
}

inline long step_count(double t0, double t_end, double tau) {
  if (!(t_end >= t0)) throw ArgumentError("evolve: t_end must be >= the state time");
  const double n = (t_end - t0) / tau;
  // Absorb rounding so that t_end = k * tau gives exactly k steps.
  return static_cast<long>(std::ceil(n - 1e-9 * std::max(1.0, n)));
}

}  // namespace detail

/// The nodal weighted curvature consistent with the scheme at X^{m+1} = X^m:
/// a per-node least-squares solve of the second block (endpoint nodes of open
/// curves copy their neighbour).
inline std::vector<double> initial_mu(const PolygonalCurve& c, const Anisotropy& a,
                                      const RunConfig& cfg) {
  std::optional<DewettingParams> wet;
  if (!c.is_closed()) wet = DewettingParams{};
  return detail::Scheme(c, a, cfg, wet).consistent_mu();
}

/// State at t = 0 with mu from initial_mu.
inline SolverState make_state(PolygonalCurve c, const Anisotropy& a, const RunConfig& cfg) {
  std::vector<double> mu = initial_mu(c, a, cfg);
  return SolverState{std::move(c), std::move(mu), 0.0, 0};
}

/// Residual of the closed scheme; rows 0..N-1 are the first block, then x and
/// y rows per node.
inline Eigen::VectorXd assemble_residual(const SolverState& prev, std::span<const Point> cand_x,
                                         std::span<const double> cand_mu, const RunConfig& cfg,
                                         const Anisotropy& a) {
  if (!prev.curve.is_closed()) throw ArgumentError("assemble_residual: closed curve expected");
  return detail::Scheme(prev.curve, a, cfg).residual(cand_x, cand_mu);
}

/// Jacobian of assemble_residual; columns are (x_i, y_i, mu_i) node by node.
inline Eigen::SparseMatrix<double> assemble_jacobian(const SolverState& prev,
                                                     std::span<const Point> cand_x,
                                                     std::span<const double> cand_mu,
                                                     const RunConfig& cfg, const Anisotropy& a) {
  if (!prev.curve.is_closed()) throw ArgumentError("assemble_jacobian: closed curve expected");
  return detail::Scheme(prev.curve, a, cfg).jacobian(cand_x, cand_mu);
}

inline std::pair<SolverState, StepStats> solve_step(const SolverState& prev, const RunConfig& cfg,
                                                    const Anisotropy& a) {
  if (!prev.curve.is_closed()) throw ArgumentError("solve_step: closed curve expected");
  return detail::step_impl(prev, cfg, a, std::nullopt);
}

inline RecordRow record_row(const SolverState& s, const Anisotropy& a, int newton_iters) {
  return {s.time, area(s.curve), energy(s.curve, a), mesh_ratio(s.curve, a), newton_iters,
          std::nullopt};
}

/// Steps until time >= t_end, recording one row per step (plus the initial row).
inline RunRecord evolve(SolverState state, const RunConfig& cfg, const Anisotropy& a,
                        const std::vector<StepObserver>& observers = {}) {
  if (!state.curve.is_closed()) throw ArgumentError("evolve: closed curve expected");
  cfg.validate();
  const long steps = detail::step_count(state.time, cfg.t_end, cfg.tau);
  const double t0 = state.time;
  RunRecord rec;
  rec.meta["anisotropy"] = a.name();
  rec.meta["k_source"] = cfg.k_source.describe();
  rec.append(record_row(state, a, 0));
  for (long m = 0; m < steps; ++m) {
    try {
      auto [next, stats] = solve_step(state, cfg, a);
      next.time = t0 + static_cast<double>(m + 1) * cfg.tau;
      state = std::move(next);
      rec.append({state.time, stats.area_after, stats.energy_after, mesh_ratio(state.curve, a),
                  stats.newton_iters, std::nullopt});
      for (const auto& obs : observers) obs(state, stats);
    } catch (const StepFailure& e) {
      throw RunFailure(e, std::move(rec));
    } catch (const Error& e) {
      throw RunFailure(e.what(), std::move(rec));
    }
  }
  return rec;
}

}  // namespace anisoflow
