#pragma once

#include <cmath>
#include <span>
#include <utility>
#include <vector>

#include <Eigen/Sparse>

#include "anisoflow/anisotropy.hpp"
#include "anisoflow/curve.hpp"
#include "anisoflow/error.hpp"
#include "anisoflow/record.hpp"
#include "anisoflow/scheme.hpp"
#include "anisoflow/solver.hpp"

namespace anisoflow {

/// Open curve on the substrate; same layout as the closed state.
using OpenSolverState = SolverState;

/// f(theta; sigma) = gamma cos(theta) - gamma' sin(theta) - sigma.
inline double young_residual(const Anisotropy& a, double theta, double sigma) {
  const GammaValues g = a.eval(theta);
  return g.gamma * std::cos(theta) - g.dgamma * std::sin(theta) - sigma;
}

/// (theta_l, theta_r): inclination of the first segment and negated inclination
/// of the last one.
inline std::pair<double, double> contact_angles(const PolygonalCurve& c) {
  if (c.is_closed()) throw ArgumentError("contact_angles: open curve expected");
  const Point first = c.segment(0);
  const Point last = c.segment(c.segment_count() - 1);
  if (!(first.norm() > 0.0)) throw DegenerateMeshError("contact_angles: first segment is degenerate", 0);
  if (!(last.norm() > 0.0))
    throw DegenerateMeshError("contact_angles: last segment is degenerate", c.segment_count() - 1);
  return {normalize_angle(std::atan2(first.y(), first.x())),
          normalize_angle(-std::atan2(last.y(), last.x()))};
}

inline ContactData contact_data(const PolygonalCurve& c) {
  const auto [tl, tr] = contact_angles(c);
  return {c.vertices().front().x(), c.vertices().back().x(), tl, tr};
}

/// Residual of the open scheme. Rows: one first-block row per node, then the x
/// and y rows of every node except the y rows of the two contact points.
inline Eigen::VectorXd assemble_residual_open(const OpenSolverState& prev,
                                              std::span<const Point> cand_x,
                                              std::span<const double> cand_mu,
                                              const RunConfig& cfg, const Anisotropy& a,
                                              const DewettingParams& p) {
  if (prev.curve.is_closed()) throw ArgumentError("assemble_residual_open: open curve expected");
  p.validate();
  return detail::Scheme(prev.curve, a, cfg, p).residual(cand_x, cand_mu);
}

/// Jacobian of assemble_residual_open; columns (x_i, y_i, mu_i) per node with
/// y_0 and y_N left out.
inline Eigen::SparseMatrix<double> assemble_jacobian_open(const OpenSolverState& prev,
                                                          std::span<const Point> cand_x,
                                                          std::span<const double> cand_mu,
                                                          const RunConfig& cfg,
                                                          const Anisotropy& a,
                                                          const DewettingParams& p) {
  if (prev.curve.is_closed()) throw ArgumentError("assemble_jacobian_open: open curve expected");
  p.validate();
  return detail::Scheme(prev.curve, a, cfg, p).jacobian(cand_x, cand_mu);
}

inline std::pair<OpenSolverState, StepStats> solve_step_open(const OpenSolverState& prev,
                                                             const RunConfig& cfg,
                                                             const Anisotropy& a,
                                                             const DewettingParams& p) {
  if (prev.curve.is_closed()) throw ArgumentError("solve_step_open: open curve expected");
  p.validate();
  return detail::step_impl(prev, cfg, a, p);
}

inline RecordRow record_row_open(const OpenSolverState& s, const Anisotropy& a,
                                 const DewettingParams& p, int newton_iters) {
  return {s.time,       area(s.curve), energy(s.curve, a, p.sigma), mesh_ratio(s.curve, a),
          newton_iters, contact_data(s.curve)};
}

inline RunRecord evolve_open(OpenSolverState state, const RunConfig& cfg, const Anisotropy& a,
                             const DewettingParams& p,
                             const std::vector<StepObserver>& observers = {}) {
  if (state.curve.is_closed()) throw ArgumentError("evolve_open: open curve expected");
  cfg.validate();
  p.validate();
  const long steps = detail::step_count(state.time, cfg.t_end, cfg.tau);
  const double t0 = state.time;
  RunRecord rec;
  rec.meta["anisotropy"] = a.name();
  rec.meta["k_source"] = cfg.k_source.describe();
  rec.append(record_row_open(state, a, p, 0));
  for (long m = 0; m < steps; ++m) {
    try {
      auto [next, stats] = solve_step_open(state, cfg, a, p);
      next.time = t0 + static_cast<double>(m + 1) * cfg.tau;
      state = std::move(next);
      rec.append({state.time, stats.area_after, stats.energy_after, mesh_ratio(state.curve, a),
                  stats.newton_iters, contact_data(state.curve)});
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
