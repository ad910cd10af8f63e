#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <future>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "anisoflow/anisotropy.hpp"
#include "anisoflow/curve.hpp"
#include "anisoflow/dewetting.hpp"
#include "anisoflow/error.hpp"
#include "anisoflow/format.hpp"
#include "anisoflow/io.hpp"
#include "anisoflow/solver.hpp"
#include "anisoflow/stabilizer.hpp"

namespace anisoflow {

using Polygon = std::vector<Point>;

namespace geometry {

inline double cross(const Point& a, const Point& b) { return a.x() * b.y() - a.y() * b.x(); }

/// Shoelace area, positive for counterclockwise order.
inline double signed_area(const Polygon& p) {
  double s = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) s += cross(p[i], p[(i + 1) % p.size()]);
  return 0.5 * s;
}

/// Drops vertices closer than tol to their predecessor (cyclically).
inline Polygon dedup(const Polygon& p, double tol = 1e-14) {
  Polygon out;
  out.reserve(p.size());
  for (const Point& v : p)
    if (out.empty() || (v - out.back()).norm() >= tol) out.push_back(v);
  while (out.size() > 1 && (out.front() - out.back()).norm() < tol) out.pop_back();
  return out;
}

inline double extent(const Polygon& p) {
  if (p.empty()) return 0.0;
  Point lo = p.front();
  Point hi = p.front();
  for (const Point& v : p) {
    lo = lo.cwiseMin(v);
    hi = hi.cwiseMax(v);
  }
  return (hi - lo).maxCoeff();
}

// Orientation of c relative to the line a -> b with a relative dead band.
inline int orient(const Point& a, const Point& b, const Point& c, double eps) {
  const double d = cross(b - a, c - a);
  const double scale = (b - a).norm() * (c - a).norm();
  if (std::abs(d) <= eps * std::max(scale, std::numeric_limits<double>::min())) return 0;
  return d > 0.0 ? 1 : -1;
}

inline bool on_segment(const Point& a, const Point& b, const Point& c, double eps) {
  return orient(a, b, c, eps) == 0 && std::min(a.x(), b.x()) - eps <= c.x() &&
         c.x() <= std::max(a.x(), b.x()) + eps && std::min(a.y(), b.y()) - eps <= c.y() &&
         c.y() <= std::max(a.y(), b.y()) + eps;
}

inline bool segments_touch(const Point& a, const Point& b, const Point& c, const Point& d,
                           double eps = 1e-13) {
  const int o1 = orient(a, b, c, eps);
  const int o2 = orient(a, b, d, eps);
  const int o3 = orient(c, d, a, eps);
  const int o4 = orient(c, d, b, eps);
  if (o1 * o2 < 0 && o3 * o4 < 0) return true;
  return (o1 == 0 && on_segment(a, b, c, eps)) || (o2 == 0 && on_segment(a, b, d, eps)) ||
         (o3 == 0 && on_segment(c, d, a, eps)) || (o4 == 0 && on_segment(c, d, b, eps));
}

/// First pair of non-adjacent edges that touch, or nullopt for a simple polygon.
inline std::optional<std::pair<std::size_t, std::size_t>> find_self_intersection(const Polygon& p) {
  const std::size_t n = p.size();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 2; j < n; ++j) {
      if (i == 0 && j == n - 1) continue;
      if (segments_touch(p[i], p[(i + 1) % n], p[j], p[(j + 1) % n])) return {{i, j}};
    }
  return std::nullopt;
}

inline void require_simple(const Polygon& p, const char* what) {
  if (p.size() < 3) throw GeometryError(std::string(what) + ": fewer than 3 distinct vertices");
  if (!(std::abs(signed_area(p)) > 0.0))
    throw GeometryError(std::string(what) + ": zero-area polygon");
  if (auto hit = find_self_intersection(p))
    throw GeometryError(std::string(what) + ": self-intersection between edges " +
                        std::to_string(hit->first) + " and " + std::to_string(hit->second));
}

/// Crossing-number point-in-polygon test (boundary points are unspecified).
inline bool contains(const Polygon& p, const Point& q) {
  bool in = false;
  for (std::size_t i = 0, j = p.size() - 1; i < p.size(); j = i++) {
    const Point& a = p[i];
    const Point& b = p[j];
    if ((a.y() > q.y()) != (b.y() > q.y())) {
      const double x = a.x() + (q.y() - a.y()) * (b.x() - a.x()) / (b.y() - a.y());
      if (q.x() < x) in = !in;
    }
  }
  return in;
}

enum class PieceSide { Inside, Outside, SameBoundary, OppositeBoundary };

inline PieceSide classify(const Point& a, const Point& b, const Polygon& other, double tol) {
  const Point mid = 0.5 * (a + b);
  const Point dir = b - a;
  for (std::size_t i = 0; i < other.size(); ++i) {
    const Point& c = other[i];
    const Point& d = other[(i + 1) % other.size()];
    const Point s = d - c;
    const double len2 = s.squaredNorm();
    const double t = std::clamp((mid - c).dot(s) / len2, 0.0, 1.0);
    if ((mid - (c + t * s)).norm() <= tol && std::abs(cross(dir, s)) <= 1e-9 * dir.norm() * s.norm())
      return dir.dot(s) > 0.0 ? PieceSide::SameBoundary : PieceSide::OppositeBoundary;
  }
  return contains(other, mid) ? PieceSide::Inside : PieceSide::Outside;
}

// Sum of cross(a, b)/2 over the pieces of p's edges that bound p ∩ q; pieces on
// a shared boundary with equal direction are counted only when count_shared.
inline double clipped_boundary_integral(const Polygon& p, const Polygon& q, double tol,
                                        bool count_shared) {
  double acc = 0.0;
  std::vector<double> ts;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const Point a = p[i];
    const Point b = p[(i + 1) % p.size()];
    const Point r = b - a;
    const double rlen = r.norm();
    ts.assign({0.0, 1.0});
    for (std::size_t j = 0; j < q.size(); ++j) {
      const Point c = q[j];
      const Point d = q[(j + 1) % q.size()];
      const Point s = d - c;
      const Point qp = c - a;
      const double denom = cross(r, s);
      if (std::abs(denom) > 1e-13 * rlen * s.norm()) {
        const double t = cross(qp, s) / denom;
        const double u = cross(qp, r) / denom;
        if (u >= -1e-12 && u <= 1.0 + 1e-12 && t > 0.0 && t < 1.0) ts.push_back(t);
      } else if (std::abs(cross(qp, r)) <= tol * rlen) {
        for (const Point& e : {c, d}) {
          const double t = (e - a).dot(r) / (rlen * rlen);
          if (t > 0.0 && t < 1.0) ts.push_back(t);
        }
      }
    }
    std::sort(ts.begin(), ts.end());
    for (std::size_t k = 0; k + 1 < ts.size(); ++k) {
      if (ts[k + 1] - ts[k] <= 1e-15) continue;
      const Point pa = a + ts[k] * r;
      const Point pb = a + ts[k + 1] * r;
      const PieceSide side = classify(pa, pb, q, tol);
      if (side == PieceSide::Inside || (count_shared && side == PieceSide::SameBoundary))
        acc += 0.5 * cross(pa, pb);
    }
  }
  return acc;
}

inline Polygon counterclockwise(Polygon p) {
  if (signed_area(p) < 0.0) std::reverse(p.begin(), p.end());
  return p;
}

}  // namespace geometry

/// Area of p1 ∩ p2 for simple polygons of either orientation. The boundary of
/// the intersection is assembled from the edge pieces of each polygon that lie
/// inside the other.
inline double polygon_intersection_area(const Polygon& p1, const Polygon& p2) {
  Polygon a = geometry::counterclockwise(geometry::dedup(p1));
  Polygon b = geometry::counterclockwise(geometry::dedup(p2));
  geometry::require_simple(a, "polygon_intersection_area (first)");
  geometry::require_simple(b, "polygon_intersection_area (second)");
  // Shift to a common origin to limit cancellation in the cross products.
  Point lo = a.front();
  Point hi = a.front();
  for (const Polygon* poly : {&a, &b})
    for (const Point& v : *poly) {
      lo = lo.cwiseMin(v);
      hi = hi.cwiseMax(v);
    }
  const Point origin = 0.5 * (lo + hi);
  for (Point& v : a) v -= origin;
  for (Point& v : b) v -= origin;
  const double tol = 1e-12 * std::max(1.0, (hi - lo).maxCoeff());
  const double s = geometry::clipped_boundary_integral(a, b, tol, true) +
                   geometry::clipped_boundary_integral(b, a, tol, false);
  const double cap = std::min(std::abs(geometry::signed_area(a)), std::abs(geometry::signed_area(b)));
  return std::clamp(s, 0.0, cap);
}

/// |Ω1| + |Ω2| - 2|Ω1 ∩ Ω2| for two simple polygons.
inline double manifold_distance(const Polygon& p1, const Polygon& p2) {
  const double a1 = std::abs(geometry::signed_area(geometry::dedup(p1)));
  const double a2 = std::abs(geometry::signed_area(geometry::dedup(p2)));
  return std::max(0.0, a1 + a2 - 2.0 * polygon_intersection_area(p1, p2));
}

/// Region polygon of a curve; open curves are closed along the substrate.
inline Polygon region_of(const PolygonalCurve& c) {
  return Polygon(c.vertices().begin(), c.vertices().end());
}

inline double manifold_distance(const PolygonalCurve& c1, const PolygonalCurve& c2) {
  if (c1.topology() != c2.topology())
    throw ArgumentError("manifold_distance: curves have different topologies");
  return manifold_distance(region_of(c1), region_of(c2));
}

// ---------------------------------------------------------------------------
// Convergence studies

struct ConvergenceRow {
  double h = 0.0;
  double t = 0.0;
  double error = 0.0;
  double order = std::numeric_limits<double>::quiet_NaN();  ///< vs the previous h
};

struct ConvergenceSetup {
  Anisotropy anisotropy = Anisotropy::isotropic();
  ShapeSpec shape = shapes::Ellipse{};
  std::vector<double> h_list;
  std::vector<double> t_checkpoints;
  double ref_h = 1.0 / 128.0;
  double ref_tau = 1.0 / 1024.0;
  KSource k_source;
  std::optional<DewettingParams> dewetting;
  double newton_tol = 1e-12;
  int newton_max_iters = 50;
  std::filesystem::path cache_dir;  ///< empty: no caching
  int workers = 1;
};

namespace detail {

inline std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

inline int vertices_for(double h) {
  if (!(h > 0.0)) throw ArgumentError("mesh size must be > 0");
  const double n = 1.0 / h;
  const long r = std::lround(n);
  if (r < 3 || std::abs(n - static_cast<double>(r)) > 1e-9 * n)
    throw ArgumentError("mesh size " + format_double(h) + " is not 1/N for an integer N >= 3");
  return static_cast<int>(r);
}

inline long steps_to(double t, double tau) {
  const double n = t / tau;
  const long r = std::lround(n);
  if (std::abs(n - static_cast<double>(r)) > 1e-9 * std::max(1.0, n))
    throw ArgumentError("checkpoint " + format_double(t) + " is not a multiple of tau = " +
                        format_double(tau));
  return r;
}

inline std::string reference_key(const ConvergenceSetup& s) {
  std::string key = s.anisotropy.describe() + "|" + describe(s.shape) +
                    "|N=" + std::to_string(vertices_for(s.ref_h)) +
                    "|tau=" + format_double(s.ref_tau) + "|k=" + s.k_source.describe();
  if (s.k_source.has_table()) {
    key += "[";
    for (double v : s.k_source.stabilizer_table().values()) key += format_double(v) + ";";
    key += "]";
  }
  if (s.dewetting)
    key += "|sigma=" + format_double(s.dewetting->sigma) + "|eta=" + format_double(s.dewetting->eta);
  key += "|tol=" + format_double(s.newton_tol);
  return key;
}

}  // namespace detail

/// Curves at each checkpoint (sorted ascending) from a run with n segments and step tau.
inline std::vector<PolygonalCurve> run_to_checkpoints(const ConvergenceSetup& s, int n, double tau,
                                                      const std::vector<double>& checkpoints) {
  RunConfig cfg;
  cfg.n_vertices = n;
  cfg.tau = tau;
  cfg.k_source = s.k_source;
  cfg.newton_tol = s.newton_tol;
  cfg.newton_max_iters = s.newton_max_iters;
  const PolygonalCurve c0 = make_shape(s.shape, n);
  if (c0.is_closed() == s.dewetting.has_value())
    throw ArgumentError("convergence study: dewetting parameters must match the shape topology");
  SolverState state = make_state(c0, s.anisotropy, cfg);
  std::vector<PolygonalCurve> out;
  long done = 0;
  for (double t : checkpoints) {
    const long target = detail::steps_to(t, tau);
    for (; done < target; ++done) {
      auto next = s.dewetting ? solve_step_open(state, cfg, s.anisotropy, *s.dewetting)
                              : solve_step(state, cfg, s.anisotropy);
      state = std::move(next.first);
    }
    out.push_back(state.curve);
  }
  return out;
}

/// Reference curves at the checkpoints, read from or written to the cache.
inline std::vector<PolygonalCurve> reference_curves(const ConvergenceSetup& s,
                                                    const std::vector<double>& checkpoints) {
  const int n = detail::vertices_for(s.ref_h);
  const Topology topo = shape_topology(s.shape);
  if (s.cache_dir.empty()) return run_to_checkpoints(s, n, s.ref_tau, checkpoints);

  const std::string key = detail::reference_key(s);
  char hex[17];
  std::snprintf(hex, sizeof(hex), "%016llx", static_cast<unsigned long long>(detail::fnv1a(key)));
  const auto dir = s.cache_dir / hex;
  auto file_for = [&](double t) { return dir / ("t_" + format_double(t) + ".csv"); };

  std::ifstream manifest(dir / "manifest.txt");
  std::string stored;
  if (manifest && std::getline(manifest, stored) && stored == key) {
    bool complete = true;
    for (double t : checkpoints) complete = complete && std::filesystem::exists(file_for(t));
    if (complete) {
      std::vector<PolygonalCurve> out;
      for (double t : checkpoints) out.push_back(io::read_curve_csv(file_for(t), topo));
      return out;
    }
  }
  auto curves = run_to_checkpoints(s, n, s.ref_tau, checkpoints);
  std::filesystem::create_directories(dir);
  for (std::size_t i = 0; i < checkpoints.size(); ++i)
    io::write_curve_csv(file_for(checkpoints[i]), curves[i]);
  auto os = io::open_out(dir / "manifest.txt");
  os << key << '\n';
  for (double t : checkpoints) os << format_double(t) << ',' << file_for(t).filename().string() << '\n';
  return curves;
}

/// Errors M(Γ_h(t), Γ_ref(t)) for every (h, t) with tau = 16 h^2, plus observed
/// orders log(e_prev / e) / log(h_prev / h) between consecutive h.
inline std::vector<ConvergenceRow> convergence_study(const ConvergenceSetup& s) {
  if (s.h_list.empty()) throw ArgumentError("convergence study: empty h list");
  for (std::size_t i = 1; i < s.h_list.size(); ++i)
    if (!(s.h_list[i] < s.h_list[i - 1]))
      throw ArgumentError("convergence study: h list must be strictly decreasing");
  if (!(s.ref_h <= s.h_list.back()))
    throw ArgumentError("convergence study: reference must be at least as fine as every h");
  if (s.t_checkpoints.empty()) throw ArgumentError("convergence study: no checkpoints");
  std::vector<double> cps = s.t_checkpoints;
  std::sort(cps.begin(), cps.end());
  for (double t : cps) {
    if (t < 0.0) throw ArgumentError("convergence study: negative checkpoint");
    detail::steps_to(t, s.ref_tau);
  }

  const auto ref = reference_curves(s, cps);

  const std::size_t nh = s.h_list.size();
  std::vector<std::vector<PolygonalCurve>> runs(nh);
  const std::size_t workers = static_cast<std::size_t>(std::max(1, s.workers));
  for (std::size_t start = 0; start < nh; start += workers) {
    std::vector<std::future<std::vector<PolygonalCurve>>> jobs;
    for (std::size_t i = start; i < std::min(nh, start + workers); ++i) {
      const double h = s.h_list[i];
      jobs.push_back(std::async(workers > 1 ? std::launch::async : std::launch::deferred,
                                [&s, &cps, h] {
                                  return run_to_checkpoints(s, detail::vertices_for(h),
                                                            16.0 * h * h, cps);
                                }));
    }
    for (std::size_t i = start; i < std::min(nh, start + workers); ++i)
      runs[i] = jobs[i - start].get();
  }

  std::vector<ConvergenceRow> rows;
  for (std::size_t i = 0; i < nh; ++i)
    for (std::size_t k = 0; k < cps.size(); ++k) {
      ConvergenceRow row{s.h_list[i], cps[k], manifold_distance(runs[i][k], ref[k])};
      if (i > 0) {
        const double prev = rows[(i - 1) * cps.size() + k].error;
        row.order = std::log(prev / row.error) / std::log(s.h_list[i - 1] / s.h_list[i]);
      }
      rows.push_back(row);
    }
  return rows;
}

}  // namespace anisoflow
