#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <type_traits>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "anisoflow/anisotropy.hpp"
#include "anisoflow/error.hpp"
#include "anisoflow/format.hpp"

namespace anisoflow {

using Point = Eigen::Vector2d;

enum class Topology { Closed, OpenOnSubstrate };

inline std::string to_string(Topology t) {
  return t == Topology::Closed ? "closed" : "open";
}

/// Geometry of one segment h_j = X_j - X_{j-1}.
struct SegmentFrame {
  double length = 0.0;
  double theta = 0.0;  ///< inclination in (-pi, pi]
  Point tangent{1.0, 0.0};
  Point normal{0.0, 1.0};  ///< (-sin theta, cos theta)
};

namespace detail {

// 1/2 sum_j (x_j - x_{j-1}) (y_j + y_{j-1}) over consecutive pairs.
inline double trapezoid_area(std::span<const Point> v, bool wrap) {
  double acc = 0.0;
  const std::size_t n = v.size();
  const std::size_t segs = wrap ? n : n - 1;
  for (std::size_t j = 0; j < segs; ++j) {
    const Point& p = v[j];
    const Point& q = v[(j + 1) % n];
    acc += (q.x() - p.x()) * (q.y() + p.y());
  }
  return 0.5 * acc;
}

}  // namespace detail

/// Ordered polygon, either closed (implicit wraparound) or open with both
/// endpoints on the substrate y = 0.
///
/// Closed curves are stored clockwise so that n = (-sin, cos) points outward and
/// the trapezoid area is positive; counterclockwise input is reversed.
class PolygonalCurve {
 public:
  PolygonalCurve() = default;

  static PolygonalCurve closed(std::vector<Point> vertices) {
    if (vertices.size() < 3) throw ConstructionError("closed curve needs at least 3 vertices");
    if (detail::trapezoid_area(vertices, true) < 0.0) std::reverse(vertices.begin(), vertices.end());
    PolygonalCurve c(Topology::Closed, std::move(vertices));
    c.check_segments();
    return c;
  }

  static PolygonalCurve open(std::vector<Point> vertices) {
    if (vertices.size() < 3)
      throw ConstructionError("open curve needs at least 2 segments (3 vertices)");
    if (vertices.front().y() != 0.0 || vertices.back().y() != 0.0)
      throw ConstructionError("open curve endpoints must lie exactly on y = 0");
    if (vertices.front().x() > vertices.back().x())
      throw ConstructionError("open curve must run left to right (x_0 <= x_N)");
    PolygonalCurve c(Topology::OpenOnSubstrate, std::move(vertices));
    c.check_segments();
    return c;
  }

  static PolygonalCurve make(Topology t, std::vector<Point> vertices) {
    return t == Topology::Closed ? closed(std::move(vertices)) : open(std::move(vertices));
  }

  /// Same topology with new vertex positions; the vertex order is kept as given.
  PolygonalCurve with_vertices(std::vector<Point> vertices) const {
    if (vertices.size() != vertices_.size())
      throw ArgumentError("with_vertices: vertex count must not change");
    PolygonalCurve c(topology_, std::move(vertices));
    c.check_segments();
    return c;
  }

  Topology topology() const noexcept { return topology_; }
  bool is_closed() const noexcept { return topology_ == Topology::Closed; }
  const std::vector<Point>& vertices() const noexcept { return vertices_; }
  std::size_t vertex_count() const noexcept { return vertices_.size(); }
  std::size_t segment_count() const noexcept {
    return is_closed() ? vertices_.size() : vertices_.size() - 1;
  }

  /// Segment j runs from vertex j to vertex j+1 (wrapping for closed curves).
  Point segment(std::size_t j) const {
    return vertices_[(j + 1) % vertices_.size()] - vertices_[j];
  }

 private:
  PolygonalCurve(Topology t, std::vector<Point> v) : topology_(t), vertices_(std::move(v)) {}

  void check_segments() const {
    for (std::size_t j = 0; j < segment_count(); ++j)
      if (!(segment(j).norm() > 0.0))
        throw DegenerateMeshError("zero-length segment " + std::to_string(j), j);
  }

  Topology topology_ = Topology::Closed;
  std::vector<Point> vertices_;
};

inline SegmentFrame frame_of(const Point& h) {
  SegmentFrame f;
  f.length = h.norm();
  f.theta = std::atan2(h.y(), h.x());
  f.tangent = h / f.length;
  f.normal = Point(-f.tangent.y(), f.tangent.x());
  return f;
}

inline std::vector<SegmentFrame> frames(const PolygonalCurve& c) {
  std::vector<SegmentFrame> out;
  out.reserve(c.segment_count());
  for (std::size_t j = 0; j < c.segment_count(); ++j) {
    const Point h = c.segment(j);
    if (!(h.norm() > 0.0)) throw DegenerateMeshError("zero-length segment " + std::to_string(j), j);
    out.push_back(frame_of(h));
  }
  return out;
}

/// Enclosed area (closed) or area between the curve and the substrate (open).
inline double area(const PolygonalCurve& c) {
  return detail::trapezoid_area(c.vertices(), c.is_closed());
}

inline double area(std::span<const Point> vertices, Topology t) {
  return detail::trapezoid_area(vertices, t == Topology::Closed);
}

/// Sum of |h_j| gamma(theta_j), minus sigma (x_N - x_0) for open curves.
inline double energy(const PolygonalCurve& c, const Anisotropy& a,
                     std::optional<double> sigma = std::nullopt) {
  if (c.is_closed() && sigma) throw ArgumentError("energy: sigma given for a closed curve");
  if (!c.is_closed() && !sigma) throw ArgumentError("energy: open curve requires sigma");
  double w = 0.0;
  for (std::size_t j = 0; j < c.segment_count(); ++j) {
    const Point h = c.segment(j);
    w += h.norm() * a.gamma(std::atan2(h.y(), h.x()));
  }
  if (sigma) w -= *sigma * (c.vertices().back().x() - c.vertices().front().x());
  return w;
}

/// max_j gamma(theta_j)|h_j| / min_j gamma(theta_j)|h_j|.
inline double mesh_ratio(const PolygonalCurve& c, const Anisotropy& a) {
  double lo = INFINITY;
  double hi = 0.0;
  for (std::size_t j = 0; j < c.segment_count(); ++j) {
    const Point h = c.segment(j);
    const double w = h.norm() * a.gamma(std::atan2(h.y(), h.x()));
    lo = std::min(lo, w);
    hi = std::max(hi, w);
  }
  return hi / lo;
}

/// Values attached either to vertices (piecewise linear) or to segments
/// (piecewise constant). T is double or Point.
template <class T>
struct Field {
  enum class Kind { Nodal, Segmentwise };
  Kind kind = Kind::Nodal;
  std::span<const T> values;

  static Field nodal(std::span<const T> v) { return {Kind::Nodal, v}; }
  static Field segmentwise(std::span<const T> v) { return {Kind::Segmentwise, v}; }
};

namespace detail {

inline double product(double a, double b) { return a * b; }
inline double product(const Point& a, const Point& b) { return a.dot(b); }

}  // namespace detail

/// Mass-lumped inner product on c:
/// 1/2 sum_j |h_j| [(f.g)(rho_{j-1}^+) + (f.g)(rho_j^-)].
template <class T>
double lumped_inner(const Field<T>& f, const Field<T>& g, const PolygonalCurve& c) {
  const std::size_t nseg = c.segment_count();
  const std::size_t nv = c.vertex_count();
  auto check = [&](const Field<T>& x, const char* name) {
    const std::size_t want = x.kind == Field<T>::Kind::Nodal ? nv : nseg;
    if (x.values.size() != want)
      throw ArgumentError(std::string("lumped_inner: ") + name + " has " +
                          std::to_string(x.values.size()) + " values, expected " +
                          std::to_string(want));
  };
  check(f, "f");
  check(g, "g");
  auto at = [&](const Field<T>& x, std::size_t seg, std::size_t node) -> const T& {
    return x.kind == Field<T>::Kind::Nodal ? x.values[node] : x.values[seg];
  };
  double acc = 0.0;
  for (std::size_t j = 0; j < nseg; ++j) {
    const std::size_t a = j;
    const std::size_t b = (j + 1) % nv;
    const double len = c.segment(j).norm();
    acc += 0.5 * len *
           (detail::product(at(f, j, a), at(g, j, a)) + detail::product(at(f, j, b), at(g, j, b)));
  }
  return acc;
}

// ---------------------------------------------------------------------------
// Initial shapes

namespace shapes {

struct Ellipse {
  double rx = 2.0;
  double ry = 0.5;
  double rotation = 0.0;  ///< counterclockwise, radians
};

struct HalfEllipse {
  double rx = 2.0;
  double ry = 0.5;
};

struct OpenRectangle {
  double w = 4.0;
  double h = 1.0;
};

/// r = 1 + 0.5 cos 4 theta.
struct FourFoldStar {};

}  // namespace shapes

using ShapeSpec =
    std::variant<shapes::Ellipse, shapes::HalfEllipse, shapes::OpenRectangle, shapes::FourFoldStar>;

inline Topology shape_topology(const ShapeSpec& s) {
  return std::holds_alternative<shapes::HalfEllipse>(s) ||
                 std::holds_alternative<shapes::OpenRectangle>(s)
             ? Topology::OpenOnSubstrate
             : Topology::Closed;
}

inline std::string describe(const ShapeSpec& s) {
  struct V {
    std::string operator()(const shapes::Ellipse& e) const {
      return "ellipse(rx=" + format_double(e.rx) + ",ry=" + format_double(e.ry) +
             ",rotation=" + format_double(e.rotation) + ")";
    }
    std::string operator()(const shapes::HalfEllipse& e) const {
      return "half_ellipse(rx=" + format_double(e.rx) + ",ry=" + format_double(e.ry) + ")";
    }
    std::string operator()(const shapes::OpenRectangle& r) const {
      return "open_rectangle(w=" + format_double(r.w) + ",h=" + format_double(r.h) + ")";
    }
    std::string operator()(const shapes::FourFoldStar&) const { return "star"; }
  };
  return std::visit(V{}, s);
}

/// Samples the shape with n segments (closed: n vertices, open: n + 1 vertices).
inline PolygonalCurve make_shape(const ShapeSpec& spec, int n) {
  struct Builder {
    int n;
    PolygonalCurve operator()(const shapes::Ellipse& e) const {
      if (n < 3) throw ConstructionError("ellipse: need N >= 3");
      if (!(e.rx > 0.0) || !(e.ry > 0.0)) throw ConstructionError("ellipse: radii must be > 0");
      const double cr = std::cos(e.rotation);
      const double sr = std::sin(e.rotation);
      std::vector<Point> v(n);
      for (int j = 0; j < n; ++j) {
        const double t = -kTwoPi * j / n;  // clockwise
        const double x = e.rx * std::cos(t);
        const double y = e.ry * std::sin(t);
        v[j] = Point(cr * x - sr * y, sr * x + cr * y);
      }
      return PolygonalCurve::closed(std::move(v));
    }
    PolygonalCurve operator()(const shapes::HalfEllipse& e) const {
      if (n < 2) throw ConstructionError("half ellipse: need N >= 2");
      if (!(e.rx > 0.0) || !(e.ry > 0.0))
        throw ConstructionError("half ellipse: radii must be > 0");
      std::vector<Point> v(n + 1);
      for (int j = 0; j <= n; ++j) {
        const double t = kPi - kPi * j / n;
        v[j] = Point(e.rx * std::cos(t), e.ry * std::sin(t));
      }
      v.front() = Point(-e.rx, 0.0);
      v.back() = Point(e.rx, 0.0);
      return PolygonalCurve::open(std::move(v));
    }
    PolygonalCurve operator()(const shapes::OpenRectangle& r) const {
      if (n < 3) throw ConstructionError("open rectangle: need N >= 3");
      if (!(r.w > 0.0) || !(r.h > 0.0))
        throw ConstructionError("open rectangle: sides must be > 0");
      // Corners stay vertices: segments are split between the three sides in
      // proportion to their lengths.
      const double perimeter = r.w + 2.0 * r.h;
      int nside = std::max(1, static_cast<int>(std::lround(n * r.h / perimeter)));
      int ntop = n - 2 * nside;
      if (ntop < 1) throw ConstructionError("open rectangle: N too small");
      const double x0 = -0.5 * r.w;
      std::vector<Point> v;
      v.reserve(n + 1);
      for (int j = 0; j < nside; ++j) v.emplace_back(x0, r.h * j / nside);
      for (int j = 0; j < ntop; ++j) v.emplace_back(x0 + r.w * j / ntop, r.h);
      for (int j = 0; j < nside; ++j) v.emplace_back(-x0, r.h - r.h * j / nside);
      v.emplace_back(-x0, 0.0);
      return PolygonalCurve::open(std::move(v));
    }
    PolygonalCurve operator()(const shapes::FourFoldStar&) const {
      if (n < 3) throw ConstructionError("star: need N >= 3");
      std::vector<Point> v(n);
      for (int j = 0; j < n; ++j) {
        const double t = -kTwoPi * j / n;
        const double r = 1.0 + 0.5 * std::cos(4.0 * t);
        v[j] = Point(r * std::cos(t), r * std::sin(t));
      }
      return PolygonalCurve::closed(std::move(v));
    }
  };
  return std::visit(Builder{n}, spec);
}

}  // namespace anisoflow
