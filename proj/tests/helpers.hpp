#pragma once

#include <cmath>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "anisoflow/curve.hpp"

namespace testutil {

using anisoflow::Point;

// Clockwise unit square starting at the origin.
inline std::vector<Point> unit_square(double x0 = 0.0, double y0 = 0.0, double s = 1.0) {
  return {{x0, y0}, {x0, y0 + s}, {x0 + s, y0 + s}, {x0 + s, y0}};
}

// Regular n-gon of circumradius r, clockwise.
inline std::vector<Point> regular_polygon(int n, double r, double phase = 0.0) {
  std::vector<Point> v(n);
  for (int j = 0; j < n; ++j) {
    const double t = phase - 2.0 * anisoflow::kPi * j / n;
    v[j] = Point(r * std::cos(t), r * std::sin(t));
  }
  return v;
}

inline std::vector<Point> rotated(const std::vector<Point>& v, double phi) {
  const Eigen::Rotation2Dd rot(phi);
  std::vector<Point> out;
  for (const auto& p : v) out.push_back(rot * p);
  return out;
}

inline std::vector<Point> shifted(const std::vector<Point>& v, const Point& d) {
  std::vector<Point> out;
  for (const auto& p : v) out.push_back(p + d);
  return out;
}

// Largest entry error relative to the largest Jacobian entry.
inline double max_relative_error(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  const double scale = std::max(1.0, b.cwiseAbs().maxCoeff());
  return (a - b).cwiseAbs().maxCoeff() / scale;
}

}  // namespace testutil
