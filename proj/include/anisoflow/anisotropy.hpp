#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <numbers>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "anisoflow/error.hpp"
#include "anisoflow/format.hpp"

namespace anisoflow {

inline constexpr double kPi = std::numbers::pi;
inline constexpr double kTwoPi = 2.0 * std::numbers::pi;

/// Reduce an angle to (-pi, pi].
inline double normalize_angle(double theta) {
  double r = std::remainder(theta, kTwoPi);
  if (r <= -kPi) r += kTwoPi;
  return r;
}

/// gamma(theta) and its first two derivatives.
struct GammaValues {
  double gamma = 0.0;
  double dgamma = 0.0;
  double d2gamma = 0.0;
};

namespace detail {

// sqrt(q) and its derivatives from q, q', q''.
inline GammaValues sqrt_chain(double q, double dq, double d2q) {
  const double g = std::sqrt(q);
  return {g, dq / (2.0 * g), (2.0 * q * d2q - dq * dq) / (4.0 * q * g)};
}

}  // namespace detail

namespace kinds {

struct Isotropic {};

struct MFold {
  int m = 3;
  double beta = 0.0;
  double theta0 = 0.0;
};

struct Ellipsoidal {
  double a = 1.0;
  double b = 0.0;
};

/// Sum of sqrt(n^T G_l n) over symmetric positive-definite G_l.
struct RiemannianSum {
  std::vector<Eigen::Matrix2d> matrices;
};

/// sqrt((5/2 + 3/2 sgn(n1)) n1^2 + n2^2), n = (-sin, cos), sgn(0) = +1.
struct PiecewiseSgn {};

/// Externally supplied evaluator. Must be globally C^1 and piecewise C^2 with
/// the listed kink angles.
struct Custom {
  std::function<GammaValues(double)> evaluator;
  std::vector<double> kinks;
  std::string name = "custom";
};

}  // namespace kinds

/// Anisotropic surface energy density gamma(theta) from a fixed catalog.
///
/// Values are immutable after construction; every evaluation reduces the angle
/// to (-pi, pi] first.
class Anisotropy {
 public:
  using Kind = std::variant<kinds::Isotropic, kinds::MFold, kinds::Ellipsoidal,
                            kinds::RiemannianSum, kinds::PiecewiseSgn, kinds::Custom>;

  Anisotropy() : kind_(kinds::Isotropic{}) {}

  static Anisotropy isotropic() { return Anisotropy(kinds::Isotropic{}); }

  static Anisotropy mfold(int m, double beta, double theta0 = 0.0) {
    if (m < 1) throw ConstructionError("mfold: fold number m must be >= 1");
    if (!(std::abs(beta) < 1.0)) throw ConstructionError("mfold: |beta| must be < 1");
    if (!std::isfinite(theta0)) throw ConstructionError("mfold: theta0 must be finite");
    return Anisotropy(kinds::MFold{m, beta, theta0});
  }

  static Anisotropy ellipsoidal(double a, double b) {
    if (!(a > 0.0)) throw ConstructionError("ellipsoidal: a must be > 0");
    if (!(a + b > 0.0)) throw ConstructionError("ellipsoidal: a + b must be > 0");
    return Anisotropy(kinds::Ellipsoidal{a, b});
  }

  static Anisotropy riemannian_sum(std::vector<Eigen::Matrix2d> matrices) {
    if (matrices.empty()) throw ConstructionError("riemannian: need at least one matrix");
    for (const auto& g : matrices) {
      const double scale = std::max({std::abs(g(0, 0)), std::abs(g(1, 1)), 1.0});
      if (std::abs(g(0, 1) - g(1, 0)) > 1e-12 * scale)
        throw ConstructionError("riemannian: matrix is not symmetric");
      if (!(g(0, 0) > 0.0) || !(g.determinant() > 0.0))
        throw ConstructionError("riemannian: matrix is not positive definite");
    }
    return Anisotropy(kinds::RiemannianSum{std::move(matrices)});
  }

  static Anisotropy piecewise_sgn() { return Anisotropy(kinds::PiecewiseSgn{}); }

  static Anisotropy custom(std::function<GammaValues(double)> evaluator,
                           std::vector<double> kinks = {}, std::string name = "custom") {
    if (!evaluator) throw ConstructionError("custom: evaluator is empty");
    for (double& k : kinks) k = normalize_angle(k);
    return Anisotropy(kinds::Custom{std::move(evaluator), std::move(kinks), std::move(name)});
  }

  const Kind& kind() const noexcept { return kind_; }

  GammaValues eval(double theta) const {
    const double t = normalize_angle(theta);
    return std::visit([t](const auto& k) { return eval_kind(k, t); }, kind_);
  }

  double gamma(double theta) const { return eval(theta).gamma; }

  /// Angles in (-pi, pi] where gamma'' may jump.
  std::vector<double> kinks() const {
    if (std::holds_alternative<kinds::PiecewiseSgn>(kind_)) return {0.0, kPi};
    if (const auto* c = std::get_if<kinds::Custom>(&kind_)) return c->kinks;
    return {};
  }

  std::string name() const {
    return std::visit(
        [](const auto& k) -> std::string {
          using T = std::decay_t<decltype(k)>;
          if constexpr (std::is_same_v<T, kinds::Isotropic>) return "isotropic";
          else if constexpr (std::is_same_v<T, kinds::MFold>) return "mfold";
          else if constexpr (std::is_same_v<T, kinds::Ellipsoidal>) return "ellipsoidal";
          else if constexpr (std::is_same_v<T, kinds::RiemannianSum>) return "riemannian";
          else if constexpr (std::is_same_v<T, kinds::PiecewiseSgn>) return "piecewise";
          else return k.name;
        },
        kind_);
  }

  /// Name plus parameters, e.g. "mfold(m=3,beta=0.5,theta0=0)".
  std::string describe() const {
    return std::visit(
        [](const auto& k) -> std::string {
          using T = std::decay_t<decltype(k)>;
          if constexpr (std::is_same_v<T, kinds::Isotropic>) return "isotropic";
          else if constexpr (std::is_same_v<T, kinds::MFold>)
            return "mfold(m=" + std::to_string(k.m) + ",beta=" + format_double(k.beta) +
                   ",theta0=" + format_double(k.theta0) + ")";
          else if constexpr (std::is_same_v<T, kinds::Ellipsoidal>)
            return "ellipsoidal(a=" + format_double(k.a) + ",b=" + format_double(k.b) + ")";
          else if constexpr (std::is_same_v<T, kinds::RiemannianSum>) {
            std::string s = "riemannian(";
            for (std::size_t l = 0; l < k.matrices.size(); ++l) {
              const auto& g = k.matrices[l];
              s += (l ? ";" : "") + format_double(g(0, 0)) + "," + format_double(g(0, 1)) + "," +
                   format_double(g(1, 0)) + "," + format_double(g(1, 1));
            }
            return s + ")";
          } else if constexpr (std::is_same_v<T, kinds::PiecewiseSgn>) return "piecewise";
          else return "custom(" + k.name + ")";
        },
        kind_);
  }

 private:
  explicit Anisotropy(Kind k) : kind_(std::move(k)) {}

  static GammaValues eval_kind(const kinds::Isotropic&, double) { return {1.0, 0.0, 0.0}; }

  static GammaValues eval_kind(const kinds::MFold& k, double t) {
    const double arg = k.m * (t - k.theta0);
    const double m = k.m;
    return {1.0 + k.beta * std::cos(arg), -k.beta * m * std::sin(arg),
            -k.beta * m * m * std::cos(arg)};
  }

  static GammaValues eval_kind(const kinds::Ellipsoidal& k, double t) {
    const double c = std::cos(t);
    return detail::sqrt_chain(k.a + k.b * c * c, -k.b * std::sin(2.0 * t),
                              -2.0 * k.b * std::cos(2.0 * t));
  }

  static GammaValues eval_kind(const kinds::RiemannianSum& k, double t) {
    const Eigen::Vector2d n(-std::sin(t), std::cos(t));
    const Eigen::Vector2d dn(-std::cos(t), -std::sin(t));
    GammaValues out{0.0, 0.0, 0.0};
    for (const auto& g : k.matrices) {
      const double q = n.dot(g * n);
      const double dq = 2.0 * dn.dot(g * n);
      const double d2q = 2.0 * (dn.dot(g * dn) - q);
      const GammaValues part = detail::sqrt_chain(q, dq, d2q);
      out.gamma += part.gamma;
      out.dgamma += part.dgamma;
      out.d2gamma += part.d2gamma;
    }
    return out;
  }

  static GammaValues eval_kind(const kinds::PiecewiseSgn&, double t) {
    const double s = std::sin(t);
    const double n1 = -s;
    const double c1 = n1 >= 0.0 ? 4.0 : 1.0;
    const double c = std::cos(t);
    return detail::sqrt_chain(c1 * s * s + c * c, (c1 - 1.0) * std::sin(2.0 * t),
                              2.0 * (c1 - 1.0) * std::cos(2.0 * t));
  }

  static GammaValues eval_kind(const kinds::Custom& k, double t) {
    const GammaValues v = k.evaluator(t);
    if (!(v.gamma > 0.0))
      throw DomainError("custom anisotropy '" + k.name + "' returned gamma <= 0 at theta = " +
                        std::to_string(t));
    return v;
  }

  Kind kind_;
};

/// The 2x2 matrix gamma I + gamma' J + k n n^T with n = (-sin, cos).
inline Eigen::Matrix2d g_matrix(const Anisotropy& a, double k_value, double theta) {
  if (!(k_value >= 0.0)) throw ArgumentError("g_matrix: stabilizer value must be >= 0");
  const GammaValues g = a.eval(theta);
  const double s = std::sin(theta);
  const double c = std::cos(theta);
  Eigen::Matrix2d m;
  m << g.gamma + k_value * s * s, -g.dgamma - k_value * s * c,
      g.dgamma - k_value * s * c, g.gamma + k_value * c * c;
  return m;
}

struct CriticalAngle {
  double theta = 0.0;
  double margin = 0.0;
  double abs_dgamma = 0.0;
};

/// Outcome of scanning 3 gamma(theta) - gamma(theta - pi) over the circle.
struct StabilityReport {
  bool satisfied = false;
  double min_margin = 0.0;
  std::vector<CriticalAngle> critical_angles;
  std::vector<double> violations;
};

namespace detail {

// Minimize f on [lo, hi] by golden-section search.
template <class F>
std::pair<double, double> golden_minimize(F&& f, double lo, double hi, double width) {
  const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
  double x1 = hi - inv_phi * (hi - lo);
  double x2 = lo + inv_phi * (hi - lo);
  double f1 = f(x1);
  double f2 = f(x2);
  while (hi - lo > width) {
    if (f1 <= f2) {
      hi = x2;
      x2 = x1;
      f2 = f1;
      x1 = hi - inv_phi * (hi - lo);
      f1 = f(x1);
    } else {
      lo = x1;
      x1 = x2;
      f1 = f2;
      x2 = lo + inv_phi * (hi - lo);
      f2 = f(x2);
    }
  }
  return f1 <= f2 ? std::pair{x1, f1} : std::pair{x2, f2};
}

}  // namespace detail

/// Checks 3 gamma(theta) >= gamma(theta - pi) everywhere and gamma'(theta*) = 0
/// wherever equality holds.
///
/// The margin is sampled on a uniform grid over [-pi, pi). Every discrete local
/// minimum is refined by golden-section search, and every sign change is
/// bisected to width 1e-6. A refined minimum with margin below
/// 1e-9 max(1, gamma) is a critical angle; it passes if |gamma'| < 1e-6 there.
inline StabilityReport check_energy_stable(const Anisotropy& a, int n_grid = 3600,
                                           double tol = 1e-9) {
  if (n_grid < 360) throw ArgumentError("check_energy_stable: n_grid must be >= 360");
  if (!(tol > 0.0)) throw ArgumentError("check_energy_stable: tol must be > 0");
  constexpr double kDerivTol = 1e-6;

  auto margin = [&a](double t) { return 3.0 * a.gamma(t) - a.gamma(t - kPi); };
  auto band = [&a, tol](double t) { return tol * std::max(1.0, a.gamma(t)); };

  const double dt = kTwoPi / n_grid;
  std::vector<double> grid(n_grid);
  for (int i = 0; i < n_grid; ++i) grid[i] = margin(-kPi + i * dt);

  StabilityReport rep;
  rep.min_margin = *std::min_element(grid.begin(), grid.end());

  auto add_critical = [&](double t, double m) {
    t = normalize_angle(t);
    for (const auto& c : rep.critical_angles)
      if (std::abs(normalize_angle(c.theta - t)) < 1e-6) return;
    rep.critical_angles.push_back({t, m, std::abs(a.eval(t).dgamma)});
  };

  for (int i = 0; i < n_grid; ++i) {
    const double prev = grid[(i + n_grid - 1) % n_grid];
    const double cur = grid[i];
    const double next = grid[(i + 1) % n_grid];
    const double t = -kPi + i * dt;
    if (cur <= prev && cur <= next) {
      auto [tm, fm] = detail::golden_minimize(margin, t - dt, t + dt, 1e-10);
      if (cur < fm) {
        tm = t;
        fm = cur;
      }
      rep.min_margin = std::min(rep.min_margin, fm);
      if (std::abs(fm) < band(tm)) add_critical(tm, fm);
      else if (fm < 0.0) rep.violations.push_back(normalize_angle(tm));
    }
    // Sign change into a genuinely negative region: bisect the crossing.
    if ((cur < 0.0) != (next < 0.0) && std::min(cur, next) < -band(t)) {
      double lo = t;
      double hi = t + dt;
      const bool lo_negative = cur < 0.0;
      while (hi - lo > 1e-6) {
        const double mid = 0.5 * (lo + hi);
        ((margin(mid) < 0.0) == lo_negative ? lo : hi) = mid;
      }
      rep.violations.push_back(normalize_angle(lo_negative ? lo : hi));
    }
  }
  for (int i = 0; i < n_grid; ++i) {
    const double t = -kPi + i * dt;
    if (grid[i] < -band(t)) rep.violations.push_back(t);
  }
  std::sort(rep.violations.begin(), rep.violations.end());
  rep.violations.erase(std::unique(rep.violations.begin(), rep.violations.end()),
                       rep.violations.end());

  bool ok = rep.violations.empty();
  for (const auto& c : rep.critical_angles)
    if (!(c.abs_dgamma < kDerivTol)) ok = false;
  rep.satisfied = ok;
  return rep;
}

}  // namespace anisoflow
