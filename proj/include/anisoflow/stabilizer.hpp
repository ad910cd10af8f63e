#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "anisoflow/anisotropy.hpp"
#include "anisoflow/error.hpp"

namespace anisoflow {

struct AuxiliaryPQ {
  double p = 0.0;
  double q = 0.0;
};

/// P_alpha(phi, theta) = 2 sqrt(gamma^2 + alpha gamma sin^2 phi) and
/// Q(phi, theta) = gamma(theta - phi) + gamma cos phi + gamma' sin phi.
inline AuxiliaryPQ auxiliary_pq(const Anisotropy& a, double theta, double phi, double alpha) {
  if (!(alpha >= 0.0)) throw ArgumentError("auxiliary_pq: alpha must be >= 0");
  const GammaValues g = a.eval(theta);
  const double s = std::sin(phi);
  return {2.0 * std::sqrt(g.gamma * g.gamma + alpha * g.gamma * s * s),
          a.gamma(theta - phi) + g.gamma * std::cos(phi) + g.dgamma * s};
}

/// F_alpha = P_alpha^2 - Q^2.
inline double f_value(const Anisotropy& a, double theta, double phi, double alpha) {
  if (!(alpha >= 0.0)) throw ArgumentError("f_value: alpha must be >= 0");
  const GammaValues g = a.eval(theta);
  const double s = std::sin(phi);
  const double q = a.gamma(theta - phi) + g.gamma * std::cos(phi) + g.dgamma * s;
  return 4.0 * g.gamma * (g.gamma + alpha * s * s) - q * q;
}

namespace detail {

// Smallest alpha making F_alpha(phi, theta) >= 0 at a single phi:
// (Q^2 - 4 gamma^2) / (4 gamma sin^2 phi). Q - 2 gamma is formed without the
// catastrophic 1 + cos(phi) - 2 cancellation.
inline double k0_ratio(const Anisotropy& a, const GammaValues& g, double theta, double phi) {
  const double s = std::sin(phi);
  const double half = std::sin(0.5 * phi);
  const double q_minus =
      (a.gamma(theta - phi) - g.gamma) - 2.0 * g.gamma * half * half + g.dgamma * s;
  const double q_plus = q_minus + 4.0 * g.gamma;
  return q_minus * q_plus / (4.0 * g.gamma * s * s);
}

template <class F>
std::pair<double, double> golden_maximize(F&& f, double lo, double hi, double width) {
  auto [x, v] = golden_minimize([&f](double t) { return -f(t); }, lo, hi, width);
  return {x, -v};
}

}  // namespace detail

/// Minimal stabilizing function k0 at one angle.
///
/// k0 is the clamped supremum over phi of (Q^2 - 4 gamma^2) / (4 gamma sin^2 phi).
/// The supremand is sampled on a uniform phi grid (augmented with the phi that
/// put theta - phi on a declared kink), every discrete local maximum is refined by
/// golden-section search, and the removable endpoints are handled separately:
///  - phi -> 0: the limit (gamma''(theta^-/+) - gamma(theta)) / 2, grid kept
///    outside |phi| < 1e-3;
///  - phi -> pi: at critical angles (3 gamma(theta) = gamma(theta - pi)) the limit
///    (gamma''(theta - pi) + gamma(theta)) / 2 with the same 1e-3 band,
///    elsewhere the grid runs up to |sin phi| = 1e-6 so that a violated
///    stability condition shows up as a blow-up.
inline double k0_at(const Anisotropy& a, double theta, int phi_samples = 2001) {
  if (phi_samples < 2) throw ArgumentError("k0_at: phi_samples must be >= 2");
  constexpr double kDivergence = 1e8;
  constexpr double kZeroBand = 1e-3;
  constexpr double kSinBand = 1e-6;
  constexpr double kSide = 1e-9;

  const GammaValues g = a.eval(theta);
  const double margin = 3.0 * g.gamma - a.gamma(theta - kPi);
  const bool critical = std::abs(margin) < 1e-9 * std::max(1.0, g.gamma);

  auto admissible = [&](double phi) {
    if (std::abs(phi) < kZeroBand) return false;
    const double to_pi = kPi - std::abs(phi);
    if (critical) return to_pi >= kZeroBand;
    return std::abs(std::sin(phi)) >= kSinBand;
  };
  auto ratio = [&](double phi) { return detail::k0_ratio(a, g, theta, phi); };

  std::vector<double> phis;
  phis.reserve(static_cast<std::size_t>(phi_samples) + 8);
  for (int i = 1; i <= phi_samples; ++i) phis.push_back(-kPi + kTwoPi * i / phi_samples);
  for (double kink : a.kinks()) phis.push_back(normalize_angle(theta - kink));
  // Points at the edges of the excluded bands.
  const double pi_band = critical ? kZeroBand : std::asin(kSinBand);
  for (double edge : {kZeroBand, -kZeroBand, kPi - pi_band, -(kPi - pi_band)}) phis.push_back(edge);
  std::erase_if(phis, [&](double p) { return !admissible(p); });
  std::sort(phis.begin(), phis.end());
  phis.erase(std::unique(phis.begin(), phis.end()), phis.end());

  std::vector<double> vals(phis.size());
  for (std::size_t i = 0; i < phis.size(); ++i) vals[i] = ratio(phis[i]);

  double best = 0.0;
  double best_phi = 0.0;
  for (std::size_t i = 0; i < phis.size(); ++i) {
    const double left = i > 0 ? vals[i - 1] : -INFINITY;
    const double right = i + 1 < phis.size() ? vals[i + 1] : -INFINITY;
    if (!(vals[i] >= left && vals[i] >= right)) continue;
    double v = vals[i];
    double p = phis[i];
    const double lo = i > 0 ? phis[i - 1] : phis[i];
    const double hi = i + 1 < phis.size() ? phis[i + 1] : phis[i];
    // Refine only inside one admissible piece of the grid.
    if (hi > lo && admissible(0.5 * (lo + phis[i])) && admissible(0.5 * (phis[i] + hi))) {
      auto [pr, vr] = detail::golden_maximize(ratio, lo, hi, 1e-10);
      if (vr > v) {
        v = vr;
        p = pr;
      }
    }
    if (v > best) {
      best = v;
      best_phi = p;
    }
  }

  for (double side : {-kSide, kSide}) {
    best = std::max(best, 0.5 * (a.eval(theta + side).d2gamma - g.gamma));
    if (critical) best = std::max(best, 0.5 * (a.eval(theta - kPi + side).d2gamma + g.gamma));
  }

  if (!(best <= kDivergence))
    throw DivergenceError("k0 diverges at theta = " + std::to_string(theta) +
                              " (phi = " + std::to_string(best_phi) +
                              "); the energy-stable condition is violated",
                          theta);
  return std::max(0.0, best);
}

/// Sampled k0 on a periodic grid with piecewise-linear interpolation.
class StabilizerTable {
 public:
  StabilizerTable() = default;

  StabilizerTable(std::vector<double> thetas, std::vector<double> values)
      : thetas_(std::move(thetas)), values_(std::move(values)) {
    if (thetas_.size() != values_.size() || thetas_.size() < 2)
      throw ConstructionError("stabilizer table: need >= 2 samples with matching sizes");
    for (std::size_t i = 0; i < thetas_.size(); ++i) {
      if (!(values_[i] >= 0.0)) throw ConstructionError("stabilizer table: negative k0 value");
      if (i > 0 && !(thetas_[i] > thetas_[i - 1]))
        throw ConstructionError("stabilizer table: sample angles must be strictly increasing");
    }
    if (thetas_.back() - thetas_.front() > kTwoPi + 1e-12)
      throw ConstructionError("stabilizer table: samples span more than one period");
  }

  const std::vector<double>& thetas() const noexcept { return thetas_; }
  const std::vector<double>& values() const noexcept { return values_; }
  std::size_t size() const noexcept { return thetas_.size(); }

  /// Periodic piecewise-linear interpolation; exact at the samples.
  double operator()(double theta) const {
    if (thetas_.empty()) return 0.0;
    const double t0 = thetas_.front();
    // Map into [t0, t0 + 2 pi).
    double t = t0 + std::fmod(theta - t0, kTwoPi);
    if (t < t0) t += kTwoPi;
    const auto it = std::upper_bound(thetas_.begin(), thetas_.end(), t);
    if (it == thetas_.end()) {
      // Between the last sample and the first one shifted by a period.
      const double tl = thetas_.back();
      const double tr = t0 + kTwoPi;
      if (tr - tl <= 1e-12) return values_.back();
      const double w = (t - tl) / (tr - tl);
      return (1.0 - w) * values_.back() + w * values_.front();
    }
    const std::size_t j = static_cast<std::size_t>(it - thetas_.begin());
    const double tl = thetas_[j - 1];
    const double tr = thetas_[j];
    const double w = (t - tl) / (tr - tl);
    return (1.0 - w) * values_[j - 1] + w * values_[j];
  }

 private:
  std::vector<double> thetas_;
  std::vector<double> values_;
};

/// k0 at n_samples uniform angles in [-pi, pi] (both endpoints included; their
/// values are averaged since they are the same angle).
inline StabilizerTable build_table(const Anisotropy& a, int n_samples = 20,
                                   int phi_samples = 2001) {
  if (n_samples < 2) throw ArgumentError("build_table: n_samples must be >= 2");
  std::vector<double> thetas(n_samples);
  std::vector<double> values(n_samples);
  for (int i = 0; i < n_samples; ++i) {
    thetas[i] = -kPi + kTwoPi * i / (n_samples - 1);
    values[i] = k0_at(a, thetas[i], phi_samples);
  }
  const double shared = 0.5 * (values.front() + values.back());
  values.front() = shared;
  values.back() = shared;
  return {std::move(thetas), std::move(values)};
}

inline double k_of_theta(const StabilizerTable& table, double theta) { return table(theta); }

/// Source of the stabilizing function used by the solvers.
class KSource {
 public:
  /// k = 0 everywhere.
  static KSource zero() { return KSource(); }
  static KSource table(StabilizerTable t) { return scaled(std::move(t), 1.0); }
  static KSource scaled(StabilizerTable t, double factor) {
    if (!(factor >= 1.0)) throw ArgumentError("k source: scale factor must be >= 1");
    KSource s;
    s.table_ = std::move(t);
    s.factor_ = factor;
    s.has_table_ = true;
    return s;
  }

  double operator()(double theta) const { return has_table_ ? factor_ * table_(theta) : 0.0; }

  bool has_table() const noexcept { return has_table_; }
  double factor() const noexcept { return factor_; }
  const StabilizerTable& stabilizer_table() const noexcept { return table_; }

  std::string describe() const {
    if (!has_table_) return "zero";
    if (factor_ == 1.0) return "k0";
    return "k0_scaled(" + std::to_string(factor_) + ")";
  }

 private:
  StabilizerTable table_;
  double factor_ = 1.0;
  bool has_table_ = false;
};

/// (1/|h|) (G_k(theta) h_hat) . (h_hat - h) - (|h_hat| gamma(theta_hat) - |h| gamma(theta)),
/// where theta, theta_hat are the inclinations of h and h_hat.
inline double local_estimate_residual(const Anisotropy& a,
                                      const std::function<double(double)>& k_fn,
                                      const Eigen::Vector2d& h, const Eigen::Vector2d& h_hat) {
  const double lh = h.norm();
  const double lhh = h_hat.norm();
  if (!(lh > 0.0) || !(lhh > 0.0))
    throw ArgumentError("local_estimate_residual: vectors must be nonzero");
  const double theta = std::atan2(h.y(), h.x());
  const double theta_hat = std::atan2(h_hat.y(), h_hat.x());
  const Eigen::Matrix2d gk = g_matrix(a, k_fn(theta), theta);
  return (gk * h_hat).dot(h_hat - h) / lh - (lhh * a.gamma(theta_hat) - lh * a.gamma(theta));
}

}  // namespace anisoflow
