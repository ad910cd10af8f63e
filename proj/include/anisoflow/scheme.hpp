#pragma once

#include <cmath>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <Eigen/SparseLU>

#include "anisoflow/anisotropy.hpp"
#include "anisoflow/curve.hpp"
#include "anisoflow/error.hpp"
#include "anisoflow/format.hpp"
#include "anisoflow/stabilizer.hpp"

namespace anisoflow {

/// Solver parameters shared by the closed and open schemes.
struct RunConfig {
  int n_vertices = 128;
  double tau = 16.0 / (128.0 * 128.0);
  double t_end = 1.0;
  KSource k_source;
  double newton_tol = 1e-12;
  int newton_max_iters = 50;
  double min_edge_factor = 1e-12;
  /// Test-only: use n^m instead of n^{m+1/2} (loses exact area conservation).
  bool frozen_normal = false;

  void validate() const {
    if (!(tau > 0.0)) throw ArgumentError("run config: tau must be > 0");
    if (!(newton_tol > 0.0)) throw ArgumentError("run config: newton_tol must be > 0");
    if (newton_max_iters < 1) throw ArgumentError("run config: newton_max_iters must be >= 1");
  }
};

/// Contact-line parameters of the open scheme.
struct DewettingParams {
  double sigma = 0.0;
  double eta = 100.0;

  void validate() const {
    if (!(std::abs(sigma) < 1.0)) throw ArgumentError("dewetting: |sigma| must be < 1");
    if (!(eta > 0.0)) throw ArgumentError("dewetting: eta must be > 0");
  }
};

/// Curve plus nodal chemical potential at time t_m.
struct SolverState {
  PolygonalCurve curve;
  std::vector<double> mu;
  double time = 0.0;
  long step = 0;
};

struct StepStats {
  int newton_iters = 0;
  double residual_norm = 0.0;
  double area_after = 0.0;
  double energy_after = 0.0;
  /// Residual level attributable to rounding of the converged iterate.
  double roundoff_floor = 0.0;
  std::vector<double> residual_history;
};

namespace detail {

// Unknowns are numbered node by node as (x_i, y_i, mu_i); on open curves y_0
// and y_N are eliminated. Residual rows come in two blocks: first one
// "normal velocity" row per node, then the two "weighted curvature" rows per
// node (x then y, with the eliminated y rows dropped).
class Scheme {
 public:
  Scheme(const PolygonalCurve& prev, const Anisotropy& a, const RunConfig& cfg,
         std::optional<DewettingParams> wet = std::nullopt)
      : prev_(prev.vertices()),
        closed_(prev.is_closed()),
        nv_(prev.vertex_count()),
        nseg_(prev.segment_count()),
        tau_(cfg.tau),
        frozen_normal_(cfg.frozen_normal),
        wet_(wet) {
    if (closed_ == wet_.has_value())
      throw ArgumentError(closed_ ? "closed curve given dewetting parameters"
                                  : "open curve requires dewetting parameters");
    check_lengths(prev, cfg.min_edge_factor);
    len_.resize(nseg_);
    hm_.resize(nseg_);
    g_.resize(nseg_);
    for (std::size_t j = 0; j < nseg_; ++j) {
      hm_[j] = prev.segment(j);
      len_[j] = hm_[j].norm();
      const double theta = std::atan2(hm_[j].y(), hm_[j].x());
      g_[j] = g_matrix(a, cfg.k_source(theta), theta);
    }
    build_index();
  }

  std::size_t unknowns() const noexcept { return n_unknowns_; }
  std::size_t rows() const noexcept { return n_rows_; }

  /// Column of (node, component) or -1 if eliminated.
  long col(std::size_t node, int comp) const { return col_[3 * node + comp]; }

  Eigen::VectorXd pack(std::span<const Point> x, std::span<const double> mu) const {
    Eigen::VectorXd u(n_unknowns_);
    for (std::size_t i = 0; i < nv_; ++i)
      for (int c = 0; c < 3; ++c)
        if (col(i, c) >= 0) u[col(i, c)] = c < 2 ? x[i][c] : mu[i];
    return u;
  }

  void unpack(const Eigen::VectorXd& u, std::vector<Point>& x, std::vector<double>& mu) const {
    x.resize(nv_);
    mu.resize(nv_);
    for (std::size_t i = 0; i < nv_; ++i) {
      x[i] = Point(u[col(i, 0)], col(i, 1) >= 0 ? u[col(i, 1)] : 0.0);
      mu[i] = u[col(i, 2)];
    }
  }

  Eigen::VectorXd residual(std::span<const Point> x, std::span<const double> mu) const {
    check_sizes(x, mu);
    Eigen::VectorXd r = Eigen::VectorXd::Zero(static_cast<long>(n_rows_));
    for (std::size_t j = 0; j < nseg_; ++j) {
      const std::size_t a = j;
      const std::size_t b = (j + 1) % nv_;
      const Point hn = x[b] - x[a];
      const Point w = weight(j, hn);
      const Point da = x[a] - prev_[a];
      const Point db = x[b] - prev_[b];
      const double flux = (mu[b] - mu[a]) / len_[j];
      r[row_a(a)] += w.dot(da) / tau_ - flux;
      r[row_a(b)] += w.dot(db) / tau_ + flux;
      const Point ghn = g_[j] * hn / len_[j];
      add_b(r, a, mu[a] * w + ghn);
      add_b(r, b, mu[b] * w - ghn);
    }
    if (wet_) {
      const std::size_t last = nv_ - 1;
      r[row_b(0, 0)] += -(x[0].x() - prev_[0].x()) / (wet_->eta * tau_) - wet_->sigma;
      r[row_b(last, 0)] += -(x[last].x() - prev_[last].x()) / (wet_->eta * tau_) + wet_->sigma;
    }
    return r;
  }

  Eigen::SparseMatrix<double> jacobian(std::span<const Point> x,
                                       std::span<const double> mu) const {
    check_sizes(x, mu);
    std::vector<Eigen::Triplet<double>> trip;
    trip.reserve(nseg_ * 48);
    auto put = [&](long row, long column, double v) {
      if (row >= 0 && column >= 0 && v != 0.0) trip.emplace_back(row, column, v);
    };
    auto put_x = [&](long row, std::size_t node, const Point& v) {
      put(row, col(node, 0), v.x());
      put(row, col(node, 1), v.y());
    };
    // dw/dhn (rows: w components, columns: hn components).
    Eigen::Matrix2d m;
    m << 0.0, -0.25, 0.25, 0.0;
    if (frozen_normal_) m.setZero();

    for (std::size_t j = 0; j < nseg_; ++j) {
      const std::size_t a = j;
      const std::size_t b = (j + 1) % nv_;
      const Point hn = x[b] - x[a];
      const Point w = weight(j, hn);
      const Point da = x[a] - prev_[a];
      const Point db = x[b] - prev_[b];
      const double inv_len = 1.0 / len_[j];
      const Point mta = m.transpose() * da;
      const Point mtb = m.transpose() * db;

      put_x(row_a(a), a, (w - mta) / tau_);
      put_x(row_a(a), b, mta / tau_);
      put_x(row_a(b), b, (w + mtb) / tau_);
      put_x(row_a(b), a, -mtb / tau_);
      put(row_a(a), col(a, 2), inv_len);
      put(row_a(a), col(b, 2), -inv_len);
      put(row_a(b), col(a, 2), -inv_len);
      put(row_a(b), col(b, 2), inv_len);

      const Eigen::Matrix2d gl = g_[j] * inv_len;
      const Eigen::Matrix2d ba_xa = -mu[a] * m - gl;
      const Eigen::Matrix2d ba_xb = mu[a] * m + gl;
      const Eigen::Matrix2d bb_xa = -mu[b] * m + gl;
      const Eigen::Matrix2d bb_xb = mu[b] * m - gl;
      for (int c = 0; c < 2; ++c) {
        const long ra = row_b(a, c);
        const long rb = row_b(b, c);
        put(ra, col(a, 2), w[c]);
        put(rb, col(b, 2), w[c]);
        put_x(ra, a, ba_xa.row(c).transpose());
        put_x(ra, b, ba_xb.row(c).transpose());
        put_x(rb, a, bb_xa.row(c).transpose());
        put_x(rb, b, bb_xb.row(c).transpose());
      }
    }
    if (wet_) {
      const std::size_t last = nv_ - 1;
      put(row_b(0, 0), col(0, 0), -1.0 / (wet_->eta * tau_));
      put(row_b(last, 0), col(last, 0), -1.0 / (wet_->eta * tau_));
    }
    Eigen::SparseMatrix<double> jac(static_cast<long>(n_rows_), static_cast<long>(n_unknowns_));
    jac.setFromTriplets(trip.begin(), trip.end());
    return jac;
  }

  /// Discrete weighted curvature consistent with the second residual block at
  /// X^{m+1} = X^m: the per-node least-squares solution of the lumped system.
  std::vector<double> consistent_mu() const {
    std::vector<Point> sum_w(nv_, Point::Zero());
    std::vector<Point> rhs(nv_, Point::Zero());
    for (std::size_t j = 0; j < nseg_; ++j) {
      const std::size_t a = j;
      const std::size_t b = (j + 1) % nv_;
      const Point w = weight(j, hm_[j]);
      const Point ghn = g_[j] * hm_[j] / len_[j];
      sum_w[a] += w;
      sum_w[b] += w;
      rhs[a] -= ghn;
      rhs[b] += ghn;
    }
    std::vector<double> mu(nv_, 0.0);
    for (std::size_t i = 0; i < nv_; ++i) {
      const double ww = sum_w[i].squaredNorm();
      mu[i] = ww > 0.0 ? sum_w[i].dot(rhs[i]) / ww : 0.0;
    }
    if (!closed_ && nv_ >= 3) {
      mu.front() = mu[1];
      mu.back() = mu[nv_ - 2];
    }
    return mu;
  }

 private:
  // 1/2 |h^m| n^{m+1/2} = -(h^m + h^{m+1})^perp / 4, with v^perp = (v_y, -v_x).
  Point weight(std::size_t j, const Point& hn) const {
    const Point s = frozen_normal_ ? Point(2.0 * hm_[j]) : Point(hm_[j] + hn);
    return Point(-s.y(), s.x()) / 4.0;
  }

  long row_a(std::size_t node) const { return static_cast<long>(node); }
  long row_b(std::size_t node, int comp) const { return rowb_[2 * node + comp]; }

  void add_b(Eigen::VectorXd& r, std::size_t node, const Point& v) const {
    for (int c = 0; c < 2; ++c)
      if (row_b(node, c) >= 0) r[row_b(node, c)] += v[c];
  }

  void build_index() {
    col_.assign(3 * nv_, -1);
    rowb_.assign(2 * nv_, -1);
    long next_col = 0;
    long next_row = static_cast<long>(nv_);
    for (std::size_t i = 0; i < nv_; ++i) {
      const bool pinned_y = !closed_ && (i == 0 || i == nv_ - 1);
      for (int c = 0; c < 3; ++c)
        if (!(c == 1 && pinned_y)) col_[3 * i + c] = next_col++;
      for (int c = 0; c < 2; ++c)
        if (!(c == 1 && pinned_y)) rowb_[2 * i + c] = next_row++;
    }
    n_unknowns_ = static_cast<std::size_t>(next_col);
    n_rows_ = static_cast<std::size_t>(next_row);
  }

  void check_sizes(std::span<const Point> x, std::span<const double> mu) const {
    if (x.size() != nv_ || mu.size() != nv_)
      throw ArgumentError("scheme: candidate arrays must have one entry per vertex");
  }

  static void check_lengths(const PolygonalCurve& c, double factor) {
    double total = 0.0;
    for (std::size_t j = 0; j < c.segment_count(); ++j) total += c.segment(j).norm();
    const double threshold = factor * total / static_cast<double>(c.segment_count());
    for (std::size_t j = 0; j < c.segment_count(); ++j)
      if (!(c.segment(j).norm() >= threshold) || !(c.segment(j).norm() > 0.0))
        throw DegenerateMeshError("degenerate mesh: segment " + std::to_string(j) +
                                      " is shorter than the admissible length",
                                  j);
  }

  std::vector<Point> prev_;
  bool closed_;
  std::size_t nv_;
  std::size_t nseg_;
  double tau_;
  bool frozen_normal_;
  std::optional<DewettingParams> wet_;
  std::vector<double> len_;
  std::vector<Point> hm_;
  std::vector<Eigen::Matrix2d> g_;
  std::vector<long> col_;
  std::vector<long> rowb_;
  std::size_t n_unknowns_ = 0;
  std::size_t n_rows_ = 0;
};

struct NewtonResult {
  std::vector<Point> x;
  std::vector<double> mu;
  int iterations = 0;
  double residual_norm = 0.0;
  double roundoff_floor = 0.0;
  std::vector<double> history;
};

// Per-row size of the residual error caused by rounding the iterate:
// 16 eps sum_j |J_ij u_j|.
inline Eigen::VectorXd residual_roundoff(const Eigen::SparseMatrix<double>& jac,
                                         const Eigen::VectorXd& u) {
  Eigen::VectorXd acc = Eigen::VectorXd::Zero(jac.rows());
  for (int k = 0; k < jac.outerSize(); ++k)
    for (Eigen::SparseMatrix<double>::InnerIterator it(jac, k); it; ++it)
      acc[it.row()] += std::abs(it.value() * u[it.col()]);
  return 16.0 * std::numeric_limits<double>::epsilon() * acc;
}

// Max-norm of the residual after discounting each row's rounding level.
inline double excess_residual(const Eigen::VectorXd& r, const Eigen::VectorXd& floor) {
  if (floor.size() != r.size()) return r.lpNorm<Eigen::Infinity>();
  return (r.cwiseAbs() - floor).cwiseMax(0.0).maxCoeff();
}

// Plain Newton with a sparse LU solve per iteration. Stops when every residual
// row is below tol or below the level at which it can still be evaluated
// (which only matters once segments become very short).
inline NewtonResult newton_solve(const Scheme& scheme, std::vector<Point> x,
                                 std::vector<double> mu, const RunConfig& cfg) {
  NewtonResult out;
  Eigen::VectorXd r = scheme.residual(x, mu);
  double norm = r.lpNorm<Eigen::Infinity>();
  out.history.push_back(norm);
  Eigen::SparseLU<Eigen::SparseMatrix<double>, Eigen::COLAMDOrdering<int>> lu;
  bool analyzed = false;
  Eigen::VectorXd floor;
  while (!(norm < cfg.newton_tol) && !(excess_residual(r, floor) < cfg.newton_tol)) {
    if (out.iterations >= cfg.newton_max_iters || !std::isfinite(norm))
      throw StepFailure("Newton iteration did not converge (residual " + format_double(norm) +
                            " after " + std::to_string(out.iterations) + " iterations)",
                        out.history);
    Eigen::SparseMatrix<double> jac = scheme.jacobian(x, mu);
    jac.makeCompressed();
    if (!analyzed) {
      lu.analyzePattern(jac);
      analyzed = true;
    }
    lu.factorize(jac);
    if (lu.info() != Eigen::Success)
      throw StepFailure("Newton iteration hit a singular Jacobian", out.history);
    const Eigen::VectorXd delta = lu.solve(-r);
    const Eigen::VectorXd u = scheme.pack(x, mu) + delta;
    scheme.unpack(u, x, mu);
    floor = residual_roundoff(jac, u);
    ++out.iterations;
    r = scheme.residual(x, mu);
    norm = r.lpNorm<Eigen::Infinity>();
    out.history.push_back(norm);
  }
  out.x = std::move(x);
  out.mu = std::move(mu);
  out.residual_norm = norm;
  out.roundoff_floor = floor.size() ? floor.maxCoeff() : 0.0;
  return out;
}

}  // namespace detail

}  // namespace anisoflow
