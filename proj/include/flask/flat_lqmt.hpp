#pragma once

// Closed-form algebra for the flat chain-of-integrators system
//
//   z = (y, y', ..., y^(r-1)),   z' = A z + B w,   w = y^(r)
//
// A is the block shift matrix and B selects the last block; neither is ever
// materialized. Every operation below works on the per-dimension Taylor
// structure instead, so costs are O(r^2 n) rather than dense (rn)^3 algebra.

#include <Eigen/Core>

#include <span>
#include <vector>

#include "flask/error.hpp"

namespace flask {

struct FlatDims {
  int n = 1;  // flat output dimension
  int r = 2;  // pseudo-control derivative order

  int state_size() const { return n * r; }
  bool operator==(const FlatDims&) const = default;
};

/// Stacked flat output and its first r-1 derivatives, blocked as
/// (y, y', ..., y^(r-1)), each block of length n.
class FlatState {
 public:
  FlatState() = default;
  explicit FlatState(FlatDims dims);
  FlatState(FlatDims dims, std::vector<double> data);

  const FlatDims& dims() const { return dims_; }
  std::span<const double> data() const { return data_; }
  std::span<double> data() { return data_; }

  std::span<const double> block(int k) const {
    return std::span<const double>(data_).subspan(static_cast<std::size_t>(k * dims_.n), dims_.n);
  }
  std::span<double> block(int k) {
    return std::span<double>(data_).subspan(static_cast<std::size_t>(k * dims_.n), dims_.n);
  }
  double operator()(int k, int i) const { return data_[static_cast<std::size_t>(k * dims_.n + i)]; }
  double& operator()(int k, int i) { return data_[static_cast<std::size_t>(k * dims_.n + i)]; }

  /// Time reversal: negates every odd derivative block.
  FlatState reversed() const;

  bool operator==(const FlatState&) const = default;

 private:
  FlatDims dims_{};
  std::vector<double> data_;
};

/// Weighting of the local-path cost  int w^T Rw w dt + rho T.
class CostWeights {
 public:
  /// Rw = I, rho given.
  CostWeights(int n, double rho);
  /// Rw must be symmetric positive definite (checked by Cholesky).
  CostWeights(Eigen::MatrixXd rw, double rho);

  const Eigen::MatrixXd& rw() const { return rw_; }
  const Eigen::MatrixXd& rw_inverse() const { return rw_inv_; }
  double rho() const { return rho_; }
  int n() const { return static_cast<int>(rw_.rows()); }

  /// Nonzero c when Rw == c I exactly, zero otherwise.
  double scalar_weight() const { return scalar_; }

 private:
  Eigen::MatrixXd rw_;
  Eigen::MatrixXd rw_inv_;
  double rho_;
  double scalar_ = 0.0;
};

/// Controllability Gramian over [0, T]. Block (i, j) equals
/// core(i, j) * Rw^-1, where core is the r x r scalar matrix
///   T^(2r-1-i-j) / ((r-1-i)! (r-1-j)! (2r-1-i-j)).
struct Gramian {
  FlatDims dims;
  double duration = 0.0;
  Eigen::MatrixXd core;    // r x r
  Eigen::MatrixXd rw_inv;  // n x n

  Eigen::MatrixXd dense() const;
};

/// One closed-form polynomial segment in flat space.
///
/// y_coeffs(i, k) is the coefficient of t^k of the i-th flat output
/// (n x 2r); w_coeffs is the pseudo-control polynomial (n x r).
struct LocalFlatPath {
  FlatState z0;
  FlatState zf;
  double duration = 0.0;
  Eigen::MatrixXd y_coeffs;
  Eigen::MatrixXd w_coeffs;
  double cost = 0.0;

  const FlatDims& dims() const { return z0.dims(); }
};

struct PathSample {
  FlatState z;
  Eigen::VectorXd w;
};

enum class MinTimeStatus {
  Interior,     // stationary point of C_loc(T)
  Degenerate,   // d_T vanishes for every T; clamped to the lower bound
  AtLowerBound, // no interior minimum, lower bracket end is best
  AtUpperBound, // no interior minimum, upper bracket end is best
};

struct MinTime {
  double duration = 0.0;
  MinTimeStatus status = MinTimeStatus::Interior;
};

struct TimeBracket {
  double lower = 1e-3;
  double upper = 60.0;
};

/// Lower clamp for degenerate minimum-time solves.
inline constexpr double kMinSegmentDuration = 1e-3;

/// Free evolution e^{At} z0 (t may be negative).
FlatState phi(const FlatState& z0, double t);

Gramian gramian(FlatDims dims, const CostWeights& weights, double duration);

/// Fixed-duration optimal local path (minimum effort plus rho T).
LocalFlatPath solve_bvp_fixed_time(const FlatState& z0, const FlatState& zf, double duration,
                                   const CostWeights& weights);

/// C_loc(T) = d_T^T G_T^-1 d_T + rho T without building the path.
double bvp_cost(const FlatState& z0, const FlatState& zf, double duration, const CostWeights& weights);

/// Analytic dC_loc/dT.
double bvp_cost_derivative(const FlatState& z0, const FlatState& zf, double duration,
                           const CostWeights& weights);

/// r = 2 with Rw = c I: picks, among positive roots of the stationarity
/// quartic, the one with the smallest C_loc (ties to the smaller T).
MinTime min_time_quartic_r2(const FlatState& z0, const FlatState& zf, const CostWeights& weights);

/// Any r: 64-sample log-spaced scan of dC/dT over the bracket, then
/// bisection on each sign change from negative to positive.
MinTime min_time_general(const FlatState& z0, const FlatState& zf, const CostWeights& weights,
                         TimeBracket bracket = {});

/// Dispatches to the quartic path when r = 2 and Rw is scalar, otherwise to
/// the general solver, and returns the path at the optimal duration.
LocalFlatPath solve_bvp_min_time(const FlatState& z0, const FlatState& zf, const CostWeights& weights,
                                 TimeBracket bracket = {});

MinTime optimal_duration(const FlatState& z0, const FlatState& zf, const CostWeights& weights,
                         TimeBracket bracket = {});

/// Constant pseudo-control w0 applied for `duration`.
LocalFlatPath propagate(const FlatState& z0, std::span<const double> w0, double duration,
                        const CostWeights& weights);

/// Evaluates the flat state and pseudo-control at t in [0, T]. Times within
/// 1e-12 past either end are clamped; anything further throws OutOfDomain.
PathSample eval_path(const LocalFlatPath& path, double t);

/// k-th derivative of the flat output polynomial (any k >= 0).
void eval_derivative(const LocalFlatPath& path, double t, int order, std::span<double> out);

/// Exact value of int_0^T w^T Rw w dt.
double control_effort(const LocalFlatPath& path, const CostWeights& weights);

/// Prefix of a path on [0, tau]; cost recomputed exactly.
LocalFlatPath truncate(const LocalFlatPath& path, double tau, const CostWeights& weights);

/// Path re-expressed on the reversed time axis: y_rev(s) = y(T - s).
LocalFlatPath reverse_path(const LocalFlatPath& path);

}  // namespace flask
