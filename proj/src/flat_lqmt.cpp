#include "flask/flat_lqmt.hpp"

#include <Eigen/Cholesky>
#include <Eigen/LU>

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <mutex>
#include <string>

#include "flask/quartic.hpp"

namespace flask {
namespace {

constexpr int kMaxCachedOrder = 12;
constexpr int kStackStates = 64;

double factorial(int k) {
  double f = 1.0;
  for (int i = 2; i <= k; ++i) f *= i;
  return f;
}

// k (k-1) ... (k-order+1)
double falling(int k, int order) {
  double f = 1.0;
  for (int i = 0; i < order; ++i) f *= (k - i);
  return f;
}

double binomial(int k, int j) { return factorial(k) / (factorial(j) * factorial(k - j)); }

// T-free part of the Gramian core: S(T) = T * D H D with D = diag(T^(r-1-i)).
Eigen::MatrixXd unit_core(int r) {
  Eigen::MatrixXd h(r, r);
  for (int i = 0; i < r; ++i) {
    for (int j = 0; j < r; ++j) {
      const int pi = r - 1 - i;
      const int pj = r - 1 - j;
      h(i, j) = 1.0 / (factorial(pi) * factorial(pj) * (pi + pj + 1));
    }
  }
  return h;
}

Eigen::MatrixXd invert_core(int r) {
  const Eigen::MatrixXd h = unit_core(r);
  Eigen::LLT<Eigen::MatrixXd> llt(h);
  if (llt.info() != Eigen::Success) {
    throw Error(ErrorCode::SingularGramian, "Gramian core factorization failed for r=" + std::to_string(r));
  }
  return llt.solve(Eigen::MatrixXd::Identity(r, r));
}

// H^-1 is T-independent, so it is factorized once per order.
const Eigen::MatrixXd& core_inverse(int r) {
  static std::array<Eigen::MatrixXd, kMaxCachedOrder + 1> cache;
  static std::array<std::once_flag, kMaxCachedOrder + 1> flags;
  if (r <= kMaxCachedOrder) {
    std::call_once(flags[static_cast<std::size_t>(r)], [r] { cache[static_cast<std::size_t>(r)] = invert_core(r); });
    return cache[static_cast<std::size_t>(r)];
  }
  thread_local Eigen::MatrixXd scratch;
  scratch = invert_core(r);
  return scratch;
}

const Eigen::PartialPivLU<Eigen::MatrixXd>& refinement_lu(int r) {
  auto build = [r] {
    Eigen::MatrixXd m(r, r);
    for (int j = 0; j < r; ++j) {
      for (int k = 0; k < r; ++k) m(j, k) = falling(k + r, j);
    }
    return Eigen::PartialPivLU<Eigen::MatrixXd>(m);
  };
  static std::array<Eigen::PartialPivLU<Eigen::MatrixXd>, kMaxCachedOrder + 1> cache;
  static std::array<std::once_flag, kMaxCachedOrder + 1> flags;
  if (r <= kMaxCachedOrder) {
    std::call_once(flags[static_cast<std::size_t>(r)], [&] { cache[static_cast<std::size_t>(r)] = build(); });
    return cache[static_cast<std::size_t>(r)];
  }
  thread_local Eigen::PartialPivLU<Eigen::MatrixXd> scratch;
  scratch = build();
  return scratch;
}

void require_same_dims(const FlatState& a, const FlatState& b) {
  if (!(a.dims() == b.dims())) throw Error(ErrorCode::DimensionMismatch, "flat states have different dimensions");
}

void require_positive(double duration) {
  if (!(duration > 0.0) || !std::isfinite(duration)) {
    throw Error(ErrorCode::NonPositiveDuration, "duration must be positive, got " + std::to_string(duration));
  }
}

void require_weights(const FlatDims& dims, const CostWeights& weights) {
  if (weights.n() != dims.n) throw Error(ErrorCode::DimensionMismatch, "cost weight size does not match n");
}

void require_gramian_scale(int r, double duration) {
  if (std::pow(duration, 2 * r - 1) < std::numeric_limits<double>::min()) {
    throw Error(ErrorCode::SingularGramian, "duration below floating-point scale");
  }
}

// Quadratic form a^T Rw b with a scalar fast path.
double weighted_dot(const CostWeights& weights, const double* a, const double* b, int n) {
  const double c = weights.scalar_weight();
  double acc = 0.0;
  if (c != 0.0) {
    for (int i = 0; i < n; ++i) acc += a[i] * b[i];
    return c * acc;
  }
  const Eigen::MatrixXd& rw = weights.rw();
  for (int i = 0; i < n; ++i) {
    double row = 0.0;
    for (int j = 0; j < n; ++j) row += rw(i, j) * b[j];
    acc += a[i] * row;
  }
  return acc;
}

// Evaluates C_loc(T) and optionally its derivative with stack storage when
// the state fits, heap otherwise.
struct CostEval {
  double value;
  double derivative;
};

CostEval evaluate_cost(const FlatState& z0, const FlatState& zf, double duration, const CostWeights& weights,
                       bool with_derivative) {
  const int n = z0.dims().n;
  const int r = z0.dims().r;
  const int size = n * r;
  std::array<double, kStackStates> e_stack{};
  std::array<double, kStackStates> de_stack{};
  std::vector<double> e_heap;
  std::vector<double> de_heap;
  double* e = e_stack.data();
  double* de = de_stack.data();
  if (size > kStackStates) {
    e_heap.assign(static_cast<std::size_t>(size), 0.0);
    de_heap.assign(static_cast<std::size_t>(size), 0.0);
    e = e_heap.data();
    de = de_heap.data();
  }

  const double T = duration;
  for (int k = 0; k < r; ++k) {
    const int p = r - 1 - k;
    const double tp = std::pow(T, p);
    for (int i = 0; i < n; ++i) {
      // d_k = zf_k - sum_j z0_{k+j} T^j / j!, and d'_k = -sum_{j>=1} z0_{k+j} T^(j-1)/(j-1)!
      double drift = 0.0;
      double drift_rate = 0.0;
      double term = 1.0;
      for (int j = 0; k + j < r; ++j) {
        drift += z0(k + j, i) * term;
        if (k + j + 1 < r) drift_rate += z0(k + j + 1, i) * term;
        term *= T / (j + 1);
      }
      const double d = zf(k, i) - drift;
      e[k * n + i] = d / tp;
      if (with_derivative) de[k * n + i] = -drift_rate / tp - p * d / (tp * T);
    }
  }

  const Eigen::MatrixXd& hinv = core_inverse(r);
  double q = 0.0;
  double dq = 0.0;
  for (int a = 0; a < r; ++a) {
    for (int b = 0; b < r; ++b) {
      q += hinv(a, b) * weighted_dot(weights, e + a * n, e + b * n, n);
      if (with_derivative) dq += hinv(a, b) * weighted_dot(weights, de + a * n, e + b * n, n);
    }
  }
  CostEval out{q / T + weights.rho() * T, 0.0};
  if (with_derivative) out.derivative = -q / (T * T) + 2.0 * dq / T + weights.rho();
  return out;
}

bool is_stationary_rest(const FlatState& z0, const FlatState& zf) {
  const int r = z0.dims().r;
  const int n = z0.dims().n;
  for (int k = 1; k < r; ++k) {
    for (int i = 0; i < n; ++i) {
      if (z0(k, i) != 0.0 || zf(k, i) != 0.0) return false;
    }
  }
  for (int i = 0; i < n; ++i) {
    if (z0(0, i) != zf(0, i)) return false;
  }
  return true;
}

double horner_derivative(const Eigen::MatrixXd& coeffs, int row, double t, int order) {
  const int degree = static_cast<int>(coeffs.cols()) - 1;
  double acc = 0.0;
  for (int k = degree; k >= order; --k) acc = acc * t + coeffs(row, k) * falling(k, order);
  return acc;
}

double clamp_time(const LocalFlatPath& path, double t) {
  constexpr double kSlack = 1e-12;
  if (t < -kSlack || t > path.duration + kSlack || !std::isfinite(t)) {
    throw Error(ErrorCode::OutOfDomain,
                "t=" + std::to_string(t) + " outside [0, " + std::to_string(path.duration) + "]");
  }
  return std::clamp(t, 0.0, path.duration);
}

}  // namespace

FlatState::FlatState(FlatDims dims) : dims_(dims), data_(static_cast<std::size_t>(dims.state_size()), 0.0) {
  if (dims.n < 1 || dims.r < 1) throw Error(ErrorCode::InvalidArgument, "flat dimensions must be positive");
}

FlatState::FlatState(FlatDims dims, std::vector<double> data) : dims_(dims), data_(std::move(data)) {
  if (dims.n < 1 || dims.r < 1) throw Error(ErrorCode::InvalidArgument, "flat dimensions must be positive");
  if (static_cast<int>(data_.size()) != dims.state_size()) {
    throw Error(ErrorCode::DimensionMismatch, "flat state expects " + std::to_string(dims.state_size()) +
                                                  " entries, got " + std::to_string(data_.size()));
  }
  for (double v : data_) {
    if (!std::isfinite(v)) throw Error(ErrorCode::InvalidArgument, "flat state entries must be finite");
  }
}

FlatState FlatState::reversed() const {
  FlatState out = *this;
  for (int k = 1; k < dims_.r; k += 2) {
    for (double& v : out.block(k)) v = -v;
  }
  return out;
}

CostWeights::CostWeights(int n, double rho) : CostWeights(Eigen::MatrixXd::Identity(n, n), rho) {}

CostWeights::CostWeights(Eigen::MatrixXd rw, double rho) : rw_(std::move(rw)), rho_(rho) {
  if (rw_.rows() < 1 || rw_.rows() != rw_.cols()) throw Error(ErrorCode::InvalidArgument, "Rw must be square");
  if (!(rho_ >= 0.0)) throw Error(ErrorCode::InvalidArgument, "rho must be nonnegative");
  if (!rw_.isApprox(rw_.transpose(), 1e-12)) throw Error(ErrorCode::InvalidArgument, "Rw must be symmetric");
  Eigen::LLT<Eigen::MatrixXd> llt(rw_);
  if (llt.info() != Eigen::Success) throw Error(ErrorCode::InvalidArgument, "Rw must be positive definite");
  rw_inv_ = llt.solve(Eigen::MatrixXd::Identity(rw_.rows(), rw_.cols()));
  const double c = rw_(0, 0);
  if ((rw_ - c * Eigen::MatrixXd::Identity(rw_.rows(), rw_.cols())).cwiseAbs().maxCoeff() == 0.0) scalar_ = c;
}

Eigen::MatrixXd Gramian::dense() const {
  const int n = dims.n;
  Eigen::MatrixXd g(dims.state_size(), dims.state_size());
  for (int i = 0; i < dims.r; ++i) {
    for (int j = 0; j < dims.r; ++j) g.block(i * n, j * n, n, n) = core(i, j) * rw_inv;
  }
  return g;
}

FlatState phi(const FlatState& z0, double t) {
  const int r = z0.dims().r;
  const int n = z0.dims().n;
  FlatState out(z0.dims());
  for (int k = 0; k < r; ++k) {
    for (int i = 0; i < n; ++i) {
      double acc = 0.0;
      double term = 1.0;
      for (int j = 0; k + j < r; ++j) {
        acc += z0(k + j, i) * term;
        term *= t / (j + 1);
      }
      out(k, i) = acc;
    }
  }
  return out;
}

Gramian gramian(FlatDims dims, const CostWeights& weights, double duration) {
  require_positive(duration);
  if (weights.n() != dims.n) throw Error(ErrorCode::DimensionMismatch, "cost weight size does not match n");
  Gramian g{dims, duration, unit_core(dims.r), weights.rw_inverse()};
  for (int i = 0; i < dims.r; ++i) {
    for (int j = 0; j < dims.r; ++j) g.core(i, j) *= std::pow(duration, 2 * dims.r - 1 - i - j);
  }
  return g;
}

double bvp_cost(const FlatState& z0, const FlatState& zf, double duration, const CostWeights& weights) {
  require_same_dims(z0, zf);
  require_positive(duration);
  require_weights(z0.dims(), weights);
  return evaluate_cost(z0, zf, duration, weights, false).value;
}

double bvp_cost_derivative(const FlatState& z0, const FlatState& zf, double duration,
                           const CostWeights& weights) {
  require_same_dims(z0, zf);
  require_positive(duration);
  require_weights(z0.dims(), weights);
  return evaluate_cost(z0, zf, duration, weights, true).derivative;
}

LocalFlatPath solve_bvp_fixed_time(const FlatState& z0, const FlatState& zf, double duration,
                                   const CostWeights& weights) {
  require_same_dims(z0, zf);
  require_positive(duration);
  require_weights(z0.dims(), weights);
  const int n = z0.dims().n;
  const int r = z0.dims().r;
  require_gramian_scale(r, duration);
  const double T = duration;

  const FlatState drift = phi(z0, T);
  const Eigen::MatrixXd& hinv = core_inverse(r);

  // Costate-like multipliers c_k = sum_j (S^-1)_kj d_j; Rw cancels from the
  // optimal control, leaving w(t) = sum_k c_k (T - t)^(r-1-k) / (r-1-k)!.
  Eigen::MatrixXd c = Eigen::MatrixXd::Zero(n, r);
  for (int k = 0; k < r; ++k) {
    const int pk = r - 1 - k;
    for (int j = 0; j < r; ++j) {
      const int pj = r - 1 - j;
      const double s = hinv(k, j) / std::pow(T, 1 + pk + pj);
      for (int i = 0; i < n; ++i) c(i, k) += s * (zf(j, i) - drift(j, i));
    }
  }

  LocalFlatPath path;
  path.z0 = z0;
  path.zf = zf;
  path.duration = T;
  path.w_coeffs = Eigen::MatrixXd::Zero(n, r);
  for (int k = 0; k < r; ++k) {
    const int p = r - 1 - k;
    for (int q = 0; q <= p; ++q) {
      const double scale = ((q % 2) ? -1.0 : 1.0) * std::pow(T, p - q) / (factorial(p - q) * factorial(q));
      path.w_coeffs.col(q) += scale * c.col(k);
    }
  }
  path.y_coeffs = Eigen::MatrixXd::Zero(n, 2 * r);
  for (int k = 0; k < r; ++k) {
    for (int i = 0; i < n; ++i) path.y_coeffs(i, k) = z0(k, i) / factorial(k);
  }
  for (int m = 0; m < r; ++m) path.y_coeffs.col(m + r) = path.w_coeffs.col(m) * (factorial(m) / factorial(m + r));

  // One pass of iterative refinement on the top r coefficients. In scaled
  // variables (row j times T^j, unknown m times T^(m+r)) the correction
  // system is the constant matrix falling(m + r, j).
  const Eigen::PartialPivLU<Eigen::MatrixXd>& lu = refinement_lu(r);
  Eigen::VectorXd residual(r);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < r; ++j) residual(j) = (zf(j, i) - horner_derivative(path.y_coeffs, i, T, j)) * std::pow(T, j);
    const Eigen::VectorXd delta = lu.solve(residual);
    for (int m = 0; m < r; ++m) {
      const double step = delta(m) / std::pow(T, m + r);
      path.y_coeffs(i, m + r) += step;
      path.w_coeffs(i, m) += step * (factorial(m + r) / factorial(m));
    }
  }
  path.cost = evaluate_cost(z0, zf, T, weights, false).value;
  return path;
}

MinTime min_time_quartic_r2(const FlatState& z0, const FlatState& zf, const CostWeights& weights) {
  require_same_dims(z0, zf);
  require_weights(z0.dims(), weights);
  if (z0.dims().r != 2) throw Error(ErrorCode::InvalidArgument, "quartic minimum-time solve requires r = 2");
  const double c = weights.scalar_weight();
  if (c == 0.0) throw Error(ErrorCode::InvalidArgument, "quartic minimum-time solve requires Rw = c I");
  const double rho = weights.rho();
  if (!(rho > 0.0)) throw Error(ErrorCode::InvalidArgument, "minimum-time solve requires rho > 0");

  const int n = z0.dims().n;
  double dist2 = 0.0;    // |yf - y0|^2
  double flow = 0.0;     // (v0 + vf) . (yf - y0)
  double energy = 0.0;   // |v0|^2 + v0.vf + |vf|^2
  double speed2 = 0.0;
  for (int i = 0; i < n; ++i) {
    const double dy = zf(0, i) - z0(0, i);
    const double v0 = z0(1, i);
    const double vf = zf(1, i);
    dist2 += dy * dy;
    flow += (v0 + vf) * dy;
    energy += v0 * v0 + v0 * vf + vf * vf;
    speed2 += v0 * v0 + vf * vf;
  }
  if (dist2 == 0.0 && speed2 == 0.0) return {kMinSegmentDuration, MinTimeStatus::Degenerate};

  auto cost = [&](double T) {
    return c * (12.0 * dist2 / (T * T * T) - 12.0 * flow / (T * T) + 4.0 * energy / T) + rho * T;
  };
  // rho T^4 - 4c(energy) T^2 + 24c(flow) T - 36c(dist2) = 0
  const RealRoots roots = solve_quartic(rho, 0.0, -4.0 * c * energy, 24.0 * c * flow, -36.0 * c * dist2);
  double best_t = 0.0;
  double best_cost = std::numeric_limits<double>::infinity();
  for (double T : roots) {
    if (!(T > 0.0)) continue;
    const double value = cost(T);
    if (value < best_cost) {
      best_cost = value;
      best_t = T;
    }
  }
  if (!(best_t > 0.0)) return {kMinSegmentDuration, MinTimeStatus::Degenerate};
  if (best_t < kMinSegmentDuration) return {kMinSegmentDuration, MinTimeStatus::AtLowerBound};
  return {best_t, MinTimeStatus::Interior};
}

MinTime min_time_general(const FlatState& z0, const FlatState& zf, const CostWeights& weights,
                         TimeBracket bracket) {
  require_same_dims(z0, zf);
  require_weights(z0.dims(), weights);
  if (!(bracket.lower > 0.0) || !(bracket.upper > bracket.lower) || !std::isfinite(bracket.upper)) {
    throw Error(ErrorCode::InvalidBracket, "need 0 < lower < upper");
  }
  if (!(weights.rho() > 0.0)) throw Error(ErrorCode::InvalidArgument, "minimum-time solve requires rho > 0");
  if (is_stationary_rest(z0, zf)) return {bracket.lower, MinTimeStatus::Degenerate};

  constexpr int kSamples = 64;
  std::array<double, kSamples> times{};
  std::array<double, kSamples> slopes{};
  const double ratio = std::log(bracket.upper / bracket.lower);
  for (int i = 0; i < kSamples; ++i) {
    times[i] = (i == kSamples - 1) ? bracket.upper : bracket.lower * std::exp(ratio * i / (kSamples - 1));
    slopes[i] = evaluate_cost(z0, zf, times[i], weights, true).derivative;
  }

  MinTime best{bracket.lower, MinTimeStatus::AtLowerBound};
  double best_cost = std::numeric_limits<double>::infinity();
  auto consider = [&](double T, MinTimeStatus status) {
    const double value = evaluate_cost(z0, zf, T, weights, false).value;
    if (value < best_cost || (value == best_cost && T < best.duration)) {
      best_cost = value;
      best = {T, status};
    }
  };

  if (slopes[0] > 0.0) consider(bracket.lower, MinTimeStatus::AtLowerBound);
  for (int i = 0; i + 1 < kSamples; ++i) {
    if (!(slopes[i] < 0.0 && slopes[i + 1] >= 0.0)) continue;
    double lo = times[i];
    double hi = times[i + 1];
    for (int it = 0; it < 200 && hi - lo > 4.0 * std::numeric_limits<double>::epsilon() * hi; ++it) {
      const double mid = 0.5 * (lo + hi);
      if (evaluate_cost(z0, zf, mid, weights, true).derivative < 0.0) {
        lo = mid;
      } else {
        hi = mid;
      }
    }
    const double g_lo = std::abs(evaluate_cost(z0, zf, lo, weights, true).derivative);
    const double g_hi = std::abs(evaluate_cost(z0, zf, hi, weights, true).derivative);
    consider(g_lo < g_hi ? lo : hi, MinTimeStatus::Interior);
  }
  if (slopes[kSamples - 1] < 0.0) consider(bracket.upper, MinTimeStatus::AtUpperBound);
  if (!std::isfinite(best_cost)) {
    // Only maxima inside the bracket: the better end wins.
    const double c_lo = evaluate_cost(z0, zf, bracket.lower, weights, false).value;
    const double c_hi = evaluate_cost(z0, zf, bracket.upper, weights, false).value;
    best = c_lo <= c_hi ? MinTime{bracket.lower, MinTimeStatus::AtLowerBound}
                        : MinTime{bracket.upper, MinTimeStatus::AtUpperBound};
  }
  return best;
}

MinTime optimal_duration(const FlatState& z0, const FlatState& zf, const CostWeights& weights,
                         TimeBracket bracket) {
  if (z0.dims().r == 2 && weights.scalar_weight() != 0.0) {
    MinTime t = min_time_quartic_r2(z0, zf, weights);
    if (t.status == MinTimeStatus::Degenerate) t.duration = bracket.lower;
    return t;
  }
  return min_time_general(z0, zf, weights, bracket);
}

LocalFlatPath solve_bvp_min_time(const FlatState& z0, const FlatState& zf, const CostWeights& weights,
                                 TimeBracket bracket) {
  return solve_bvp_fixed_time(z0, zf, optimal_duration(z0, zf, weights, bracket).duration, weights);
}

LocalFlatPath propagate(const FlatState& z0, std::span<const double> w0, double duration,
                        const CostWeights& weights) {
  require_positive(duration);
  require_weights(z0.dims(), weights);
  const int n = z0.dims().n;
  const int r = z0.dims().r;
  if (static_cast<int>(w0.size()) != n) throw Error(ErrorCode::DimensionMismatch, "w0 must have length n");
  for (double v : w0) {
    if (!std::isfinite(v)) throw Error(ErrorCode::InvalidArgument, "w0 must be finite");
  }

  LocalFlatPath path;
  path.z0 = z0;
  path.duration = duration;
  path.w_coeffs = Eigen::MatrixXd::Zero(n, r);
  path.y_coeffs = Eigen::MatrixXd::Zero(n, 2 * r);
  for (int i = 0; i < n; ++i) {
    path.w_coeffs(i, 0) = w0[static_cast<std::size_t>(i)];
    for (int k = 0; k < r; ++k) path.y_coeffs(i, k) = z0(k, i) / factorial(k);
    path.y_coeffs(i, r) = w0[static_cast<std::size_t>(i)] / factorial(r);
  }
  path.zf = FlatState(z0.dims());
  for (int k = 0; k < r; ++k) {
    for (int i = 0; i < n; ++i) path.zf(k, i) = horner_derivative(path.y_coeffs, i, duration, k);
  }
  path.cost = weighted_dot(weights, w0.data(), w0.data(), n) * duration + weights.rho() * duration;
  return path;
}

PathSample eval_path(const LocalFlatPath& path, double t) {
  t = clamp_time(path, t);
  const int n = path.dims().n;
  const int r = path.dims().r;
  PathSample s{FlatState(path.dims()), Eigen::VectorXd(n)};
  for (int k = 0; k < r; ++k) {
    for (int i = 0; i < n; ++i) s.z(k, i) = horner_derivative(path.y_coeffs, i, t, k);
  }
  for (int i = 0; i < n; ++i) s.w(i) = horner_derivative(path.w_coeffs, i, t, 0);
  return s;
}

void eval_derivative(const LocalFlatPath& path, double t, int order, std::span<double> out) {
  t = clamp_time(path, t);
  const int n = path.dims().n;
  if (static_cast<int>(out.size()) != n) throw Error(ErrorCode::DimensionMismatch, "output must have length n");
  for (int i = 0; i < n; ++i) out[static_cast<std::size_t>(i)] = horner_derivative(path.y_coeffs, i, t, order);
}

double control_effort(const LocalFlatPath& path, const CostWeights& weights) {
  const int n = path.dims().n;
  const int cols = static_cast<int>(path.w_coeffs.cols());
  const double T = path.duration;
  // int_0^T t^(a+b) dt
  std::vector<double> moments(static_cast<std::size_t>(2 * cols), 0.0);
  for (int k = 0; k < 2 * cols; ++k) moments[static_cast<std::size_t>(k)] = std::pow(T, k + 1) / (k + 1);
  const Eigen::MatrixXd& rw = weights.rw();
  double total = 0.0;
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      if (rw(i, j) == 0.0) continue;
      double acc = 0.0;
      for (int a = 0; a < cols; ++a) {
        for (int b = 0; b < cols; ++b) {
          acc += path.w_coeffs(i, a) * path.w_coeffs(j, b) * moments[static_cast<std::size_t>(a + b)];
        }
      }
      total += rw(i, j) * acc;
    }
  }
  return total;
}

LocalFlatPath truncate(const LocalFlatPath& path, double tau, const CostWeights& weights) {
  require_positive(tau);
  tau = clamp_time(path, tau);
  LocalFlatPath out = path;
  out.duration = tau;
  out.zf = eval_path(path, tau).z;
  out.cost = control_effort(out, weights) + weights.rho() * tau;
  return out;
}

LocalFlatPath reverse_path(const LocalFlatPath& path) {
  const int r = path.dims().r;
  const double T = path.duration;
  auto reflect = [T](const Eigen::MatrixXd& coeffs) {
    const int cols = static_cast<int>(coeffs.cols());
    Eigen::MatrixXd out = Eigen::MatrixXd::Zero(coeffs.rows(), cols);
    for (int k = 0; k < cols; ++k) {
      for (int j = 0; j <= k; ++j) {
        const double s = binomial(k, j) * std::pow(T, k - j) * ((j % 2) ? -1.0 : 1.0);
        out.col(j) += s * coeffs.col(k);
      }
    }
    return out;
  };
  LocalFlatPath out;
  out.z0 = path.zf.reversed();
  out.zf = path.z0.reversed();
  out.duration = T;
  out.y_coeffs = reflect(path.y_coeffs);
  out.w_coeffs = reflect(path.w_coeffs) * ((r % 2) ? -1.0 : 1.0);
  out.cost = path.cost;
  return out;
}

}  // namespace flask
