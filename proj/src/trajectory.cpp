#include "flask/trajectory.hpp"

#include <algorithm>
#include <array>
#include <cmath>

namespace flask {

PiecewiseTrajectory::PiecewiseTrajectory(std::vector<LocalFlatPath> segments) {
  for (auto& s : segments) push_back(std::move(s));
}

void PiecewiseTrajectory::push_back(LocalFlatPath seg) {
  if (!(seg.duration > 0.0)) throw Error(ErrorCode::NonPositiveDuration, "segment duration must be positive");
  if (!segments_.empty() && !(seg.dims() == segments_.front().dims())) {
    throw Error(ErrorCode::DimensionMismatch, "segment dimensions differ");
  }
  if (knots_.empty()) knots_.push_back(0.0);
  knots_.push_back(knots_.back() + seg.duration);
  segments_.push_back(std::move(seg));
}

double PiecewiseTrajectory::cost() const {
  double c = 0.0;
  for (const auto& s : segments_) c += s.cost;
  return c;
}

std::pair<int, double> PiecewiseTrajectory::locate(double t) const {
  if (segments_.empty()) throw Error(ErrorCode::OutOfDomain, "empty trajectory");
  const auto it = std::lower_bound(knots_.begin() + 1, knots_.end(), t);
  int i = static_cast<int>(it - knots_.begin()) - 1;
  i = std::clamp(i, 0, static_cast<int>(segments_.size()) - 1);
  const auto& seg = segments_[static_cast<std::size_t>(i)];
  return {i, std::clamp(t - knots_[static_cast<std::size_t>(i)], 0.0, seg.duration)};
}

PathSample PiecewiseTrajectory::eval(double t) const {
  const auto [i, tl] = locate(t);
  return eval_path(segments_[static_cast<std::size_t>(i)], tl);
}

double PiecewiseTrajectory::continuity_error() const {
  double worst = 0.0;
  for (std::size_t k = 1; k < segments_.size(); ++k) {
    const auto& a = segments_[k - 1];
    const auto& b = segments_[k];
    const PathSample end = eval_path(a, a.duration);
    const PathSample begin = eval_path(b, 0.0);
    for (std::size_t j = 0; j < end.z.data().size(); ++j) {
      const double e = std::abs(end.z.data()[j] - begin.z.data()[j]);
      worst = std::max(worst, e / std::max(1.0, std::abs(end.z.data()[j])));
    }
  }
  return worst;
}

void PiecewiseTrajectory::check_continuity(double tol) const {
  const double e = continuity_error();
  if (!(e <= tol)) throw Error(ErrorCode::ValidationError, "segments are not continuous (mismatch " + std::to_string(e) + ")");
}

double path_length(const LocalFlatPath& path) {
  // 8-point Gauss-Legendre on 16 equal pieces.
  static constexpr std::array<double, 8> x = {-0.9602898564975363, -0.7966664774136267, -0.5255324099163290,
                                              -0.1834346424956498, 0.1834346424956498,  0.5255324099163290,
                                              0.7966664774136267,  0.9602898564975363};
  static constexpr std::array<double, 8> w = {0.1012285362903763, 0.2223810344533745, 0.3137066458778873,
                                              0.3626837833783620, 0.3626837833783620, 0.3137066458778873,
                                              0.2223810344533745, 0.1012285362903763};
  constexpr int kPieces = 16;
  const int n = path.dims().n;
  std::array<double, kMaxFlatDim> v{};
  const double h = path.duration / kPieces;
  double total = 0.0;
  for (int p = 0; p < kPieces; ++p) {
    const double mid = (p + 0.5) * h;
    for (std::size_t q = 0; q < x.size(); ++q) {
      eval_derivative(path, mid + 0.5 * h * x[q], 1, std::span<double>(v.data(), static_cast<std::size_t>(n)));
      double s = 0.0;
      for (int i = 0; i < n; ++i) s += v[static_cast<std::size_t>(i)] * v[static_cast<std::size_t>(i)];
      total += 0.5 * h * w[q] * std::sqrt(s);
    }
  }
  return total;
}

double trajectory_length(const PiecewiseTrajectory& traj) {
  double l = 0.0;
  for (const auto& s : traj.segments()) l += path_length(s);
  return l;
}

std::vector<OriginalRow> to_original_space(const PiecewiseTrajectory& traj, const FlatnessMap& map, double dt_out) {
  if (!(dt_out > 0.0)) throw Error(ErrorCode::InvalidArgument, "dt_out must be positive");
  std::vector<OriginalRow> rows;
  if (traj.empty()) return rows;
  const double total = traj.duration();
  const auto steps = static_cast<long>(std::floor(total / dt_out + 1e-9));
  auto emit = [&](double t) {
    const auto [i, tl] = traj.locate(t);
    OriginalRow row;
    row.t = t;
    try {
      const OriginalSample s = map.evaluate_at(traj.segments()[static_cast<std::size_t>(i)], tl);
      row.x = s.x;
      row.u = s.u;
    } catch (const Error&) {
      row.singular = true;
      row.x = StateVec::Constant(map.state_size(), std::nan(""));
      row.u = ControlVec::Constant(map.control_size(), std::nan(""));
    }
    rows.push_back(std::move(row));
  };
  for (long k = 0; k <= steps; ++k) emit(std::min(total, static_cast<double>(k) * dt_out));
  if (total - static_cast<double>(steps) * dt_out > 1e-9) emit(total);
  return rows;
}

Jet state_jet(const FlatState& z, int order) {
  const FlatDims d = z.dims();
  Jet jet = Jet::Zero(d.n, order + 1);
  for (int k = 0; k <= std::min(order, d.r - 1); ++k) {
    for (int i = 0; i < d.n; ++i) jet(i, k) = z(k, i);
  }
  return jet;
}

TrackingReport rk4_tracking(const PiecewiseTrajectory& traj, const FlatnessMap& map, double step, double check_dt) {
  TrackingReport rep;
  if (traj.empty()) return rep;
  const int r = traj.segments().front().dims().r;
  const bool restart = !map.continuous_across_knots(r);
  StateVec x;
  double since = 0.0;  // trajectory time of the last restart
  try {
    for (std::size_t k = 0; k < traj.size(); ++k) {
      const LocalFlatPath& seg = traj.segments()[k];
      const double t0 = traj.knots()[k];
      if (k == 0 || restart) {
        x = map.evaluate_at(seg, 0.0).x;
        since = t0;
      }
      auto control = [&](double tl) { return map.evaluate_at(seg, std::clamp(tl, 0.0, seg.duration)).u; };
      const int checks = std::max(1, static_cast<int>(std::ceil(seg.duration / check_dt - 1e-9)));
      double tl = 0.0;
      for (int c = 1; c <= checks; ++c) {
        const double next = c == checks ? seg.duration : seg.duration * c / checks;
        x = rk4_integrate(map, x, control, tl, next, step);
        tl = next;
        const StateVec ref = map.evaluate_at(seg, tl).x;
        const double elapsed = std::max(t0 + tl - since, 1e-9);
        const double rate = map.state_distance(x, ref) / (1.0 + ref.norm()) / elapsed;
        if (rate > rep.worst_rate) {
          rep.worst_rate = rate;
          rep.worst_time = t0 + tl;
        }
      }
    }
  } catch (const Error&) {
    rep.singular = true;
  }
  return rep;
}

}  // namespace flask
