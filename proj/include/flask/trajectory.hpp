#pragma once

// Piecewise flat trajectories: a chain of local paths glued at knots, plus
// the conversions and measurements done on whole trajectories.

#include <vector>

#include "flask/flat_lqmt.hpp"
#include "flask/flatness.hpp"

namespace flask {

class PiecewiseTrajectory {
 public:
  PiecewiseTrajectory() = default;
  explicit PiecewiseTrajectory(std::vector<LocalFlatPath> segments);

  const std::vector<LocalFlatPath>& segments() const { return segments_; }
  /// t_0 = 0 < t_1 < ... < t_M.
  const std::vector<double>& knots() const { return knots_; }
  std::size_t size() const { return segments_.size(); }
  bool empty() const { return segments_.empty(); }
  double duration() const { return knots_.empty() ? 0.0 : knots_.back(); }
  double cost() const;

  void push_back(LocalFlatPath seg);

  /// Segment owning time t and the local time inside it. Knots belong to the
  /// segment on their left; t = 0 belongs to the first segment.
  std::pair<int, double> locate(double t) const;
  PathSample eval(double t) const;

  /// Largest mismatch between consecutive segment end and start states.
  double continuity_error() const;
  /// Throws ValidationError when continuity_error() exceeds tol.
  void check_continuity(double tol = 1e-9) const;

 private:
  std::vector<LocalFlatPath> segments_;
  std::vector<double> knots_;
};

/// Arc length of the flat output y(t) (the position components).
double path_length(const LocalFlatPath& path);
double trajectory_length(const PiecewiseTrajectory& traj);

struct OriginalRow {
  double t = 0.0;
  StateVec x;
  ControlVec u;
  bool singular = false;
};

/// Uniform table of (x, u) every dt_out seconds, the final time included.
std::vector<OriginalRow> to_original_space(const PiecewiseTrajectory& traj, const FlatnessMap& map, double dt_out);

/// Jet built from a flat state alone; derivatives of order >= r are zero.
Jet state_jet(const FlatState& z, int order);

struct TrackingReport {
  /// max over checks of error / (1 + |x|), divided by elapsed seconds
  double worst_rate = 0.0;
  double worst_time = 0.0;
  bool singular = false;
};

/// Integrates the original dynamics with the flatness controls under RK4 and
/// compares against alpha(z(t)) every `check_dt`. Maps whose state jumps at
/// knots restart from alpha at every segment start.
TrackingReport rk4_tracking(const PiecewiseTrajectory& traj, const FlatnessMap& map, double step = 1e-3,
                            double check_dt = 0.05);

}  // namespace flask
