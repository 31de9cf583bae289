#pragma once

// Sphere geometry, lane-batched forward kinematics and collision checking of
// local flat paths, plus the per-sample limit checks that ride along.

#include <Eigen/Core>

#include <span>
#include <vector>

#include "flask/flat_lqmt.hpp"
#include "flask/flatness.hpp"

namespace flask {

/// Inflation added to every obstacle radius before the strict overlap test.
inline constexpr float kCollisionInflation = 1e-6f;

struct SphereSet {
  std::vector<Eigen::Vector3d> centers;
  std::vector<double> radii;

  std::size_t size() const { return centers.size(); }
  void add(const Eigen::Vector3d& c, double r);
  /// Throws InvalidArgument on non-positive radii or non-finite centers.
  void validate() const;
};

/// Struct-of-arrays float copy of an obstacle set, built once per scene.
struct ObstacleLanes {
  std::vector<float> x, y, z, r;

  explicit ObstacleLanes(const SphereSet& s);
  ObstacleLanes() = default;
  std::size_t size() const { return r.size(); }
};

struct BodySphere {
  int link = 0;             // 0: robot base; 1, 2: arm links
  Eigen::Vector3d offset;   // world-frame offset (base) or (distance along link, 0, 0)
  double radius = 0.1;
};

class RobotGeometry {
 public:
  enum class Kind { Mobile, PlanarArm };

  /// One sphere rigidly translated with the robot position.
  static RobotGeometry mobile(double radius, const Eigen::Vector3d& offset = Eigen::Vector3d::Zero());
  /// Two-link arm in the world z = base.z plane with `per_link` spheres
  /// spread along each link, the last one at the link tip.
  static RobotGeometry planar_arm(double l1, double l2, int per_link, double radius,
                                  const Eigen::Vector3d& base = Eigen::Vector3d::Zero());

  Kind kind() const { return kind_; }
  const std::vector<BodySphere>& spheres() const { return spheres_; }
  int sphere_count() const { return static_cast<int>(spheres_.size()); }
  double l1() const { return l1_; }
  double l2() const { return l2_; }
  const Eigen::Vector3d& base() const { return base_; }

  /// World-frame sphere centers for one original state.
  void fk(const FlatnessMap& map, const StateVec& x, std::span<Eigen::Vector3f> out) const;

 private:
  Kind kind_ = Kind::Mobile;
  std::vector<BodySphere> spheres_;
  double l1_ = 0.0;
  double l2_ = 0.0;
  Eigen::Vector3d base_ = Eigen::Vector3d::Zero();
};

/// Sphere centers for K lanes, sphere-major: index sphere * lanes + lane.
struct LaneCenters {
  int lanes = 0;
  std::vector<float> x, y, z;
};

void batch_fk_spheres(const RobotGeometry& robot, const FlatnessMap& map, std::span<const StateVec> states,
                      LaneCenters& out);

/// Strided partition of sample indices: batch i holds {i, i+S, ..., i+(K-1)S}
/// clipped to [0, N), with S = ceil(N / K).
struct BatchLayout {
  int count = 0;  // N
  int lanes = 8;  // K

  int stride() const { return (count + lanes - 1) / lanes; }
  int batches() const { return stride(); }
  /// Writes the indices of batch i into out and returns how many there are.
  int batch(int i, std::span<int> out) const;
};

struct ValidationConfig {
  double resolution = 0.05;
  int lane_width = 8;
  /// Flat-state box, laid out like FlatState data; empty means unbounded.
  std::vector<double> flat_lo;
  std::vector<double> flat_hi;
  /// |w_i| <= w_max[i]; empty means unbounded.
  std::vector<double> w_max;
  bool original_limits = true;

  void validate(FlatDims dims) const;
};

/// Samples needed so consecutive flat positions are at most `resolution`
/// apart, from an arc-length bound over a 32-interval grid.
int sample_count(const LocalFlatPath& path, const ValidationConfig& cfg);

/// Sample grid actually used: the smallest 2^k + 1 that is >= N. Grids for
/// finer resolutions then contain the coarser ones.
int dyadic_count(int n);

enum class CcReason { None, Collision, FlatBounds, ControlBounds, OriginalLimits, FlatnessSingularity };

std::string_view to_string(CcReason r);

struct CcResult {
  bool valid = true;
  CcReason reason = CcReason::None;
  double t_hit = 0.0;
  int samples = 0;  // samples evaluated before returning

  explicit operator bool() const { return valid; }
};

/// Everything one validation needs, bundled so call sites stay short.
struct CcContext {
  const FlatnessMap* map = nullptr;
  const RobotGeometry* robot = nullptr;
  const ObstacleLanes* obstacles = nullptr;
  const ValidationConfig* cfg = nullptr;
};

/// Lane-batched check: batches of K strided samples, early exit on the first
/// invalid batch.
CcResult flask_cc(const LocalFlatPath& path, const CcContext& ctx);

/// Serial reference over the same samples in time order.
CcResult flask_cc_scalar(const LocalFlatPath& path, const CcContext& ctx);

/// Validates many paths; parallel over paths with OpenMP.
std::vector<CcResult> flask_cc_many(std::span<const LocalFlatPath> paths, const CcContext& ctx);

/// Serial counterpart of flask_cc_many, kept for tests and benchmarks.
std::vector<CcResult> flask_cc_many_serial(std::span<const LocalFlatPath> paths, const CcContext& ctx);

/// Whether a single original state is collision free (start/goal checks).
bool state_collision_free(const StateVec& x, const CcContext& ctx);

}  // namespace flask
