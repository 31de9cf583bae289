#pragma once

// Differential-flatness maps for the supported robot families. Each map turns
// a jet of the flat output (y, y', y'', ...) into an original-space state and
// control, and can run the original dynamics for consistency checks.

#include <Eigen/Core>

#include <array>
#include <functional>
#include <memory>
#include <string>
#include <string_view>

#include "flask/flat_lqmt.hpp"

namespace flask {

inline constexpr int kMaxFlatDim = 8;
inline constexpr int kMaxJetOrder = 4;
inline constexpr double kGravity = 9.81;

/// Column k holds y^(k). Fixed capacity so per-sample evaluation never allocates.
using Jet = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::ColMajor, kMaxFlatDim, kMaxJetOrder + 1>;
using StateVec = Eigen::Matrix<double, Eigen::Dynamic, 1, Eigen::ColMajor, 18, 1>;
using ControlVec = Eigen::Matrix<double, Eigen::Dynamic, 1, Eigen::ColMajor, kMaxFlatDim, 1>;

/// Derivatives 0..order of the flat output polynomial at t.
Jet path_jet(const LocalFlatPath& path, double t, int order);

// ---------------------------------------------------------------- unicycle

inline constexpr double kSpeedEps = 1e-6;

struct UnicycleState {
  double x = 0.0;
  double y = 0.0;
  double theta = 0.0;  // (-pi, pi]
};

struct UnicycleResult {
  UnicycleState state;
  double v = 0.0;
  double omega = 0.0;
};

/// Throws SpeedSingularity when the planar speed is below kSpeedEps.
UnicycleResult unicycle_alpha_beta(const FlatState& z, std::span<const double> w, int kappa);

// --------------------------------------------------------------- quadrotor

struct QuadrotorParams {
  double mass = 1.0;
  Eigen::Matrix3d inertia = Eigen::Vector3d(0.1, 0.1, 0.2).asDiagonal();
  double gravity = kGravity;
};

struct QuadrotorState {
  Eigen::Vector3d p = Eigen::Vector3d::Zero();
  Eigen::Matrix3d rot = Eigen::Matrix3d::Identity();
  Eigen::Vector3d v = Eigen::Vector3d::Zero();
  Eigen::Vector3d omega = Eigen::Vector3d::Zero();  // body frame
};

struct QuadrotorControl {
  double thrust = 0.0;
  Eigen::Vector3d torque = Eigen::Vector3d::Zero();
};

/// Yaw and its first two derivatives.
using YawJet = std::array<double, 3>;

/// Needs p..p^(3) (jet with at least 4 columns).
QuadrotorState quadrotor_alpha(const QuadrotorParams& params, const Jet& p, const YawJet& psi);
/// Needs p..p^(4) (jet with 5 columns).
QuadrotorControl quadrotor_beta(const QuadrotorParams& params, const Jet& p, const YawJet& psi);

// -------------------------------------------------------- planar quadrotor

struct PlanarQuadrotorParams {
  double mass = 0.034;
  double inertia = 1e-4;
  double arm = 0.1;
  double gravity = kGravity;
};

struct PlanarQuadrotorState {
  double y = 0.0;
  double z = 0.0;
  double phi = 0.0;
  double ydot = 0.0;
  double zdot = 0.0;
  double phidot = 0.0;
};

struct PlanarQuadrotorResult {
  PlanarQuadrotorState state;
  double f1 = 0.0;
  double f2 = 0.0;
};

/// Needs (y, z) up to the fourth derivative.
PlanarQuadrotorResult planar_quadrotor_alpha_beta(const PlanarQuadrotorParams& params, const Jet& jet);

// ------------------------------------------------------------- manipulator

/// M(q), C(q, qdot) (Coriolis, centrifugal and gravity) and B(q).
struct DynamicsTerms {
  int dof = 2;
  std::function<Eigen::MatrixXd(const Eigen::VectorXd&)> mass;
  std::function<Eigen::VectorXd(const Eigen::VectorXd&, const Eigen::VectorXd&)> bias;
  std::function<Eigen::MatrixXd(const Eigen::VectorXd&)> gain;

  static DynamicsTerms identity(int dof);
  static DynamicsTerms diagonal(const Eigen::VectorXd& masses);
};

struct TwoLinkParams {
  double l1 = 1.0;
  double l2 = 1.0;
  double m1 = 1.0;
  double m2 = 1.0;
  double lc1 = 0.5;
  double lc2 = 0.5;
  double i1 = 1.0 / 12.0;
  double i2 = 1.0 / 12.0;
  double gravity = 0.0;  // along -y of the arm plane
};

DynamicsTerms two_link_dynamics(const TwoLinkParams& params);

struct ManipulatorState {
  Eigen::VectorXd q;
  Eigen::VectorXd qdot;
};

struct ManipulatorResult {
  ManipulatorState state;
  Eigen::VectorXd torque;
};

/// Throws SingularActuation when B(q) is not invertible.
ManipulatorResult manipulator_alpha_beta(const FlatState& z, std::span<const double> w, const DynamicsTerms& dyn);

// ------------------------------------------------------- polymorphic maps

struct OriginalSample {
  StateVec x;
  ControlVec u;
};

class FlatnessMap {
 public:
  virtual ~FlatnessMap() = default;

  virtual std::string_view name() const = 0;
  /// Flat output dimension n.
  virtual int flat_dim() const = 0;
  /// Highest flat derivative that alpha/beta consume.
  virtual int jet_order() const = 0;
  virtual int state_size() const = 0;
  virtual int control_size() const = 0;

  /// alpha and beta together; throws the map's singularity errors.
  virtual OriginalSample evaluate(const Jet& jet) const = 0;
  /// Flat output recovered from an original state.
  virtual Eigen::VectorXd h(const StateVec& x) const = 0;
  /// Original-space state/control limits.
  virtual bool within_limits(const OriginalSample& s) const = 0;
  /// Right-hand side x' = f(x, u) of the original dynamics.
  virtual StateVec dynamics(const StateVec& x, const ControlVec& u) const = 0;
  /// Difference between two states (handles angles and rotations).
  virtual double state_distance(const StateVec& a, const StateVec& b) const;
  /// Whether the original state is continuous across segment knots for
  /// paths planned at the given order r.
  virtual bool continuous_across_knots(int r) const { return r > jet_order() - 1; }
  /// Maps whose limits can be broken between samples without showing at
  /// any sample (e.g. a heading flip at zero speed) override both of these.
  virtual bool checks_between_samples() const { return false; }
  virtual bool consistent_between(const StateVec& a, const StateVec& b, double dt) const {
    (void)a; (void)b; (void)dt;
    return true;
  }
  /// World-frame position of the base link (first three entries padded).
  virtual Eigen::Vector3d position(const StateVec& x) const = 0;

  OriginalSample evaluate_at(const LocalFlatPath& path, double t) const { return evaluate(path_jet(path, t, jet_order())); }
};

struct UnicycleLimits {
  double v_max = 1.0;
  double omega_max = 1.5;
};

class UnicycleMap final : public FlatnessMap {
 public:
  explicit UnicycleMap(UnicycleLimits limits = {}, int kappa = 0);
  std::string_view name() const override { return "unicycle"; }
  int flat_dim() const override { return 2; }
  int jet_order() const override { return 2; }
  int state_size() const override { return 3; }
  int control_size() const override { return 2; }
  OriginalSample evaluate(const Jet& jet) const override;
  Eigen::VectorXd h(const StateVec& x) const override;
  bool within_limits(const OriginalSample& s) const override;
  StateVec dynamics(const StateVec& x, const ControlVec& u) const override;
  double state_distance(const StateVec& a, const StateVec& b) const override;
  bool checks_between_samples() const override { return true; }
  bool consistent_between(const StateVec& a, const StateVec& b, double dt) const override;
  Eigen::Vector3d position(const StateVec& x) const override { return {x(0), x(1), 0.0}; }
  const UnicycleLimits& limits() const { return limits_; }
  int kappa() const { return kappa_; }

 private:
  UnicycleLimits limits_;
  int kappa_;
};

struct QuadrotorLimits {
  double v_max = 4.0;
  double omega_max = 8.0;
  double thrust_max_g = 1.5;  // multiple of m g
  double torque_max = 2.0;    // per body axis
};

/// State vector: p (3), R column-major (9), v (3), omega (3). Control: f, tau.
class QuadrotorMap final : public FlatnessMap {
 public:
  explicit QuadrotorMap(QuadrotorParams params = {}, QuadrotorLimits limits = {});
  std::string_view name() const override { return "quadrotor"; }
  int flat_dim() const override { return 3; }
  int jet_order() const override { return 4; }
  int state_size() const override { return 18; }
  int control_size() const override { return 4; }
  OriginalSample evaluate(const Jet& jet) const override;
  Eigen::VectorXd h(const StateVec& x) const override;
  bool within_limits(const OriginalSample& s) const override;
  StateVec dynamics(const StateVec& x, const ControlVec& u) const override;
  Eigen::Vector3d position(const StateVec& x) const override { return x.head<3>(); }
  const QuadrotorParams& params() const { return params_; }
  const QuadrotorLimits& limits() const { return limits_; }

  static StateVec pack(const QuadrotorState& s);
  static QuadrotorState unpack(const StateVec& x);

 private:
  QuadrotorParams params_;
  QuadrotorLimits limits_;
};

struct PlanarQuadrotorLimits {
  double thrust_max_g = 0.65;  // per motor, multiple of m g
};

/// State vector: y, z, phi, ydot, zdot, phidot. Control: f1, f2.
class PlanarQuadrotorMap final : public FlatnessMap {
 public:
  explicit PlanarQuadrotorMap(PlanarQuadrotorParams params = {}, PlanarQuadrotorLimits limits = {});
  std::string_view name() const override { return "planar_quadrotor"; }
  int flat_dim() const override { return 2; }
  int jet_order() const override { return 4; }
  int state_size() const override { return 6; }
  int control_size() const override { return 2; }
  OriginalSample evaluate(const Jet& jet) const override;
  Eigen::VectorXd h(const StateVec& x) const override;
  bool within_limits(const OriginalSample& s) const override;
  StateVec dynamics(const StateVec& x, const ControlVec& u) const override;
  double state_distance(const StateVec& a, const StateVec& b) const override;
  /// The planar vehicle lives in the world x = 0 plane.
  Eigen::Vector3d position(const StateVec& x) const override { return {0.0, x(0), x(1)}; }
  const PlanarQuadrotorParams& params() const { return params_; }
  const PlanarQuadrotorLimits& limits() const { return limits_; }

 private:
  PlanarQuadrotorParams params_;
  PlanarQuadrotorLimits limits_;
};

struct ManipulatorLimits {
  Eigen::VectorXd q_min;
  Eigen::VectorXd q_max;
  double qdot_max = std::numeric_limits<double>::infinity();
  double torque_max = std::numeric_limits<double>::infinity();
};

/// State vector: q, qdot. Control: joint torques.
class ManipulatorMap final : public FlatnessMap {
 public:
  ManipulatorMap(DynamicsTerms dyn, ManipulatorLimits limits);
  std::string_view name() const override { return "manipulator"; }
  int flat_dim() const override { return dyn_.dof; }
  int jet_order() const override { return 2; }
  int state_size() const override { return 2 * dyn_.dof; }
  int control_size() const override { return dyn_.dof; }
  OriginalSample evaluate(const Jet& jet) const override;
  Eigen::VectorXd h(const StateVec& x) const override;
  bool within_limits(const OriginalSample& s) const override;
  StateVec dynamics(const StateVec& x, const ControlVec& u) const override;
  Eigen::Vector3d position(const StateVec& x) const override;
  const DynamicsTerms& terms() const { return dyn_; }
  const ManipulatorLimits& limits() const { return limits_; }

 private:
  DynamicsTerms dyn_;
  ManipulatorLimits limits_;
};

/// Classic fixed-step RK4 of the map's dynamics, with the control taken from
/// `control(t)`. Returns the state at t_end.
StateVec rk4_integrate(const FlatnessMap& map, StateVec x0, const std::function<ControlVec(double)>& control,
                       double t_begin, double t_end, double step);

}  // namespace flask
