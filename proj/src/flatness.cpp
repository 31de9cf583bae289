#include "flask/flatness.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <numbers>

namespace flask {

namespace {

double wrap_angle(double a) {
  a = std::remainder(a, 2.0 * std::numbers::pi);
  return a <= -std::numbers::pi ? a + 2.0 * std::numbers::pi : a;
}

Eigen::Matrix3d hat(const Eigen::Vector3d& w) {
  Eigen::Matrix3d m;
  m << 0, -w.z(), w.y(), w.z(), 0, -w.x(), -w.y(), w.x(), 0;
  return m;
}

// Skew part of m mapped to a vector.
Eigen::Vector3d vee(const Eigen::Matrix3d& m) {
  return 0.5 * Eigen::Vector3d(m(2, 1) - m(1, 2), m(0, 2) - m(2, 0), m(1, 0) - m(0, 1));
}

// A vector with its first two time derivatives.
struct Vec3Jet {
  Eigen::Vector3d v;
  Eigen::Vector3d d1;
  Eigen::Vector3d d2;
};

Vec3Jet normalized(const Vec3Jet& a) {
  const double s = a.v.norm();
  Vec3Jet u;
  u.v = a.v / s;
  const double s1 = u.v.dot(a.d1);
  u.d1 = (a.d1 - u.v * s1) / s;
  const double s2 = u.d1.dot(a.d1) + u.v.dot(a.d2);
  u.d2 = (a.d2 - 2.0 * u.d1 * s1 - u.v * s2) / s;
  return u;
}

Vec3Jet cross(const Vec3Jet& a, const Vec3Jet& b) {
  return {a.v.cross(b.v), a.d1.cross(b.v) + a.v.cross(b.d1),
          a.d2.cross(b.v) + 2.0 * a.d1.cross(b.d1) + a.v.cross(b.d2)};
}

struct RotationJet {
  Eigen::Matrix3d r;
  Eigen::Matrix3d d1;
  Eigen::Matrix3d d2;
};

RotationJet rotation_jet(const QuadrotorParams& params, const Jet& p, const YawJet& psi) {
  constexpr double kCrossEps = 1e-6;
  const double m = params.mass;
  Vec3Jet thrust;
  thrust.v = m * (p.col(2) + Eigen::Vector3d(0, 0, params.gravity));
  thrust.d1 = p.cols() > 3 ? Eigen::Vector3d(m * p.col(3)) : Eigen::Vector3d::Zero();
  thrust.d2 = p.cols() > 4 ? Eigen::Vector3d(m * p.col(4)) : Eigen::Vector3d::Zero();
  if (thrust.v.norm() < 1e-6 * m * params.gravity) {
    throw Error(ErrorCode::ThrustSingularity, "thrust vector vanishes");
  }
  const Vec3Jet rz = normalized(thrust);

  const double s = std::sin(psi[0]);
  const double c = std::cos(psi[0]);
  const Vec3Jet rpsi{{-s, c, 0.0},
                     psi[1] * Eigen::Vector3d(-c, -s, 0.0),
                     psi[2] * Eigen::Vector3d(-c, -s, 0.0) + psi[1] * psi[1] * Eigen::Vector3d(s, -c, 0.0)};
  const Vec3Jet raw = cross(rpsi, rz);
  if (raw.v.norm() < kCrossEps) throw Error(ErrorCode::GimbalSingularity, "yaw direction parallel to thrust");
  const Vec3Jet rx = normalized(raw);
  const Vec3Jet ry = cross(rz, rx);

  RotationJet out;
  out.r << rx.v, ry.v, rz.v;
  out.d1 << rx.d1, ry.d1, rz.d1;
  out.d2 << rx.d2, ry.d2, rz.d2;
  return out;
}

void require_jet(const Jet& jet, int rows, int cols) {
  if (jet.rows() != rows || jet.cols() < cols) {
    throw Error(ErrorCode::DimensionMismatch, "flat jet has the wrong shape");
  }
}

UnicycleResult unicycle_from_jet(double x, double y, double xd, double yd, double xdd, double ydd, int kappa) {
  const double speed2 = xd * xd + yd * yd;
  if (speed2 < kSpeedEps * kSpeedEps) throw Error(ErrorCode::SpeedSingularity, "unicycle speed below threshold");
  UnicycleResult out;
  out.state.x = x;
  out.state.y = y;
  out.state.theta = wrap_angle(std::atan2(yd, xd) + kappa * std::numbers::pi);
  out.v = (kappa ? -1.0 : 1.0) * std::sqrt(speed2);
  out.omega = (xd * ydd - xdd * yd) / speed2;
  return out;
}

}  // namespace

Jet path_jet(const LocalFlatPath& path, double t, int order) {
  const int n = path.dims().n;
  if (n > kMaxFlatDim || order > kMaxJetOrder) throw Error(ErrorCode::InvalidArgument, "jet exceeds capacity");
  Jet jet(n, order + 1);
  std::array<double, kMaxFlatDim> buf{};
  for (int k = 0; k <= order; ++k) {
    eval_derivative(path, t, k, std::span<double>(buf.data(), static_cast<std::size_t>(n)));
    for (int i = 0; i < n; ++i) jet(i, k) = buf[static_cast<std::size_t>(i)];
  }
  return jet;
}

// ---------------------------------------------------------------- unicycle

UnicycleResult unicycle_alpha_beta(const FlatState& z, std::span<const double> w, int kappa) {
  if (z.dims().n != 2 || z.dims().r != 2 || w.size() != 2) {
    throw Error(ErrorCode::DimensionMismatch, "unicycle map needs n = 2, r = 2");
  }
  return unicycle_from_jet(z(0, 0), z(0, 1), z(1, 0), z(1, 1), w[0], w[1], kappa);
}

UnicycleMap::UnicycleMap(UnicycleLimits limits, int kappa) : limits_(limits), kappa_(kappa) {
  if (kappa != 0 && kappa != 1) throw Error(ErrorCode::InvalidArgument, "kappa must be 0 or 1");
}

OriginalSample UnicycleMap::evaluate(const Jet& jet) const {
  require_jet(jet, 2, 3);
  const UnicycleResult r = unicycle_from_jet(jet(0, 0), jet(1, 0), jet(0, 1), jet(1, 1), jet(0, 2), jet(1, 2), kappa_);
  OriginalSample s;
  s.x.resize(3);
  s.x << r.state.x, r.state.y, r.state.theta;
  s.u.resize(2);
  s.u << r.v, r.omega;
  return s;
}

Eigen::VectorXd UnicycleMap::h(const StateVec& x) const { return x.head<2>(); }

bool UnicycleMap::within_limits(const OriginalSample& s) const {
  return std::abs(s.u(0)) <= limits_.v_max && std::abs(s.u(1)) <= limits_.omega_max;
}

// The heading cannot turn faster than omega_max between samples. Catches
// reversals through zero speed, where omega reads 0 at every sample.
bool UnicycleMap::consistent_between(const StateVec& a, const StateVec& b, double dt) const {
  return std::abs(wrap_angle(b(2) - a(2))) <= limits_.omega_max * dt + 1e-9;
}

StateVec UnicycleMap::dynamics(const StateVec& x, const ControlVec& u) const {
  StateVec d(3);
  d << u(0) * std::cos(x(2)), u(0) * std::sin(x(2)), u(1);
  return d;
}

double UnicycleMap::state_distance(const StateVec& a, const StateVec& b) const {
  return std::hypot(a(0) - b(0), a(1) - b(1), wrap_angle(a(2) - b(2)));
}

// --------------------------------------------------------------- quadrotor

QuadrotorState quadrotor_alpha(const QuadrotorParams& params, const Jet& p, const YawJet& psi) {
  require_jet(p, 3, 4);
  const RotationJet rot = rotation_jet(params, p, psi);
  QuadrotorState s;
  s.p = p.col(0);
  s.v = p.col(1);
  s.rot = rot.r;
  s.omega = vee(rot.r.transpose() * rot.d1);
  return s;
}

QuadrotorControl quadrotor_beta(const QuadrotorParams& params, const Jet& p, const YawJet& psi) {
  require_jet(p, 3, 5);
  const RotationJet rot = rotation_jet(params, p, psi);
  const Eigen::Vector3d omega = vee(rot.r.transpose() * rot.d1);
  const Eigen::Vector3d omega_dot = vee(rot.d1.transpose() * rot.d1 + rot.r.transpose() * rot.d2);
  QuadrotorControl u;
  u.thrust = params.mass * (p.col(2) + Eigen::Vector3d(0, 0, params.gravity)).norm();
  u.torque = params.inertia * omega_dot + omega.cross(params.inertia * omega);
  return u;
}

QuadrotorMap::QuadrotorMap(QuadrotorParams params, QuadrotorLimits limits) : params_(params), limits_(limits) {}

StateVec QuadrotorMap::pack(const QuadrotorState& s) {
  StateVec x(18);
  x.segment<3>(0) = s.p;
  x.segment<9>(3) = Eigen::Map<const Eigen::Matrix<double, 9, 1>>(s.rot.data());
  x.segment<3>(12) = s.v;
  x.segment<3>(15) = s.omega;
  return x;
}

QuadrotorState QuadrotorMap::unpack(const StateVec& x) {
  QuadrotorState s;
  s.p = x.segment<3>(0);
  s.rot = Eigen::Map<const Eigen::Matrix3d>(x.data() + 3);
  s.v = x.segment<3>(12);
  s.omega = x.segment<3>(15);
  return s;
}

OriginalSample QuadrotorMap::evaluate(const Jet& jet) const {
  require_jet(jet, 3, 5);
  const YawJet psi{0.0, 0.0, 0.0};
  OriginalSample s;
  s.x = pack(quadrotor_alpha(params_, jet, psi));
  const QuadrotorControl u = quadrotor_beta(params_, jet, psi);
  s.u.resize(4);
  s.u << u.thrust, u.torque;
  return s;
}

Eigen::VectorXd QuadrotorMap::h(const StateVec& x) const { return x.head<3>(); }

bool QuadrotorMap::within_limits(const OriginalSample& s) const {
  const double f_max = limits_.thrust_max_g * params_.mass * params_.gravity;
  return s.x.segment<3>(12).norm() <= limits_.v_max && s.x.segment<3>(15).norm() <= limits_.omega_max &&
         s.u(0) >= 0.0 && s.u(0) <= f_max && s.u.tail<3>().cwiseAbs().maxCoeff() <= limits_.torque_max;
}

StateVec QuadrotorMap::dynamics(const StateVec& x, const ControlVec& u) const {
  const QuadrotorState s = unpack(x);
  const Eigen::Vector3d tau = u.tail<3>();
  QuadrotorState d;
  d.p = s.v;
  d.v = s.rot.col(2) * (u(0) / params_.mass) - Eigen::Vector3d(0, 0, params_.gravity);
  d.rot = s.rot * hat(s.omega);
  d.omega = params_.inertia.ldlt().solve(tau - s.omega.cross(params_.inertia * s.omega));
  return pack(d);
}

// -------------------------------------------------------- planar quadrotor

PlanarQuadrotorResult planar_quadrotor_alpha_beta(const PlanarQuadrotorParams& params, const Jet& jet) {
  require_jet(jet, 2, 5);
  // Thrust direction (a, b) = (-y'', z'' + g) and its derivatives.
  const double a = -jet(0, 2);
  const double b = jet(1, 2) + params.gravity;
  const double a1 = -jet(0, 3);
  const double b1 = jet(1, 3);
  const double a2 = -jet(0, 4);
  const double b2 = jet(1, 4);
  const double d = a * a + b * b;
  const double f = params.mass * std::sqrt(d);
  if (f < 1e-6 * params.mass * params.gravity) throw Error(ErrorCode::ThrustSingularity, "thrust vanishes");

  const double num = a1 * b - a * b1;
  const double num1 = a2 * b - a * b2;
  const double d1 = 2.0 * (a * a1 + b * b1);
  const double phidot = num / d;
  const double phiddot = (num1 * d - num * d1) / (d * d);
  const double tau = params.inertia * phiddot;

  PlanarQuadrotorResult out;
  out.state = {jet(0, 0), jet(1, 0), std::atan2(a, b), jet(0, 1), jet(1, 1), phidot};
  out.f1 = 0.5 * (f + tau / params.arm);
  out.f2 = 0.5 * (f - tau / params.arm);
  return out;
}

PlanarQuadrotorMap::PlanarQuadrotorMap(PlanarQuadrotorParams params, PlanarQuadrotorLimits limits)
    : params_(params), limits_(limits) {}

OriginalSample PlanarQuadrotorMap::evaluate(const Jet& jet) const {
  const PlanarQuadrotorResult r = planar_quadrotor_alpha_beta(params_, jet);
  OriginalSample s;
  s.x.resize(6);
  s.x << r.state.y, r.state.z, r.state.phi, r.state.ydot, r.state.zdot, r.state.phidot;
  s.u.resize(2);
  s.u << r.f1, r.f2;
  return s;
}

Eigen::VectorXd PlanarQuadrotorMap::h(const StateVec& x) const { return x.head<2>(); }

bool PlanarQuadrotorMap::within_limits(const OriginalSample& s) const {
  const double f_max = limits_.thrust_max_g * params_.mass * params_.gravity;
  return s.u(0) >= 0.0 && s.u(1) >= 0.0 && s.u(0) <= f_max && s.u(1) <= f_max;
}

StateVec PlanarQuadrotorMap::dynamics(const StateVec& x, const ControlVec& u) const {
  const double f = u(0) + u(1);
  const double tau = params_.arm * (u(0) - u(1));
  StateVec d(6);
  d << x(3), x(4), x(5), -f * std::sin(x(2)) / params_.mass, f * std::cos(x(2)) / params_.mass - params_.gravity,
      tau / params_.inertia;
  return d;
}

double PlanarQuadrotorMap::state_distance(const StateVec& a, const StateVec& b) const {
  StateVec diff = a - b;
  diff(2) = wrap_angle(diff(2));
  return diff.norm();
}

// ------------------------------------------------------------- manipulator

DynamicsTerms DynamicsTerms::identity(int dof) {
  return diagonal(Eigen::VectorXd::Ones(dof));
}

DynamicsTerms DynamicsTerms::diagonal(const Eigen::VectorXd& masses) {
  const int dof = static_cast<int>(masses.size());
  DynamicsTerms t;
  t.dof = dof;
  t.mass = [masses](const Eigen::VectorXd&) { return Eigen::MatrixXd(masses.asDiagonal()); };
  t.bias = [dof](const Eigen::VectorXd&, const Eigen::VectorXd&) { return Eigen::VectorXd::Zero(dof).eval(); };
  t.gain = [dof](const Eigen::VectorXd&) { return Eigen::MatrixXd::Identity(dof, dof).eval(); };
  return t;
}

DynamicsTerms two_link_dynamics(const TwoLinkParams& p) {
  DynamicsTerms t;
  t.dof = 2;
  t.mass = [p](const Eigen::VectorXd& q) {
    const double c2 = std::cos(q(1));
    Eigen::MatrixXd m(2, 2);
    m(0, 0) = p.m1 * p.lc1 * p.lc1 + p.m2 * (p.l1 * p.l1 + p.lc2 * p.lc2 + 2.0 * p.l1 * p.lc2 * c2) + p.i1 + p.i2;
    m(0, 1) = p.m2 * (p.lc2 * p.lc2 + p.l1 * p.lc2 * c2) + p.i2;
    m(1, 0) = m(0, 1);
    m(1, 1) = p.m2 * p.lc2 * p.lc2 + p.i2;
    return m;
  };
  t.bias = [p](const Eigen::VectorXd& q, const Eigen::VectorXd& qd) {
    const double h = p.m2 * p.l1 * p.lc2 * std::sin(q(1));
    const double g1 = (p.m1 * p.lc1 + p.m2 * p.l1) * p.gravity * std::cos(q(0)) +
                      p.m2 * p.lc2 * p.gravity * std::cos(q(0) + q(1));
    const double g2 = p.m2 * p.lc2 * p.gravity * std::cos(q(0) + q(1));
    Eigen::VectorXd c(2);
    c << -h * (2.0 * qd(0) * qd(1) + qd(1) * qd(1)) + g1, h * qd(0) * qd(0) + g2;
    return c;
  };
  t.gain = [](const Eigen::VectorXd&) { return Eigen::MatrixXd::Identity(2, 2).eval(); };
  return t;
}

ManipulatorResult manipulator_alpha_beta(const FlatState& z, std::span<const double> w, const DynamicsTerms& dyn) {
  const int d = dyn.dof;
  if (z.dims().n != d || z.dims().r != 2 || static_cast<int>(w.size()) != d) {
    throw Error(ErrorCode::DimensionMismatch, "manipulator map needs n = dof, r = 2");
  }
  ManipulatorResult out;
  out.state.q = Eigen::Map<const Eigen::VectorXd>(z.block(0).data(), d);
  out.state.qdot = Eigen::Map<const Eigen::VectorXd>(z.block(1).data(), d);
  const Eigen::Map<const Eigen::VectorXd> qdd(w.data(), d);
  const Eigen::VectorXd rhs = dyn.mass(out.state.q) * qdd + dyn.bias(out.state.q, out.state.qdot);
  const Eigen::FullPivLU<Eigen::MatrixXd> lu(dyn.gain(out.state.q));
  if (!lu.isInvertible()) throw Error(ErrorCode::SingularActuation, "control gain matrix is singular");
  out.torque = lu.solve(rhs);
  return out;
}

ManipulatorMap::ManipulatorMap(DynamicsTerms dyn, ManipulatorLimits limits)
    : dyn_(std::move(dyn)), limits_(std::move(limits)) {
  if (dyn_.dof < 1 || dyn_.dof > kMaxFlatDim) throw Error(ErrorCode::InvalidArgument, "unsupported joint count");
  if (limits_.q_min.size() == 0) limits_.q_min = Eigen::VectorXd::Constant(dyn_.dof, -std::numbers::pi);
  if (limits_.q_max.size() == 0) limits_.q_max = Eigen::VectorXd::Constant(dyn_.dof, std::numbers::pi);
  if (limits_.q_min.size() != dyn_.dof || limits_.q_max.size() != dyn_.dof) {
    throw Error(ErrorCode::DimensionMismatch, "joint limit size does not match dof");
  }
}

OriginalSample ManipulatorMap::evaluate(const Jet& jet) const {
  const int d = dyn_.dof;
  require_jet(jet, d, 3);
  const Eigen::VectorXd q = jet.col(0);
  const Eigen::VectorXd qd = jet.col(1);
  const Eigen::VectorXd qdd = jet.col(2);
  const Eigen::VectorXd rhs = dyn_.mass(q) * qdd + dyn_.bias(q, qd);
  const Eigen::FullPivLU<Eigen::MatrixXd> lu(dyn_.gain(q));
  if (!lu.isInvertible()) throw Error(ErrorCode::SingularActuation, "control gain matrix is singular");
  OriginalSample s;
  s.x.resize(2 * d);
  s.x << q, qd;
  s.u = lu.solve(rhs);
  return s;
}

Eigen::VectorXd ManipulatorMap::h(const StateVec& x) const { return x.head(dyn_.dof); }

bool ManipulatorMap::within_limits(const OriginalSample& s) const {
  const int d = dyn_.dof;
  for (int i = 0; i < d; ++i) {
    if (s.x(i) < limits_.q_min(i) || s.x(i) > limits_.q_max(i)) return false;
    if (std::abs(s.x(d + i)) > limits_.qdot_max || std::abs(s.u(i)) > limits_.torque_max) return false;
  }
  return true;
}

StateVec ManipulatorMap::dynamics(const StateVec& x, const ControlVec& u) const {
  const int d = dyn_.dof;
  const Eigen::VectorXd q = x.head(d);
  const Eigen::VectorXd qd = x.tail(d);
  const Eigen::VectorXd qdd = dyn_.mass(q).ldlt().solve(dyn_.gain(q) * Eigen::VectorXd(u) - dyn_.bias(q, qd));
  StateVec out(2 * d);
  out << qd, qdd;
  return out;
}

// Configuration-space point; the arm's workspace geometry lives in geometry-cc.
Eigen::Vector3d ManipulatorMap::position(const StateVec& x) const {
  Eigen::Vector3d p = Eigen::Vector3d::Zero();
  for (int i = 0; i < std::min(3, dyn_.dof); ++i) p(i) = x(i);
  return p;
}

double FlatnessMap::state_distance(const StateVec& a, const StateVec& b) const { return (a - b).norm(); }

StateVec rk4_integrate(const FlatnessMap& map, StateVec x, const std::function<ControlVec(double)>& control,
                       double t_begin, double t_end, double step) {
  const int steps = std::max(1, static_cast<int>(std::ceil((t_end - t_begin) / step - 1e-9)));
  const double h = (t_end - t_begin) / steps;
  for (int i = 0; i < steps; ++i) {
    const double t = t_begin + i * h;
    const ControlVec u0 = control(t);
    const ControlVec um = control(t + 0.5 * h);
    const ControlVec u1 = control(t + h);
    const StateVec k1 = map.dynamics(x, u0);
    const StateVec k2 = map.dynamics(x + 0.5 * h * k1, um);
    const StateVec k3 = map.dynamics(x + 0.5 * h * k2, um);
    const StateVec k4 = map.dynamics(x + h * k3, u1);
    x += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  }
  return x;
}

}  // namespace flask
