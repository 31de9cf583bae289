#include <doctest.h>

#include <Eigen/Dense>

#include <cmath>
#include <numbers>
#include <random>

#include "flask/flatness.hpp"
#include "oracles.hpp"

using namespace flask;

namespace {

// Random polynomial curve in R^n with derivatives evaluated term by term.
struct Curve {
  Eigen::MatrixXd coeffs;  // n x (degree + 1)

  Jet jet(double t, int order) const {
    Jet j(coeffs.rows(), order + 1);
    j.setZero();
    for (int k = 0; k <= order; ++k) {
      for (int c = k; c < coeffs.cols(); ++c) {
        double f = 1.0;
        for (int s = 0; s < k; ++s) f *= (c - s);
        j.col(k) += coeffs.col(c) * (f * std::pow(t, c - k));
      }
    }
    return j;
  }
};

Curve random_curve(int n, int degree, std::mt19937_64& rng, double scale) {
  std::uniform_real_distribution<double> uni(-scale, scale);
  Curve c{Eigen::MatrixXd(n, degree + 1)};
  for (int i = 0; i < n; ++i) {
    for (int k = 0; k <= degree; ++k) c.coeffs(i, k) = uni(rng) / (1 + k);
  }
  return c;
}

// Independent inverse dynamics of a planar two-link arm by forward velocity
// and acceleration propagation followed by backward force/moment balance.
Eigen::Vector2d newton_euler(const TwoLinkParams& p, const Eigen::Vector2d& q, const Eigen::Vector2d& qd,
                             const Eigen::Vector2d& qdd) {
  auto cross_z = [](double w, const Eigen::Vector2d& r) { return Eigen::Vector2d(-w * r.y(), w * r.x()); };
  auto cross2 = [](const Eigen::Vector2d& a, const Eigen::Vector2d& b) { return a.x() * b.y() - a.y() * b.x(); };
  const double th1 = q(0);
  const double th2 = q(0) + q(1);
  const double w1 = qd(0), a1 = qdd(0);
  const double w2 = qd(0) + qd(1), a2 = qdd(0) + qdd(1);
  const Eigen::Vector2d r1 = p.l1 * Eigen::Vector2d(std::cos(th1), std::sin(th1));
  const Eigen::Vector2d rc1 = p.lc1 * Eigen::Vector2d(std::cos(th1), std::sin(th1));
  const Eigen::Vector2d rc2 = p.lc2 * Eigen::Vector2d(std::cos(th2), std::sin(th2));
  const Eigen::Vector2d base(0.0, p.gravity);  // gravity as an upward base acceleration
  const Eigen::Vector2d ac1 = base + cross_z(a1, rc1) - w1 * w1 * rc1;
  const Eigen::Vector2d j2 = base + cross_z(a1, r1) - w1 * w1 * r1;
  const Eigen::Vector2d ac2 = j2 + cross_z(a2, rc2) - w2 * w2 * rc2;
  const Eigen::Vector2d f2 = p.m2 * ac2;
  const double n2 = p.i2 * a2 + cross2(rc2, f2);
  const Eigen::Vector2d f1c = p.m1 * ac1;
  const double n1 = n2 + cross2(r1, f2) + cross2(rc1, f1c) + p.i1 * a1;
  return {n1, n2};
}

Eigen::Vector3d vee_skew(const Eigen::Matrix3d& m) {
  return 0.5 * Eigen::Vector3d(m(2, 1) - m(1, 2), m(0, 2) - m(2, 0), m(1, 0) - m(0, 1));
}

}  // namespace

TEST_CASE("unicycle examples") {
  UnicycleResult r = unicycle_alpha_beta(FlatState({2, 2}, {0, 0, 1, 0}), std::vector<double>{0, 1}, 0);
  CHECK(r.state.theta == doctest::Approx(0.0));
  CHECK(r.v == doctest::Approx(1.0));
  CHECK(r.omega == doctest::Approx(1.0));

  r = unicycle_alpha_beta(FlatState({2, 2}, {0, 0, -1, 0}), std::vector<double>{0, 0}, 1);
  CHECK(std::abs(r.state.theta) < 1e-12);
  CHECK(r.v == doctest::Approx(-1.0));
  CHECK(r.omega == doctest::Approx(0.0));

  CHECK_THROWS_WITH_AS(unicycle_alpha_beta(FlatState({2, 2}, {0, 0, 0, 0}), std::vector<double>{0, 0}, 0),
                       doctest::Contains("speed"), Error);

  // Heading in (-pi, pi].
  r = unicycle_alpha_beta(FlatState({2, 2}, {0, 0, -1, 0}), std::vector<double>{0, 0}, 0);
  CHECK(r.state.theta == doctest::Approx(std::numbers::pi));

  const UnicycleMap map;
  OriginalSample s;
  s.u.resize(2);
  s.u << 0.9, -1.4;
  CHECK(map.within_limits(s));
  s.u << 1.1, 0.0;
  CHECK_FALSE(map.within_limits(s));
  s.u << 0.5, 1.6;
  CHECK_FALSE(map.within_limits(s));
}

TEST_CASE("quadrotor hover and singularities") {
  const QuadrotorParams qp;
  Jet hover = Jet::Zero(3, 5);
  hover(2, 0) = 1.0;
  const QuadrotorState s = quadrotor_alpha(qp, hover, {0, 0, 0});
  CHECK((s.rot - Eigen::Matrix3d::Identity()).norm() < 1e-15);
  CHECK(s.omega.norm() < 1e-15);
  const QuadrotorControl u = quadrotor_beta(qp, hover, {0, 0, 0});
  CHECK(u.thrust == doctest::Approx(9.81));
  CHECK(u.torque.norm() < 1e-15);

  Jet fall = Jet::Zero(3, 5);
  fall(2, 2) = -9.81;
  CHECK_THROWS_AS(quadrotor_alpha(qp, fall, {0, 0, 0}), Error);
  try {
    quadrotor_beta(qp, fall, {0, 0, 0});
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::ThrustSingularity);
  }

  // Thrust along the yaw direction r_psi = (0, 1, 0).
  Jet sideways = Jet::Zero(3, 5);
  sideways(1, 2) = 1e3;
  sideways(2, 2) = -9.81;
  try {
    quadrotor_alpha(qp, sideways, {0, 0, 0});
    FAIL("expected a gimbal singularity");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::GimbalSingularity);
  }
}

TEST_CASE("quadrotor angular velocity and torque against finite differences") {
  const QuadrotorParams qp;
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 50; ++trial) {
    const Curve c = random_curve(3, 6, rng, 2.0);
    const double t = 0.3 + 0.01 * trial;
    const Jet jet = c.jet(t, 4);
    const double psi0 = 0.3 * std::sin(t), psi1 = 0.3 * std::cos(t), psi2 = -0.3 * std::sin(t);
    const QuadrotorState s = quadrotor_alpha(qp, jet, {psi0, psi1, psi2});
    CHECK((s.rot.transpose() * s.rot - Eigen::Matrix3d::Identity()).norm() < 1e-9);
    CHECK(s.rot.determinant() == doctest::Approx(1.0).epsilon(1e-9));
    CHECK((s.p - jet.col(0)).norm() < 1e-12);

    auto rot_at = [&](double tt) {
      return quadrotor_alpha(qp, c.jet(tt, 4), {0.3 * std::sin(tt), 0.3 * std::cos(tt), -0.3 * std::sin(tt)}).rot;
    };
    const double h = 1e-5;
    const Eigen::Matrix3d rdot = (rot_at(t + h) - rot_at(t - h)) / (2 * h);
    const Eigen::Vector3d omega_fd = vee_skew(s.rot.transpose() * rdot);
    CHECK((s.omega - omega_fd).norm() < 1e-5 * (1.0 + s.omega.norm()));

    // Angular momentum balance with omega differentiated numerically.
    auto omega_at = [&](double tt) {
      const Eigen::Matrix3d r = rot_at(tt);
      const Eigen::Matrix3d rd = (rot_at(tt + h) - rot_at(tt - h)) / (2 * h);
      return Eigen::Vector3d(vee_skew(r.transpose() * rd));
    };
    const double h2 = 1e-3;
    const Eigen::Vector3d omega_dot = (omega_at(t + h2) - omega_at(t - h2)) / (2 * h2);
    const Eigen::Vector3d tau_fd = qp.inertia * omega_dot + omega_fd.cross(qp.inertia * omega_fd);
    const QuadrotorControl u = quadrotor_beta(qp, jet, {psi0, psi1, psi2});
    CHECK((u.torque - tau_fd).norm() <= 1e-4 * std::max(1.0, u.torque.norm()));
    CHECK(u.thrust == doctest::Approx(qp.mass * (jet.col(2) + Eigen::Vector3d(0, 0, 9.81)).norm()));
  }
}

TEST_CASE("planar quadrotor hover and limits") {
  const PlanarQuadrotorParams pp;
  Jet hover = Jet::Zero(2, 5);
  const PlanarQuadrotorResult r = planar_quadrotor_alpha_beta(pp, hover);
  CHECK(r.f1 == doctest::Approx(0.034 * 9.81 / 2));
  CHECK(r.f2 == doctest::Approx(0.16677).epsilon(1e-4));
  CHECK(r.state.phi == 0.0);

  const PlanarQuadrotorMap map;
  OriginalSample s = map.evaluate(hover);
  CHECK(map.within_limits(s));
  s.u(0) = 0.66 * 0.034 * 9.81;
  CHECK_FALSE(map.within_limits(s));
  s.u(0) = -1e-3;
  CHECK_FALSE(map.within_limits(s));

  Jet fall = Jet::Zero(2, 5);
  fall(1, 2) = -9.81;
  CHECK_THROWS_AS(planar_quadrotor_alpha_beta(pp, fall), Error);
}

TEST_CASE("planar quadrotor equals the 3D map restricted to the x = 0 plane") {
  const PlanarQuadrotorParams pp;
  QuadrotorParams qp;
  qp.mass = pp.mass;
  qp.inertia = Eigen::Vector3d(pp.inertia, 2e-4, 3e-4).asDiagonal();
  std::mt19937_64 rng(4);
  int upright = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const Curve c = random_curve(2, 7, rng, 3.0);
    const double t = 0.01 * trial;
    const Jet planar = c.jet(t, 4);
    // With the thrust pointing down the 3D construction picks yaw = pi, a
    // different but equally valid attitude; the embedding covers upright flight.
    if (planar(1, 2) + pp.gravity <= 0.0) continue;
    ++upright;
    Jet spatial = Jet::Zero(3, 5);
    spatial.row(1) = planar.row(0);
    spatial.row(2) = planar.row(1);

    const PlanarQuadrotorResult r = planar_quadrotor_alpha_beta(pp, planar);
    const QuadrotorState s = quadrotor_alpha(qp, spatial, {0, 0, 0});
    const QuadrotorControl u = quadrotor_beta(qp, spatial, {0, 0, 0});
    CHECK(std::abs(std::sin(r.state.phi) - s.rot(2, 1)) < 1e-9);
    CHECK(std::abs(std::cos(r.state.phi) - s.rot(1, 1)) < 1e-9);
    CHECK(std::abs(r.state.phidot - s.omega.x()) < 1e-9 * (1 + std::abs(r.state.phidot)));
    CHECK(std::abs(s.omega.y()) + std::abs(s.omega.z()) < 1e-9);
    CHECK(std::abs(r.f1 + r.f2 - u.thrust) < 1e-9);
    CHECK(std::abs(pp.arm * (r.f1 - r.f2) - u.torque.x()) < 1e-9 * (1 + std::abs(u.torque.x())));
  }
  CHECK(upright > 90);
}

TEST_CASE("manipulator maps") {
  const FlatState z({2, 2}, {0.1, 0.2, 0.3, 0.4});
  ManipulatorResult r = manipulator_alpha_beta(z, std::vector<double>{1.5, -2}, DynamicsTerms::identity(2));
  CHECK(r.torque(0) == doctest::Approx(1.5));
  CHECK(r.torque(1) == doctest::Approx(-2.0));
  CHECK(r.state.qdot(1) == doctest::Approx(0.4));

  r = manipulator_alpha_beta(z, std::vector<double>{1, 1}, DynamicsTerms::diagonal(Eigen::Vector2d(2, 3)));
  CHECK(r.torque(0) == doctest::Approx(2.0));
  CHECK(r.torque(1) == doctest::Approx(3.0));

  DynamicsTerms singular = DynamicsTerms::identity(2);
  singular.gain = [](const Eigen::VectorXd&) { return Eigen::MatrixXd::Zero(2, 2).eval(); };
  CHECK_THROWS_AS(manipulator_alpha_beta(z, std::vector<double>{1, 1}, singular), Error);

  TwoLinkParams p;
  p.l1 = 0.8;
  p.lc1 = 0.35;
  p.m1 = 1.3;
  p.gravity = 9.81;
  const DynamicsTerms dyn = two_link_dynamics(p);
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> uni(-3.0, 3.0);
  for (int trial = 0; trial < 100; ++trial) {
    const Eigen::Vector2d q(uni(rng), uni(rng)), qd(uni(rng), uni(rng)), qdd(uni(rng), uni(rng));
    const FlatState zz({2, 2}, {q(0), q(1), qd(0), qd(1)});
    const ManipulatorResult m = manipulator_alpha_beta(zz, std::vector<double>{qdd(0), qdd(1)}, dyn);
    const Eigen::Vector2d oracle = newton_euler(p, q, qd, qdd);
    CHECK((m.torque - oracle).cwiseAbs().maxCoeff() < 1e-8);
  }
}

namespace {

FlatState random_flat(FlatDims d, std::mt19937_64& rng, double pos, double vel) {
  std::uniform_real_distribution<double> uni(-1.0, 1.0);
  FlatState z(d);
  for (int k = 0; k < d.r; ++k) {
    for (int i = 0; i < d.n; ++i) z(k, i) = uni(rng) * (k == 0 ? pos : vel);
  }
  return z;
}

void check_dynamics_consistency(const FlatnessMap& map, const LocalFlatPath& path) {
  const OriginalSample start = map.evaluate_at(path, 0.0);
  const OriginalSample end = map.evaluate_at(path, path.duration);
  const StateVec integrated = rk4_integrate(
      map, start.x, [&](double t) { return map.evaluate_at(path, t).u; }, 0.0, path.duration, 1e-4);
  const double err = map.state_distance(integrated, end.x);
  CHECK(err <= 1e-4 * (1.0 + end.x.norm()));

  for (double t : {0.0, 0.25 * path.duration, path.duration}) {
    const OriginalSample s = map.evaluate_at(path, t);
    const PathSample flat = eval_path(path, t);
    const Eigen::VectorXd y = map.h(s.x);
    for (int i = 0; i < map.flat_dim(); ++i) CHECK(std::abs(y(i) - flat.z(0, i)) <= 1e-12);
  }
}

}  // namespace

TEST_CASE("flat paths reproduce the original dynamics under RK4") {
  std::mt19937_64 rng(21);
  SUBCASE("unicycle") {
    const UnicycleMap map;
    int done = 0;
    while (done < 5) {
      const FlatState z0 = random_flat({2, 2}, rng, 1.0, 1.0);
      const FlatState zf = random_flat({2, 2}, rng, 1.0, 1.0);
      const LocalFlatPath p = solve_bvp_fixed_time(z0, zf, 1.0, CostWeights(2, 1.0));
      bool fast = true;
      for (int i = 0; i <= 100; ++i) {
        const PathSample s = eval_path(p, 0.01 * i);
        fast = fast && std::hypot(s.z(1, 0), s.z(1, 1)) > 0.2;
      }
      if (!fast) continue;
      check_dynamics_consistency(map, p);
      ++done;
    }
  }
  SUBCASE("quadrotor, r = 2 and r = 4") {
    const QuadrotorMap map;
    for (int r : {2, 4}) {
      for (int trial = 0; trial < 3; ++trial) {
        const LocalFlatPath p = solve_bvp_fixed_time(random_flat({3, r}, rng, 1.0, 1.0),
                                                     random_flat({3, r}, rng, 1.0, 1.0), 1.0, CostWeights(3, 1.0));
        check_dynamics_consistency(map, p);
        const QuadrotorState s = QuadrotorMap::unpack(map.evaluate_at(p, 0.5).x);
        CHECK((s.rot.transpose() * s.rot - Eigen::Matrix3d::Identity()).norm() < 1e-9);
        CHECK(s.rot.determinant() == doctest::Approx(1.0).epsilon(1e-9));
      }
    }
  }
  SUBCASE("planar quadrotor") {
    const PlanarQuadrotorMap map;
    for (int trial = 0; trial < 3; ++trial) {
      const LocalFlatPath p = solve_bvp_fixed_time(random_flat({2, 2}, rng, 1.0, 1.0),
                                                   random_flat({2, 2}, rng, 1.0, 1.0), 1.0, CostWeights(2, 1.0));
      check_dynamics_consistency(map, p);
    }
  }
  SUBCASE("two-link manipulator") {
    TwoLinkParams params;
    params.gravity = 9.81;
    const ManipulatorMap map(two_link_dynamics(params), {});
    for (int trial = 0; trial < 3; ++trial) {
      const LocalFlatPath p = solve_bvp_fixed_time(random_flat({2, 2}, rng, 1.0, 1.0),
                                                   random_flat({2, 2}, rng, 1.0, 1.0), 1.0, CostWeights(2, 1.0));
      check_dynamics_consistency(map, p);
    }
  }
}
