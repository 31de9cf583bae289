#include <doctest.h>

#include <cmath>
#include <random>

#include "flask/flat_lqmt.hpp"
#include "oracles.hpp"

using namespace flask;

namespace {

FlatState state(int n, int r, std::vector<double> v) { return FlatState(FlatDims{n, r}, std::move(v)); }

double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace

TEST_CASE("phi drifts the chain of integrators") {
  CHECK(phi(state(1, 2, {1, 2}), 0.5) == state(1, 2, {2, 2}));
  const FlatState z = state(2, 3, {1, -2, 0.5, 3, 4, -1});
  CHECK(phi(z, 0.0) == z);
  const FlatState acc = phi(state(1, 3, {0, 0, 6}), 1.0);
  CHECK(acc(0, 0) == doctest::Approx(3.0));
  CHECK(acc(1, 0) == doctest::Approx(6.0));
  CHECK(acc(2, 0) == doctest::Approx(6.0));

  // Dense e^{At} route.
  std::mt19937_64 rng(3);
  for (int r = 1; r <= 4; ++r) {
    const FlatDims d{3, r};
    const FlatState z0 = oracle::random_state(d, rng, 5.0);
    const Eigen::VectorXd expect =
        oracle::dense_expm(oracle::dense_a(d), -1.7) * Eigen::Map<const Eigen::VectorXd>(z0.data().data(), d.state_size());
    const FlatState got = phi(z0, -1.7);
    for (int i = 0; i < d.state_size(); ++i) CHECK(got.data()[i] == doctest::Approx(expect(i)).epsilon(1e-12));
  }
}

TEST_CASE("gramian closed form") {
  const CostWeights unit(1, 0.0);
  Gramian g = gramian({1, 2}, unit, 1.0);
  CHECK(g.core(0, 0) == doctest::Approx(1.0 / 3));
  CHECK(g.core(0, 1) == doctest::Approx(0.5));
  CHECK(g.core(1, 1) == doctest::Approx(1.0));

  g = gramian({1, 2}, unit, 2.0);
  const Eigen::MatrixXd trap = oracle::trapezoid(
      [](double t) {
        Eigen::MatrixXd m(2, 2);
        m << t * t, t, t, 1.0;
        return m;
      },
      0.0, 2.0, 10000);
  CHECK(g.core(0, 0) == doctest::Approx(8.0 / 3));
  CHECK(g.core(0, 1) == doctest::Approx(2.0));
  CHECK(g.core(1, 1) == doctest::Approx(2.0));
  CHECK((g.dense() - trap).norm() < 1e-6);

  CHECK(gramian({1, 1}, unit, 3.0).core(0, 0) == doctest::Approx(3.0));
  CHECK_THROWS_AS(gramian({1, 2}, unit, 0.0), Error);
  CHECK_THROWS_AS(gramian({1, 2}, unit, -1.0), Error);
}

TEST_CASE("gramian matches dense quadrature with a non-identity weight") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> uni(0.1, 10.0);
  for (int trial = 0; trial < 20; ++trial) {
    const int r = 1 + trial % 4;
    const int n = 1 + trial % 3;
    Eigen::MatrixXd m = Eigen::MatrixXd::Random(n, n);
    Eigen::MatrixXd rw = m * m.transpose() + Eigen::MatrixXd::Identity(n, n);
    const double T = uni(rng);
    const Gramian g = gramian({n, r}, CostWeights(rw, 1.0), T);
    const Eigen::MatrixXd q = oracle::quadrature_gramian({n, r}, rw, T);
    CHECK((g.dense() - q).norm() / q.norm() < 1e-8);
  }
}

TEST_CASE("fixed-time BVP: rest-to-rest unit move") {
  const CostWeights w(1, 0.0);
  const LocalFlatPath p = solve_bvp_fixed_time(state(1, 2, {0, 0}), state(1, 2, {1, 0}), 1.0, w);

  // Oracle: the unique cubic through the four boundary values.
  Eigen::Matrix4d v;
  v << 1, 0, 0, 0,  // y(0)
      0, 1, 0, 0,   // y'(0)
      1, 1, 1, 1,   // y(1)
      0, 1, 2, 3;   // y'(1)
  const Eigen::Vector4d coeffs = v.lu().solve(Eigen::Vector4d(0, 0, 1, 0));
  for (int k = 0; k < 4; ++k) CHECK(p.y_coeffs(0, k) == doctest::Approx(coeffs(k)).epsilon(1e-12));
  CHECK(p.y_coeffs(0, 3) == doctest::Approx(-2.0));
  CHECK(p.y_coeffs(0, 2) == doctest::Approx(3.0));
  CHECK(p.w_coeffs(0, 0) == doctest::Approx(6.0));
  CHECK(p.w_coeffs(0, 1) == doctest::Approx(-12.0));
  const double effort = oracle::simpson([](double t) { return (6 - 12 * t) * (6 - 12 * t); }, 0.0, 1.0, 1000);
  CHECK(p.cost == doctest::Approx(12.0));
  CHECK(effort == doctest::Approx(12.0));

  const PathSample mid = eval_path(p, 0.5);
  CHECK(mid.z(0, 0) == doctest::Approx(0.5));
  CHECK(mid.z(1, 0) == doctest::Approx(1.5));
  CHECK(mid.w(0) == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("fixed-time BVP trivial cases") {
  const CostWeights w(2, 0.0);
  const FlatState rest = state(2, 2, {1, -1, 0, 0});
  const LocalFlatPath still = solve_bvp_fixed_time(rest, rest, 2.5, w);
  CHECK(still.cost == doctest::Approx(0.0));
  CHECK(still.w_coeffs.cwiseAbs().maxCoeff() < 1e-12);
  CHECK(std::abs(still.y_coeffs(0, 0) - 1.0) < 1e-12);
  CHECK(still.y_coeffs.rightCols(3).cwiseAbs().maxCoeff() < 1e-12);

  const LocalFlatPath line = solve_bvp_fixed_time(state(1, 2, {0, 1}), state(1, 2, {1, 1}), 1.0, CostWeights(1, 0.0));
  CHECK(line.cost == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(line.y_coeffs(0, 1) == doctest::Approx(1.0));
  CHECK(line.w_coeffs.cwiseAbs().maxCoeff() < 1e-12);

  CHECK_THROWS_AS(solve_bvp_fixed_time(rest, rest, 0.0, w), Error);
  CHECK_THROWS_AS(solve_bvp_fixed_time(rest, state(1, 2, {0, 0}), 1.0, w), Error);
}

TEST_CASE("fixed-time BVP against the r=2 closed forms") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> uni(0.2, 5.0);
  for (int trial = 0; trial < 50; ++trial) {
    const FlatDims d{3, 2};
    const FlatState z0 = oracle::random_state(d, rng, 8.0);
    const FlatState zf = oracle::random_state(d, rng, 8.0);
    const double T = uni(rng);
    const LocalFlatPath p = solve_bvp_fixed_time(z0, zf, T, CostWeights(3, 0.7));
    for (int i = 0; i < 3; ++i) {
      const double dy = zf(0, i) - z0(0, i) - T * z0(1, i);
      const double dv = zf(1, i) - z0(1, i);
      const double cubic = -2.0 / (T * T * T) * dy + 1.0 / (T * T) * dv;
      const double quad = 3.0 / (T * T) * dy - 1.0 / T * dv;
      CHECK(p.y_coeffs(i, 3) == doctest::Approx(cubic).epsilon(1e-10));
      CHECK(p.y_coeffs(i, 2) == doctest::Approx(quad).epsilon(1e-10));
      CHECK(p.y_coeffs(i, 1) == doctest::Approx(z0(1, i)));
      CHECK(p.y_coeffs(i, 0) == doctest::Approx(z0(0, i)));
    }
  }
}

TEST_CASE("BVP properties on random instances") {
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> duration(0.1, 10.0);
  std::uniform_real_distribution<double> rho_dist(0.0, 2.0);
  for (int trial = 0; trial < 200; ++trial) {
    const FlatDims d{1 + trial % 8, 1 + trial % 4};
    const FlatState z0 = oracle::random_state(d, rng, 10.0);
    const FlatState zf = oracle::random_state(d, rng, 10.0);
    const double T = duration(rng);
    Eigen::MatrixXd m = Eigen::MatrixXd::Random(d.n, d.n);
    const CostWeights w(m * m.transpose() + 0.5 * Eigen::MatrixXd::Identity(d.n, d.n), rho_dist(rng));
    const LocalFlatPath p = solve_bvp_fixed_time(z0, zf, T, w);

    CHECK(max_abs_diff(eval_path(p, 0.0).z.data(), z0.data()) < 1e-9);
    CHECK(max_abs_diff(eval_path(p, T).z.data(), zf.data()) < 1e-9);
    CHECK(p.cost >= w.rho() * T);
    CHECK(p.cost == doctest::Approx(oracle::dense_cost(z0, zf, T, w.rw(), w.rho())).epsilon(1e-6));

    // w is the r-th derivative of y, coefficient-wise.
    for (int i = 0; i < d.n; ++i) {
      for (int q = 0; q < d.r; ++q) {
        double fall = 1.0;
        for (int s = 0; s < d.r; ++s) fall *= (q + d.r - s);
        CHECK(p.y_coeffs(i, q + d.r) * fall == doctest::Approx(p.w_coeffs(i, q)).epsilon(1e-12));
      }
    }
    CHECK(p.y_coeffs.cols() == 2 * d.r);
    CHECK(p.w_coeffs.cols() == d.r);
  }
}

TEST_CASE("time reversal symmetry at rho = 0") {
  std::mt19937_64 rng(77);
  std::uniform_real_distribution<double> duration(0.1, 10.0);
  for (int trial = 0; trial < 100; ++trial) {
    const FlatDims d{2, 2};
    const FlatState z0 = oracle::random_state(d, rng, 10.0);
    const FlatState zf = oracle::random_state(d, rng, 10.0);
    const double T = duration(rng);
    const CostWeights w(2, 0.0);
    const double forward = solve_bvp_fixed_time(z0, zf, T, w).cost;
    const double backward = solve_bvp_fixed_time(zf.reversed(), z0.reversed(), T, w).cost;
    CHECK(std::abs(forward - backward) <= 1e-9 * std::max(1.0, forward));
  }
}

TEST_CASE("reverse_path traces the same curve backwards") {
  const CostWeights w(2, 1.0);
  const LocalFlatPath p = solve_bvp_fixed_time(state(2, 2, {0, 0, 1, 0}), state(2, 2, {2, 1, 0, 1}), 1.7, w);
  const LocalFlatPath q = reverse_path(p);
  for (double t : {0.0, 0.3, 0.9, 1.7}) {
    const PathSample a = eval_path(p, t);
    const PathSample b = eval_path(q, 1.7 - t);
    CHECK(max_abs_diff(a.z.reversed().data(), b.z.data()) < 1e-12);
    CHECK(std::abs(a.w(0) - b.w(0)) < 1e-12);
  }
}

TEST_CASE("minimum-time quartic") {
  const CostWeights w(1, 1.0);
  MinTime t = min_time_quartic_r2(state(1, 2, {0, 0}), state(1, 2, {1, 0}), w);
  CHECK(t.status == MinTimeStatus::Interior);
  CHECK(t.duration == doctest::Approx(std::sqrt(6.0)).epsilon(1e-12));
  CHECK(bvp_cost(state(1, 2, {0, 0}), state(1, 2, {1, 0}), t.duration, w) ==
        doctest::Approx(8.0 / std::sqrt(6.0)).epsilon(1e-12));
  auto grid = [](double T) { return 12.0 / (T * T * T) + T; };
  CHECK(oracle::grid_argmin(grid, 0.0, 10.0, 1e-5, 1e-5) == doctest::Approx(2.44949).epsilon(1e-5));

  t = min_time_quartic_r2(state(1, 2, {0, 0}), state(1, 2, {0, 0}), w);
  CHECK(t.status == MinTimeStatus::Degenerate);
  CHECK(t.duration == kMinSegmentDuration);

  // Frozen from the grid oracle on 48/T^3 + T: argmin = 144^(1/4).
  auto grid2 = [](double T) { return 48.0 / (T * T * T) + T; };
  const double oracle_t = oracle::grid_argmin(grid2, 0.0, 10.0, 1e-3, 1e-5);
  CHECK(oracle_t == doctest::Approx(3.46410).epsilon(1e-5));
  t = min_time_quartic_r2(state(1, 2, {0, 0}), state(1, 2, {2, 0}), w);
  CHECK(t.duration == doctest::Approx(3.4641016151377544).epsilon(1e-12));

  CHECK_THROWS_AS(min_time_quartic_r2(state(1, 3, {0, 0, 0}), state(1, 3, {1, 0, 0}), w), Error);
  CHECK_THROWS_AS(min_time_quartic_r2(state(1, 2, {0, 0}), state(1, 2, {1, 0}), CostWeights(1, 0.0)), Error);
}

TEST_CASE("general minimum-time solver") {
  const CostWeights w(1, 1.0);
  MinTime t = min_time_general(state(1, 1, {0}), state(1, 1, {1}), w);
  CHECK(t.status == MinTimeStatus::Interior);
  CHECK(t.duration == doctest::Approx(1.0).epsilon(1e-10));

  // Rest-to-rest minimum jerk: C = 720/T^5 + T, grid oracle.
  const FlatState a = state(1, 3, {0, 0, 0});
  const FlatState b = state(1, 3, {1, 0, 0});
  auto cost = [&](double T) { return bvp_cost(a, b, T, w); };
  const double expect = oracle::grid_argmin(cost, 0.0, 10.0, 1e-3, 1e-5);
  t = min_time_general(a, b, w);
  CHECK(t.duration == doctest::Approx(expect).epsilon(1e-4));
  CHECK(t.duration == doctest::Approx(std::pow(3600.0, 1.0 / 6.0)).epsilon(1e-9));

  CHECK_THROWS_AS(min_time_general(a, b, w, {1.0, 0.5}), Error);
  CHECK_THROWS_AS(min_time_general(a, b, w, {0.0, 5.0}), Error);
  CHECK(min_time_general(a, a, w).status == MinTimeStatus::Degenerate);
}

TEST_CASE("minimum-time stationarity and cross-check between solvers") {
  std::mt19937_64 rng(99);
  for (int trial = 0; trial < 200; ++trial) {
    const FlatDims d{1 + trial % 3, 2};
    const FlatState z0 = oracle::random_state(d, rng, 10.0);
    const FlatState zf = oracle::random_state(d, rng, 10.0);
    const CostWeights w(d.n, 1.0);
    const MinTime q = min_time_quartic_r2(z0, zf, w);
    const MinTime g = min_time_general(z0, zf, w);
    REQUIRE(q.status == MinTimeStatus::Interior);
    CHECK(g.duration == doctest::Approx(q.duration).epsilon(1e-6));
    for (const MinTime& m : {q, g}) {
      const double T = m.duration;
      const double c = bvp_cost(z0, zf, T, w);
      const double h = 1e-5 * T;
      const double fd = (bvp_cost(z0, zf, T + h, w) - bvp_cost(z0, zf, T - h, w)) / (2 * h);
      CHECK(std::abs(fd) <= 1e-5 * c);
      CHECK(bvp_cost(z0, zf, T * 1.01, w) >= c);
      CHECK(bvp_cost(z0, zf, T * 0.99, w) >= c);
      CHECK(std::abs(bvp_cost_derivative(z0, zf, T, w)) <= 1e-8 * std::max(1.0, c));
    }
  }
}

TEST_CASE("analytic cost derivative agrees with finite differences") {
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 100; ++trial) {
    const FlatDims d{1 + trial % 4, 1 + trial % 4};
    const FlatState z0 = oracle::random_state(d, rng, 5.0);
    const FlatState zf = oracle::random_state(d, rng, 5.0);
    Eigen::MatrixXd m = Eigen::MatrixXd::Random(d.n, d.n);
    const CostWeights w(m * m.transpose() + Eigen::MatrixXd::Identity(d.n, d.n), 0.3);
    const double T = 0.5 + 0.05 * trial;
    const double h = 1e-6 * T;
    const double fd = (bvp_cost(z0, zf, T + h, w) - bvp_cost(z0, zf, T - h, w)) / (2 * h);
    CHECK(bvp_cost_derivative(z0, zf, T, w) == doctest::Approx(fd).epsilon(1e-5));
  }
}

TEST_CASE("propagate integrates a constant pseudo-control") {
  const CostWeights w(1, 0.0);
  const double w0 = -4.0;
  const LocalFlatPath p = propagate(state(1, 2, {1, 2}), std::span<const double>(&w0, 1), 0.5, w);
  CHECK(p.y_coeffs(0, 0) == doctest::Approx(1.0));
  CHECK(p.y_coeffs(0, 1) == doctest::Approx(2.0));
  CHECK(p.y_coeffs(0, 2) == doctest::Approx(-2.0));
  CHECK(p.zf(0, 0) == doctest::Approx(1.5));
  CHECK(p.zf(1, 0) == doctest::Approx(0.0));
  const PathSample s = eval_path(p, 0.25);
  CHECK(s.z(0, 0) == doctest::Approx(1.375));
  CHECK(s.z(1, 0) == doctest::Approx(1.0));
  CHECK(p.cost == doctest::Approx(16.0 * 0.5));

  const std::vector<double> w3{6, -6};
  const LocalFlatPath c = propagate(FlatState({2, 3}), w3, 1.0, CostWeights(2, 1.0));
  CHECK(c.zf == state(2, 3, {1, -1, 3, -3, 6, -6}));
  CHECK(c.cost == doctest::Approx(72.0 + 1.0));

  const FlatState z = state(2, 2, {0.3, -1, 2, 0.5});
  const std::vector<double> zero{0, 0};
  const LocalFlatPath drift = propagate(z, zero, 2.0, CostWeights(2, 0.0));
  for (double t : {0.0, 0.7, 2.0}) CHECK(max_abs_diff(eval_path(drift, t).z.data(), phi(z, t).data()) < 1e-12);
  CHECK_THROWS_AS(propagate(z, zero, 0.0, CostWeights(2, 0.0)), Error);
}

TEST_CASE("eval_path domain") {
  const LocalFlatPath p = solve_bvp_fixed_time(state(1, 2, {0, 0}), state(1, 2, {1, 0}), 1.0, CostWeights(1, 1.0));
  CHECK(eval_path(p, 1.0 + 5e-13).z(0, 0) == doctest::Approx(1.0));
  CHECK(eval_path(p, -5e-13).z(0, 0) == doctest::Approx(0.0));
  CHECK_THROWS_AS(eval_path(p, 1.0 + 1e-9), Error);
  CHECK_THROWS_AS(eval_path(p, -1e-9), Error);
}

TEST_CASE("truncate keeps the polynomial and recomputes cost") {
  const CostWeights w(1, 1.0);
  const LocalFlatPath p = solve_bvp_fixed_time(state(1, 2, {0, 0}), state(1, 2, {1, 0}), 1.0, w);
  const LocalFlatPath half = truncate(p, 0.5, w);
  const double effort = oracle::simpson([](double t) { return (6 - 12 * t) * (6 - 12 * t); }, 0.0, 0.5, 1000);
  CHECK(half.cost == doctest::Approx(effort + 0.5));
  CHECK(half.zf(0, 0) == doctest::Approx(0.5));
  CHECK(control_effort(p, w) == doctest::Approx(12.0));
}

TEST_CASE("cost weights validation") {
  Eigen::MatrixXd bad(2, 2);
  bad << 1, 2, 2, 1;
  CHECK_THROWS_AS(CostWeights(bad, 1.0), Error);
  Eigen::MatrixXd asym(2, 2);
  asym << 2, 1, 0, 2;
  CHECK_THROWS_AS(CostWeights(asym, 1.0), Error);
  CHECK(CostWeights(3, 1.0).scalar_weight() == 1.0);
  CHECK(CostWeights(Eigen::MatrixXd::Identity(2, 2) * 2.5, 1.0).scalar_weight() == 2.5);
}
