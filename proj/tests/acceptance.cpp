// Acceptance run: one PASS/FAIL line per criterion, tolerances fixed below.
// Exit status is the number of failed criteria.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include "flask/scene_io.hpp"
#include "oracles.hpp"

using namespace flask;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

int failures = 0;

void report(int id, bool ok, const std::string& detail) {
  std::printf("criterion %d: %s  %s\n", id, ok ? "PASS" : "FAIL", detail.c_str());
  std::fflush(stdout);
  failures += ok ? 0 : 1;
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double median(std::vector<double> v) {
  if (v.empty()) return std::nan("");
  std::sort(v.begin(), v.end());
  const std::size_t m = v.size() / 2;
  return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

double rel(double a, double b) { return std::abs(a - b) / std::max(std::abs(b), 1e-300); }

// 8-point Gauss-Legendre on `pieces` equal subintervals; exact for the
// polynomial integrands used here.
template <typename F>
auto gauss(F f, double lo, double hi, int pieces = 4) {
  static const double x[8] = {-0.9602898564975363, -0.7966664774136267, -0.5255324099163290, -0.1834346424956498,
                              0.1834346424956498,  0.5255324099163290,  0.7966664774136267,  0.9602898564975363};
  static const double w[8] = {0.1012285362903763, 0.2223810344533745, 0.3137066458778873, 0.3626837833783620,
                              0.3626837833783620, 0.3137066458778873, 0.2223810344533745, 0.1012285362903763};
  const double h = (hi - lo) / pieces;
  using R = std::decay_t<decltype(f(lo))>;
  R acc = f(lo) * 0.0;
  for (int p = 0; p < pieces; ++p) {
    const double a = lo + p * h;
    for (int i = 0; i < 8; ++i) acc += f(a + 0.5 * h * (x[i] + 1.0)) * (0.5 * h * w[i]);
  }
  return acc;
}

Problem problem(const std::string& name) { return load_problem(std::string(FLASK_PROBLEM_DIR) + "/" + name + ".json"); }

PlannerConfig file_config(const std::string& name) {
  return read_problem_file(std::string(FLASK_PROBLEM_DIR) + "/" + name + ".json").planner;
}

// ---------------------------------------------------------------- 1

void bvp_correctness() {
  constexpr int kInstances = 1000;
  constexpr double kBoundaryTol = 1e-9;
  constexpr double kCostTol = 1e-6;
  constexpr double kGramianTol = 1e-8;
  constexpr double kSeconds = 10.0;

  const auto t0 = Clock::now();
  std::mt19937_64 rng(1);
  std::uniform_int_distribution<int> rdist(1, 4), ndist(1, 8);
  std::uniform_real_distribution<double> tdist(0.1, 10.0), rho(0.0, 2.0);
  double worst_b = 0.0, worst_c = 0.0, worst_g = 0.0, worst_floor = 0.0;
  for (int k = 0; k < kInstances; ++k) {
    const FlatDims d{ndist(rng), rdist(rng)};
    const FlatState z0 = oracle::random_state(d, rng, 10.0);
    const FlatState zf = oracle::random_state(d, rng, 10.0);
    const double T = tdist(rng);
    Eigen::MatrixXd m = Eigen::MatrixXd::Random(d.n, d.n);
    const CostWeights w(m * m.transpose() + 0.5 * Eigen::MatrixXd::Identity(d.n, d.n), rho(rng));
    const LocalFlatPath p = solve_bvp_fixed_time(z0, zf, T, w);

    const FlatState a = eval_path(p, 0.0).z;
    const FlatState b = eval_path(p, T).z;
    for (int j = 0; j < d.r; ++j) {
      for (int i = 0; i < d.n; ++i) {
        const double err = std::max(std::abs(a(j, i) - z0(j, i)), std::abs(b(j, i) - zf(j, i)));
        worst_b = std::max(worst_b, err);
        // Rounding floor of the monomial form at T: eps times the sum of the
        // magnitudes that cancel in the j-th derivative.
        double mass = 0.0;
        for (int k = j; k < 2 * d.r; ++k) {
          double f = 1.0;
          for (int q = 0; q < j; ++q) f *= k - q;
          mass += std::abs(p.y_coeffs(i, k)) * f * std::pow(T, k - j);
        }
        worst_floor = std::max(worst_floor, err / (std::numeric_limits<double>::epsilon() * mass));
      }
    }

    const double effort = gauss(
        [&](double t) {
          const Eigen::VectorXd u = eval_path(p, t).w;
          return u.dot(w.rw() * u);
        },
        0.0, T);
    worst_c = std::max(worst_c, rel(p.cost, effort + w.rho() * T));

    const Eigen::MatrixXd ad = oracle::dense_a(d);
    const Eigen::MatrixXd bd = oracle::dense_b(d);
    const Eigen::MatrixXd rinv = w.rw().inverse();
    const Eigen::MatrixXd gq = gauss(
        [&](double t) -> Eigen::MatrixXd {
          const Eigen::MatrixXd eb = oracle::dense_expm(ad, t) * bd;
          return eb * rinv * eb.transpose();
        },
        0.0, T);
    const Eigen::MatrixXd g = gramian(d, w, T).dense();
    worst_g = std::max(worst_g, (g - gq).cwiseAbs().maxCoeff() / gq.cwiseAbs().maxCoeff());
  }
  const double secs = seconds_since(t0);
  report(1, worst_b <= kBoundaryTol && worst_c <= kCostTol && worst_g <= kGramianTol && secs < kSeconds,
         fmt("BVP: %d instances, boundary abs %.1e (tol %.0e, <= %.1f x rounding floor), cost rel %.1e (tol %.0e), Gramian rel %.1e (tol %.0e), %.2f s (< %.0f)",
             kInstances, worst_b, kBoundaryTol, worst_floor, worst_c, kCostTol, worst_g, kGramianTol, secs, kSeconds));
}

// ---------------------------------------------------------------- 2

void min_time_correctness() {
  constexpr int kInstances = 500;
  constexpr double kGridStep = 1e-5;
  constexpr double kGridTol = 1e-4;
  constexpr double kSolverTol = 1e-6;
  constexpr double kSeconds = 30.0;

  const auto t0 = Clock::now();
  std::mt19937_64 rng(2);
  std::uniform_int_distribution<int> ndist(1, 8);
  double worst_grid = 0.0, worst_general = 0.0;
  for (int k = 0; k < kInstances; ++k) {
    const FlatDims d{ndist(rng), 2};
    const FlatState z0 = oracle::random_state(d, rng, 10.0);
    const FlatState zf = oracle::random_state(d, rng, 10.0);
    const CostWeights w(d.n, 1.0);
    const MinTime q = min_time_quartic_r2(z0, zf, w);
    const MinTime g = min_time_general(z0, zf, w);
    const double hi = 3.0 * q.duration + 5.0;
    const double grid = oracle::grid_argmin([&](double t) { return bvp_cost(z0, zf, t, w); }, 0.0, hi, 1e-2, kGridStep);
    worst_grid = std::max(worst_grid, rel(q.duration, grid));
    worst_general = std::max(worst_general, rel(g.duration, q.duration));
  }
  const double secs = seconds_since(t0);
  report(2, worst_grid <= kGridTol && worst_general <= kSolverTol && secs < kSeconds,
         fmt("min-time: %d r=2 instances, quartic vs %.0e grid rel %.1e (tol %.0e), general vs quartic rel %.1e "
             "(tol %.0e), %.2f s (< %.0f)",
             kInstances, kGridStep, worst_grid, kGridTol, worst_general, kSolverTol, secs, kSeconds));
}

// ---------------------------------------------------------------- 3

void lane_equivalence() {
  constexpr int kInstances = 10000;
  constexpr double kSeconds = 60.0;

  const auto t0 = Clock::now();
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> pos(-2.0, 2.0), vel(-1.5, 1.5), dur(0.5, 3.0);
  std::uniform_real_distribution<double> spos(-2.5, 2.5), srad(0.05, 0.4);
  const UnicycleMap map(UnicycleLimits{10.0, 50.0});
  const RobotGeometry robot = RobotGeometry::mobile(0.1);
  ValidationConfig cfg;
  const CostWeights w(2, 1.0);
  int mismatches = 0, invalid = 0;
  for (int k = 0; k < kInstances; ++k) {
    SphereSet s;
    for (int i = 0; i < 1 + k % 12; ++i) s.add({spos(rng), spos(rng), 0.0}, srad(rng));
    const ObstacleLanes lanes(s);
    const CcContext ctx{&map, &robot, &lanes, &cfg};
    const FlatState a({2, 2}, {pos(rng), pos(rng), vel(rng), vel(rng)});
    const FlatState b({2, 2}, {pos(rng), pos(rng), vel(rng), vel(rng)});
    const LocalFlatPath p = solve_bvp_fixed_time(a, b, dur(rng), w);
    cfg.lane_width = 1;
    const bool ref = flask_cc(p, ctx).valid;
    invalid += ref ? 0 : 1;
    for (int lanes_k : {4, 8}) {
      cfg.lane_width = lanes_k;
      mismatches += flask_cc(p, ctx).valid != ref ? 1 : 0;
    }
  }
  const double secs = seconds_since(t0);
  report(3, mismatches == 0 && secs < kSeconds,
         fmt("lanes: %d instances (%d invalid), verdict mismatches across K in {1,4,8}: %d, %.2f s (< %.0f)", kInstances,
             invalid, mismatches, secs, kSeconds));
}

// ---------------------------------------------------------------- 4

void tracking() {
  constexpr int kPerFamily = 50;
  constexpr double kRateTol = 1e-4;

  const char* families[][2] = {{"unicycle", "wall_unicycle"},
                               {"planar quadrotor", "hole_planar_quadrotor"},
                               {"quadrotor", "window_quadrotor"},
                               {"two-link arm", "arm_corridor"}};
  bool ok = true;
  std::string detail = "RK4 round trip, 50 trajectories per family, worst rate (tol 1e-4 per s):";
  for (const auto& f : families) {
    const Problem pb = problem(f[1]);
    PlannerConfig cfg = file_config(f[1]);
    double worst = 0.0;
    int planned = 0;
    bool singular = false;
    for (std::uint64_t seed = 0; planned < kPerFamily && seed < 4 * kPerFamily; ++seed) {
      cfg.seed = seed;
      const PlanResult r = plan(pb, cfg);
      if (!r.success) continue;
      ++planned;
      const TrackingReport t = rk4_tracking(r.trajectory, *pb.map);
      worst = std::max(worst, t.worst_rate);
      singular = singular || t.singular;
    }
    ok = ok && planned == kPerFamily && worst <= kRateTol && !singular;
    detail += fmt(" %s %.1e (%d)", f[0], worst, planned);
  }
  report(4, ok, detail);
}

// ---------------------------------------------------------------- 5, 6, 8

struct Row {
  bool success = false;
  double length = 0.0;
  double time_ms = 0.0;
  double raw_cost = 0.0;
  double cost = 0.0;
  PiecewiseTrajectory trajectory;
};

std::vector<Row> run_seeds(const Problem& pb, PlannerConfig cfg, int seeds) {
  std::vector<Row> rows;
  for (int s = 0; s < seeds; ++s) {
    cfg.seed = static_cast<std::uint64_t>(s);
    const PlanResult r = plan(pb, cfg);
    Row row;
    row.success = r.success;
    row.time_ms = r.stats.time_ms;
    if (r.success) {
      row.length = r.length;
      row.raw_cost = r.raw.cost();
      row.cost = r.cost;
      row.trajectory = r.trajectory;
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

struct Band {
  const char* name;
  double lo, hi, published, min_success;
};

void table_reproduction(std::vector<std::pair<Problem, std::vector<Row>>>& runs) {
  constexpr int kSeeds = 100;
  constexpr double kTimeMs = 100.0;
  const Band bands[] = {{"wall_unicycle", 3.5, 7.0, 4.82, 0.95},
                        {"bugtrap_unicycle", 10.0, 16.0, 12.39, 0.90},
                        {"hole_planar_quadrotor", 4.0, 8.0, 5.16, 0.90}};
  bool ok = true;
  std::string detail = "RRTConnect, 100 seeds:";
  for (const Band& b : bands) {
    Problem pb = problem(b.name);
    PlannerConfig cfg = file_config(b.name);
    cfg.variant = Variant::RrtConnect;
    auto rows = run_seeds(pb, cfg, kSeeds);
    std::vector<double> len, ms;
    int succ = 0;
    for (const Row& r : rows) {
      ms.push_back(r.time_ms);
      if (!r.success) continue;
      ++succ;
      len.push_back(r.length);
    }
    const double ml = median(len);
    const double mt = median(ms);
    const double rate = double(succ) / kSeeds;
    const bool row_ok = ml >= b.lo && ml <= b.hi && rate >= b.min_success && mt <= kTimeMs;
    ok = ok && row_ok;
    detail += fmt(" | %s len %.2f in [%.1f, %.1f] (published %.2f), success %d%% (>= %.0f%%), time %.2f ms (<= %.0f)", b.name,
                  ml, b.lo, b.hi, b.published, succ, 100 * b.min_success, mt, kTimeMs);
    runs.emplace_back(std::move(pb), std::move(rows));
  }
  report(5, ok, detail);
}

void postprocessing(const std::vector<std::pair<Problem, std::vector<Row>>>& runs) {
  constexpr double kSlack = 1e-9;
  constexpr double kCollapse = 0.95;

  int checked = 0, worse = 0;
  for (const auto& [pb, rows] : runs) {
    for (const Row& r : rows) {
      if (!r.success) continue;
      ++checked;
      worse += r.cost <= r.raw_cost + kSlack ? 0 : 1;
    }
  }

  // Obstacle-free copies of the same problems: raw multi-segment plans.
  int inputs = 0, collapsed = 0;
  for (const auto& [orig, rows] : runs) {
    Problem pb = orig;
    pb.obstacles = SphereSet{};
    pb.prepare();
    PlannerConfig cfg = file_config(pb.name);
    cfg.postprocess = false;
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
      cfg.seed = seed;
      const PlanResult r = plan(pb, cfg);
      if (!r.success || r.raw.size() < 2) continue;
      ++inputs;
      const PiecewiseTrajectory out = postprocess(r.raw, pb, cfg);
      collapsed += out.size() == 1 ? 1 : 0;
      worse += out.cost() <= r.raw.cost() + kSlack ? 0 : 1;
    }
  }
  const double frac = inputs ? double(collapsed) / inputs : 0.0;
  report(6, worse == 0 && inputs > 0 && frac >= kCollapse,
         fmt("postprocess: cost increases %d over %d benchmark successes (slack %.0e); obstacle-free inputs collapsed "
             "%d / %d = %.1f%% (>= %.0f%%)",
             worse, checked, kSlack, collapsed, inputs, 100 * frac, 100 * kCollapse));
}

void dense_validation(const std::vector<std::pair<Problem, std::vector<Row>>>& runs) {
  constexpr double kScale = 10.0;
  constexpr double kPassRate = 0.95;

  int total = 0, passed = 0, unexplained = 0;
  std::string failed;
  for (const auto& [pb, rows] : runs) {
    for (std::size_t s = 0; s < rows.size(); ++s) {
      if (!rows[s].success) continue;
      ++total;
      const ValidationReport rep = validate_trajectory(rows[s].trajectory, pb, kScale);
      if (rep.ok) {
        ++passed;
        continue;
      }
      const bool explained = rep.clearance < pb.validation.resolution;
      unexplained += explained ? 0 : 1;
      failed += fmt(" [%s seed %zu: %s at t=%.3f, clearance %.4f]", pb.name.c_str(), s, rep.failure.c_str(), rep.t_fail,
                    rep.clearance);
    }
  }
  const double rate = total ? double(passed) / total : 0.0;
  report(8, rate >= kPassRate && unexplained == 0,
         fmt("validate at %.0fx resolution: %d / %d = %.1f%% pass (>= %.0f%%), failures without clearance < "
             "resolution: %d%s",
             kScale, passed, total, 100 * rate, 100 * kPassRate, unexplained, failed.c_str()));
}

// ---------------------------------------------------------------- 7

void variant_ordering() {
  constexpr int kSeeds = 50;
  bool ok = true;
  std::string detail = "median planning ms over 50 seeds, RRTConnect < SstBvpAug < SstSimdOnly:";
  for (const char* name : {"wall_unicycle", "bugtrap_unicycle"}) {
    const Problem pb = problem(name);
    double med[3];
    int i = 0;
    for (Variant v : {Variant::RrtConnect, Variant::SstBvpAug, Variant::SstSimdOnly}) {
      PlannerConfig cfg = file_config(name);
      cfg.variant = v;
      cfg.postprocess = false;
      std::vector<double> ms;
      for (const Row& r : run_seeds(pb, cfg, kSeeds)) ms.push_back(r.time_ms);
      med[i++] = median(ms);
    }
    ok = ok && med[0] < med[1] && med[1] < med[2];
    detail += fmt(" | %s %.2f / %.2f / %.2f", name, med[0], med[1], med[2]);
  }
  report(7, ok, detail);
}

}  // namespace

int main() {
  bvp_correctness();
  min_time_correctness();
  lane_equivalence();
  tracking();
  std::vector<std::pair<Problem, std::vector<Row>>> runs;
  table_reproduction(runs);
  postprocessing(runs);
  variant_ordering();
  dense_validation(runs);
  std::printf("%d criteria failed\n", failures);
  return failures;
}
