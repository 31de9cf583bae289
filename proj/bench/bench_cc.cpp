// Validation throughput: lane-batched flask_cc against the scalar reference,
// and the OpenMP path loop against its serial twin.
//
//   bench_cc [--paths N] [--repeat R] [--problem file]

#include <CLI11.hpp>
#include <omp.h>

#include <chrono>
#include <cstdio>
#include <random>

#include "flask/scene_io.hpp"

using namespace flask;

namespace {

using Clock = std::chrono::steady_clock;

template <typename F>
double best_ms(int repeat, F&& f) {
  double best = 1e300;
  for (int i = 0; i < repeat; ++i) {
    const auto t0 = Clock::now();
    f();
    best = std::min(best, std::chrono::duration<double, std::milli>(Clock::now() - t0).count());
  }
  return best;
}

std::vector<LocalFlatPath> random_paths(const Problem& pb, int count, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<LocalFlatPath> out;
  const auto rn = static_cast<std::size_t>(pb.dims.state_size());
  while (static_cast<int>(out.size()) < count) {
    std::vector<double> a(rn), b(rn);
    for (std::size_t i = 0; i < rn; ++i) {
      std::uniform_real_distribution<double> u(pb.sample.lo[i], pb.sample.hi[i]);
      a[i] = u(rng);
      b[i] = u(rng);
    }
    FlatState z0(pb.dims, a);
    if (pb.check_state(z0) != CcReason::None) continue;
    out.push_back(solve_bvp_min_time(z0, FlatState(pb.dims, b), pb.weights));
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"flask_cc benchmark"};
  int count = 2000;
  int repeat = 5;
  std::string problem = std::string(FLASK_PROBLEM_DIR) + "/bugtrap_unicycle.json";
  app.add_option("--paths", count, "Random local paths")->check(CLI::PositiveNumber);
  app.add_option("--repeat", repeat, "Timing repetitions (best kept)")->check(CLI::PositiveNumber);
  app.add_option("--problem", problem, "Problem file supplying the scene");
  CLI11_PARSE(app, argc, argv);

  Problem pb = load_problem(problem);
  // Collision work only: limit failures would end most paths at the first batch.
  pb.validation.original_limits = false;
  pb.validation.flat_lo.clear();
  pb.validation.flat_hi.clear();
  const auto paths = random_paths(pb, count, 1);
  std::printf("problem %s, %d paths, %zu obstacle spheres, %d threads\n", pb.name.c_str(), count,
              pb.obstacles.size(), omp_get_max_threads());

  long valid = 0;
  for (const auto& p : paths) valid += flask_cc_scalar(p, pb.context()).valid ? 1 : 0;
  std::printf("valid paths: %ld\n\n", valid);

  std::printf("%-28s %12s %12s\n", "kernel", "ms", "us/path");
  auto row = [&](const char* name, double ms) { std::printf("%-28s %12.3f %12.3f\n", name, ms, 1e3 * ms / count); };

  volatile long sink = 0;
  row("scalar reference", best_ms(repeat, [&] {
        for (const auto& p : paths) sink = sink + flask_cc_scalar(p, pb.context()).samples;
      }));
  for (int k : {1, 4, 8, 16}) {
    pb.validation.lane_width = k;
    char name[64];
    std::snprintf(name, sizeof name, "batched K=%d", k);
    row(name, best_ms(repeat, [&] {
          for (const auto& p : paths) sink = sink + flask_cc(p, pb.context()).samples;
        }));
  }
  pb.validation.lane_width = 8;
  row("many, serial", best_ms(repeat, [&] { sink = sink + static_cast<long>(flask_cc_many_serial(paths, pb.context()).size()); }));
  row("many, OpenMP", best_ms(repeat, [&] { sink = sink + static_cast<long>(flask_cc_many(paths, pb.context()).size()); }));

  // Both loops must agree path by path.
  const auto a = flask_cc_many_serial(paths, pb.context());
  const auto b = flask_cc_many(paths, pb.context());
  long mismatch = 0;
  for (std::size_t i = 0; i < a.size(); ++i) mismatch += a[i].valid != b[i].valid ? 1 : 0;
  std::printf("\nserial/parallel verdict mismatches: %ld\n", mismatch);
  return mismatch == 0 ? 0 : 1;
}
