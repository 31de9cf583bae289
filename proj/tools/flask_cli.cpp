// flask: plan a problem, sweep a benchmark, or re-validate a trajectory.
//
//   flask plan wall_unicycle --seed 7 --variant rrtconnect --out wall.traj
//   flask bench 'problems/*_unicycle.json' --seeds 100 --variants rrtconnect,sst_bvp --csv out.csv
//   flask validate wall.traj wall_unicycle --resolution-scale 10
//
// Exit codes: 0 ok, 1 input error, 2 planner failure, 3 validation failure.

#include <CLI11.hpp>
#include <glob.h>
#include <omp.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>

#include "flask/scene_io.hpp"

#ifndef FLASK_PROBLEM_DIR
#define FLASK_PROBLEM_DIR "problems"
#endif

namespace fs = std::filesystem;
using namespace flask;

namespace {

// A bare name like "wall_unicycle" is looked up in the problem directory.
fs::path resolve_problem(const std::string& arg) {
  fs::path p(arg);
  if (fs::exists(p)) return p;
  if (!p.has_parent_path()) {
    for (const char* dir : {static_cast<const char*>(std::getenv("FLASK_PROBLEM_DIR")), FLASK_PROBLEM_DIR}) {
      if (!dir) continue;
      fs::path cand = fs::path(dir) / p;
      if (!cand.has_extension()) cand += ".json";
      if (fs::exists(cand)) return cand;
    }
  }
  throw Error(ErrorCode::IoError, "problem file '" + arg + "' not found");
}

std::vector<fs::path> expand(const std::string& pattern) {
  std::vector<fs::path> out;
  glob_t g{};
  if (glob(pattern.c_str(), 0, nullptr, &g) == 0) {
    for (std::size_t i = 0; i < g.gl_pathc; ++i) out.emplace_back(g.gl_pathv[i]);
  }
  globfree(&g);
  if (out.empty()) {
    try {
      out.push_back(resolve_problem(pattern));
    } catch (const Error&) {
    }
  }
  return out;
}

std::string fmt(double v, int prec = 6) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*g", prec, v);
  return buf;
}

// Linear-interpolated percentile of sorted data.
double percentile(const std::vector<double>& sorted, double q) {
  if (sorted.empty()) return std::nan("");
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (pos - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

struct PlanOpts {
  std::string problem;
  std::uint64_t seed = 0;
  std::string variant;
  std::string out;
  long max_iters = 0;
  double time_limit = 0.0;
  double dt = 0.05;
  bool no_post = false;
};

PlannerConfig config_for(const ProblemFile& pf, const std::string& variant, long max_iters, double time_limit) {
  PlannerConfig cfg = pf.planner;
  if (!variant.empty()) cfg.variant = parse_variant(variant);
  if (max_iters > 0) cfg.max_iters = max_iters;
  if (time_limit > 0.0) cfg.time_limit_s = time_limit;
  return cfg;
}

int cmd_plan(const PlanOpts& o) {
  ProblemFile pf;
  Problem pb;
  PlannerConfig cfg;
  try {
    pf = read_problem_file(resolve_problem(o.problem));
    pb = build_problem(pf);
    cfg = config_for(pf, o.variant, o.max_iters, o.time_limit);
    cfg.seed = o.seed;
    if (o.no_post) cfg.postprocess = false;
    cfg.validate();
  } catch (const Error& e) {
    std::cerr << "flask plan: " << e.what() << "\n";
    return 1;
  }
  const PlanResult res = plan(pb, cfg);
  if (!res.success) {
    std::cerr << "flask plan: no trajectory found (" << res.failure << ") after " << res.stats.iterations
              << " iterations\n";
    return 2;
  }
  TrajectoryFile tf;
  tf.header = {pf.robot.type, pf.name, std::string(to_string(cfg.variant)), cfg.seed, config_hash(cfg, pf.name), true,
               res.cost, res.length, res.stats.time_ms, res.stats.post_ms};
  tf.trajectory = res.trajectory;
  tf.dt_out = o.dt;
  tf.samples = to_original_space(res.trajectory, *pb.map, o.dt);
  const std::string out = o.out.empty() ? pf.name + ".traj" : o.out;
  try {
    save_trajectory(tf, out);
  } catch (const Error& e) {
    std::cerr << "flask plan: " << e.what() << "\n";
    return 1;
  }
  std::cout << "cost=" << fmt(res.cost) << " length=" << fmt(res.length) << " time_ms=" << fmt(res.stats.time_ms)
            << " post_ms=" << fmt(res.stats.post_ms) << " segments=" << res.trajectory.size()
            << " nodes=" << res.stats.nodes << " iters=" << res.stats.iterations << " cc_calls=" << res.stats.cc_calls
            << " out=" << out << "\n";
  return 0;
}

struct BenchOpts {
  std::vector<std::string> patterns;
  int seeds = 10;
  std::uint64_t base_seed = 0;
  std::vector<std::string> variants{"rrtconnect"};
  std::string csv;
  long max_iters = 0;
  double time_limit = 0.0;
};

struct Row {
  std::string problem;
  std::string variant;
  std::uint64_t seed = 0;
  bool success = false;
  double length = 0.0;
  double cost = 0.0;
  double time_ms = 0.0;
  double total_ms = 0.0;
  int nodes = 0;
  long cc_calls = 0;
};

int cmd_bench(const BenchOpts& o) {
  std::vector<fs::path> files;
  for (const auto& p : o.patterns) {
    for (auto& f : expand(p)) files.push_back(std::move(f));
  }
  if (files.empty()) {
    std::cerr << "flask bench: no problem files match\n";
    return 1;
  }
  std::vector<ProblemFile> pfs;
  std::vector<Problem> pbs;
  std::vector<Variant> variants;
  try {
    for (const auto& f : files) {
      pfs.push_back(read_problem_file(f));
      pbs.push_back(build_problem(pfs.back()));
    }
    for (const auto& v : o.variants) variants.push_back(parse_variant(v));
  } catch (const Error& e) {
    std::cerr << "flask bench: " << e.what() << "\n";
    return 1;
  }

  std::vector<Row> rows;
  std::vector<PlannerConfig> cfgs;
  for (std::size_t p = 0; p < pbs.size(); ++p) {
    for (Variant v : variants) {
      for (int s = 0; s < o.seeds; ++s) {
        PlannerConfig cfg = config_for(pfs[p], "", o.max_iters, o.time_limit);
        cfg.variant = v;
        cfg.seed = o.base_seed + static_cast<std::uint64_t>(s);
        cfgs.push_back(cfg);
        rows.push_back({pfs[p].name, std::string(to_string(v)), cfg.seed});
      }
    }
  }
  if (const char* t = std::getenv("FLASK_THREADS")) omp_set_num_threads(std::max(1, std::atoi(t)));
  const auto per_problem = static_cast<std::ptrdiff_t>(variants.size()) * o.seeds;
  const auto count = static_cast<std::ptrdiff_t>(rows.size());
#pragma omp parallel for schedule(dynamic, 1)
  for (std::ptrdiff_t i = 0; i < count; ++i) {
    const Problem& pb = pbs[static_cast<std::size_t>(i / per_problem)];
    const PlanResult r = plan(pb, cfgs[static_cast<std::size_t>(i)]);
    Row& row = rows[static_cast<std::size_t>(i)];
    row.success = r.success;
    row.length = r.length;
    row.cost = r.cost;
    row.time_ms = r.stats.time_ms;
    row.total_ms = r.stats.time_ms + r.stats.post_ms;
    row.nodes = r.stats.nodes;
    row.cc_calls = r.stats.cc_calls;
  }

  if (!o.csv.empty()) {
    std::ofstream out(o.csv);
    if (!out) {
      std::cerr << "flask bench: cannot write '" << o.csv << "'\n";
      return 1;
    }
    out << "problem,variant,seed,success,length,cost,time_ms,nodes,cc_calls\n";
    for (const Row& r : rows) {
      out << r.problem << ',' << r.variant << ',' << r.seed << ',' << (r.success ? 1 : 0) << ',' << fmt(r.length, 17)
          << ',' << fmt(r.cost, 17) << ',' << fmt(r.time_ms, 17) << ',' << r.nodes << ',' << r.cc_calls << '\n';
    }
  }

  std::printf("%-26s %-11s %5s | %8s %8s %8s %8s | %9s %9s %9s %9s | %9s\n", "problem", "variant", "succ", "len_med",
              "len_p25", "len_p75", "len_p95", "ms_med", "ms_p25", "ms_p75", "ms_p95", "total_med");
  bool any = false;
  for (std::size_t g = 0; g < rows.size(); g += static_cast<std::size_t>(o.seeds)) {
    std::vector<double> len, ms, total;
    int ok = 0;
    for (std::size_t i = g; i < g + static_cast<std::size_t>(o.seeds); ++i) {
      if (!rows[i].success) continue;
      ++ok;
      len.push_back(rows[i].length);
      ms.push_back(rows[i].time_ms);
      total.push_back(rows[i].total_ms);
    }
    any = any || ok > 0;
    std::sort(len.begin(), len.end());
    std::sort(ms.begin(), ms.end());
    std::sort(total.begin(), total.end());
    std::printf("%-26s %-11s %2d/%-2d | %8.3f %8.3f %8.3f %8.3f | %9.3f %9.3f %9.3f %9.3f | %9.3f\n",
                rows[g].problem.c_str(), rows[g].variant.c_str(), ok, o.seeds, percentile(len, 0.5),
                percentile(len, 0.25), percentile(len, 0.75), percentile(len, 0.95), percentile(ms, 0.5),
                percentile(ms, 0.25), percentile(ms, 0.75), percentile(ms, 0.95), percentile(total, 0.5));
  }
  return any ? 0 : 2;
}

struct ValidateOpts {
  std::string trajectory;
  std::string problem;
  double scale = 10.0;
};

int cmd_validate(const ValidateOpts& o) {
  Problem pb;
  TrajectoryFile tf;
  try {
    pb = load_problem(resolve_problem(o.problem));
  } catch (const Error& e) {
    std::cerr << "flask validate: " << e.what() << "\n";
    return 1;
  }
  try {
    tf = load_trajectory(o.trajectory);
  } catch (const Error& e) {
    if (e.code() == ErrorCode::ValidationError) {
      std::cout << "FAIL continuity: " << e.what() << "\n";
      return 3;
    }
    std::cerr << "flask validate: " << e.what() << "\n";
    return 1;
  }
  const ValidationReport rep = validate_trajectory(tf.trajectory, pb, o.scale);
  const double table = sample_table_error(tf, *pb.map);
  std::cout << "segments=" << tf.trajectory.size() << " duration=" << fmt(tf.trajectory.duration())
            << " continuity=" << fmt(rep.continuity_error, 3) << " tracking_rate=" << fmt(rep.tracking_rate, 3)
            << " clearance=" << fmt(rep.clearance, 4) << " table_error=" << fmt(table, 3) << "\n";
  if (!rep.ok) {
    std::cout << "FAIL " << rep.failure << " at t=" << fmt(rep.t_fail, 9);
    if (rep.reason != CcReason::None) std::cout << " (" << to_string(rep.reason) << ")";
    std::cout << "\n";
    return 3;
  }
  if (!(table <= 1e-9)) {
    std::cout << "FAIL sample table does not match the segments\n";
    return 3;
  }
  std::cout << "PASS at resolution scale " << fmt(o.scale) << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Kinodynamic planning over flat outputs"};
  app.require_subcommand(1);

  PlanOpts po;
  auto* plan_cmd = app.add_subcommand("plan", "Plan one problem and write a trajectory file");
  plan_cmd->add_option("problem", po.problem, "Problem file or shipped problem name")->required();
  plan_cmd->add_option("--seed", po.seed, "RNG seed");
  plan_cmd->add_option("--variant", po.variant, "rrtconnect | sst_bvp | sst_simd | dp_rrt");
  plan_cmd->add_option("--out", po.out, "Trajectory file (default <name>.traj)");
  plan_cmd->add_option("--max-iters", po.max_iters, "Iteration budget override");
  plan_cmd->add_option("--time-limit", po.time_limit, "Wall-clock cap in seconds");
  plan_cmd->add_option("--dt", po.dt, "Sample spacing of the original-space table");
  plan_cmd->add_flag("--no-post", po.no_post, "Skip shortcut postprocessing");

  BenchOpts bo;
  auto* bench_cmd = app.add_subcommand("bench", "Run seeds x variants over problems");
  bench_cmd->add_option("problems", bo.patterns, "Problem files, globs or names")->required();
  bench_cmd->add_option("--seeds", bo.seeds, "Seeds per problem and variant")->check(CLI::PositiveNumber);
  bench_cmd->add_option("--base-seed", bo.base_seed, "First seed");
  bench_cmd->add_option("--variants", bo.variants, "Comma-separated variants")->delimiter(',');
  bench_cmd->add_option("--csv", bo.csv, "Per-row CSV output");
  bench_cmd->add_option("--max-iters", bo.max_iters, "Iteration budget override");
  bench_cmd->add_option("--time-limit", bo.time_limit, "Wall-clock cap per run in seconds");

  ValidateOpts vo;
  auto* val_cmd = app.add_subcommand("validate", "Re-check a trajectory against a problem");
  val_cmd->add_option("trajectory", vo.trajectory, "Trajectory file")->required();
  val_cmd->add_option("problem", vo.problem, "Problem file or shipped problem name")->required();
  val_cmd->add_option("--resolution-scale", vo.scale, "Check at resolution / scale")->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }
  try {
    if (*plan_cmd) return cmd_plan(po);
    if (*bench_cmd) return cmd_bench(bo);
    return cmd_validate(vo);
  } catch (const Error& e) {
    std::cerr << "flask: " << e.what() << "\n";
    return 1;
  }
}
