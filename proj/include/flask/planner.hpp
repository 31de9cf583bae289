#pragma once

// Sampling-based planners over the flat state space: graph bookkeeping, the
// extend step, bidirectional RRT with closed-form BVP edges, the SST* family
// driven by constant pseudo-control propagation, and shortcut postprocessing.

#include <cstdint>
#include <limits>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "flask/geometry.hpp"
#include "flask/trajectory.hpp"

namespace flask {

// ------------------------------------------------------------------ problem

/// Axis-aligned box in flat-state coordinates (r * n entries each).
struct FlatBox {
  std::vector<double> lo;
  std::vector<double> hi;

  bool contains(const FlatState& z) const;
  bool empty() const;
};

struct Problem {
  std::string name;
  std::shared_ptr<const FlatnessMap> map;
  RobotGeometry robot = RobotGeometry::mobile(0.1);
  SphereSet obstacles;
  ValidationConfig validation;
  FlatDims dims;
  CostWeights weights{1, 1.0};
  FlatState start;
  FlatBox goal;
  /// Root of the goal tree; must lie in the goal box.
  FlatState goal_state;
  /// Sampling box; defaults to the validation flat box when empty.
  FlatBox sample;
  /// Box for propagated pseudo-controls (n entries each).
  std::vector<double> w_lo;
  std::vector<double> w_hi;

  /// Builds the float obstacle lanes and checks every invariant: dimensions,
  /// start and goal-root validity, nonempty goal box. Throws SemanticError.
  void prepare();
  CcContext context() const;
  const ObstacleLanes& lanes() const { return lanes_; }
  const FlatBox& sample_box() const { return sample; }

  /// Validity of a single flat state (pseudo-control and higher derivatives
  /// taken as zero).
  CcReason check_state(const FlatState& z) const;

 private:
  ObstacleLanes lanes_;
};

// ------------------------------------------------------------------- config

enum class Variant { RrtConnect, SstBvpAug, SstSimdOnly, DpRrt };

std::string_view to_string(Variant v);
/// Accepts "rrtconnect", "sst_bvp", "sst_simd", "dp_rrt" (case-insensitive).
Variant parse_variant(std::string_view s);

struct PlannerConfig {
  Variant variant = Variant::RrtConnect;
  long max_iters = 1'000'000;
  std::uint64_t seed = 0;
  double goal_bias = 0.05;

  /// Neighbor cost threshold. With `zeta_schedule` it becomes
  /// zeta_c * (log N / N)^(1/D), D = (rn + r^2 n) / 2.
  double zeta = std::numeric_limits<double>::infinity();
  bool zeta_schedule = false;
  double zeta_c = 10.0;
  int neighbors = 16;
  /// BVP samples are pulled within this flat-position distance of the
  /// nearest node.
  double max_step = 1.0;
  /// BVP edges tried per extension, in increasing local cost.
  int extend_candidates = 1;

  double delta_s = 0.2;
  double delta_bn = 0.5;
  double t_min = 0.05;
  double t_max = 0.5;

  double time_limit_s = 60.0;
  TimeBracket bracket;
  bool postprocess = true;

  void validate() const;
};

double zeta_threshold(const PlannerConfig& cfg, int nodes, FlatDims dims);

/// Index of the smallest cost not above zeta, or -1.
int select_neighbor(std::span<const double> costs, double zeta);

// -------------------------------------------------------------------- graph

enum class TreeTag { Start, Goal };

struct PlanNode {
  FlatState z;
  int parent = -1;
  /// Forward in time: parent -> node on start trees, node -> parent on goal
  /// trees (goal-tree edges are stored already reversed).
  LocalFlatPath edge;
  /// Cost-to-come; cost-to-go on goal trees.
  double cost = 0.0;
  bool active = true;
  bool removed = false;
  int children = 0;
};

struct Witness {
  FlatState s;
  int rep = -1;
};

class PlanGraph {
 public:
  explicit PlanGraph(FlatDims dims, TreeTag tag = TreeTag::Start);

  FlatDims dims() const { return dims_; }
  TreeTag tag() const { return tag_; }
  int size() const { return static_cast<int>(nodes_.size()); }
  int live() const { return live_; }
  const PlanNode& node(int i) const { return nodes_[static_cast<std::size_t>(i)]; }

  int add_root(const FlatState& z);
  /// The new node's state is the free end of the edge.
  int add(int parent, LocalFlatPath edge);

  /// k nearest live nodes (optionally active only) by Euclidean flat-state
  /// distance, closest first.
  std::vector<int> nearest(const FlatState& q, int k, bool active_only = false) const;
  std::vector<int> within(const FlatState& q, double radius, bool active_only = true) const;
  double distance(int i, const FlatState& q) const;

  /// Marks a node inactive, then removes inactive leaves up the tree.
  void deactivate(int i);

  /// Node indices from the root down to i.
  std::vector<int> branch(int i) const;

  /// Edge endpoints and cost bookkeeping for every live node.
  bool well_formed(double tol = 1e-9) const;

  std::vector<Witness> witnesses;

 private:
  FlatDims dims_;
  TreeTag tag_;
  std::vector<PlanNode> nodes_;
  std::vector<double> coords_;  // flat copy of node states for scans
  int live_ = 0;
};

// ------------------------------------------------------------------ results

struct PlanStats {
  long iterations = 0;
  long cc_calls = 0;
  int nodes = 0;
  double time_ms = 0.0;       // to first solution
  double post_ms = 0.0;       // postprocessing
  int raw_segments = 0;
};

struct PlanResult {
  bool success = false;
  std::string failure;
  PiecewiseTrajectory raw;         // as found
  PiecewiseTrajectory trajectory;  // after postprocessing (equal to raw when off)
  PlanStats stats;
  double cost = 0.0;
  double length = 0.0;
};

// ---------------------------------------------------------------- operations

struct ExtendOutcome {
  int node = -1;  // -1 when rejected
  CcResult cc;
};

/// BVP mode: prefilter, local-cost neighbor choice under zeta, closed-form
/// path with optimal duration, validation. Returns the added node.
ExtendOutcome flask_extend(PlanGraph& graph, const FlatState& sample, const PlannerConfig& cfg, const Problem& problem,
                           PlanStats& stats);

/// Propagation mode: constant pseudo-control w from node `from` for `duration`.
ExtendOutcome flask_extend(PlanGraph& graph, int from, std::span<const double> w, double duration,
                           const Problem& problem, PlanStats& stats);

PlanResult plan(const Problem& problem, const PlannerConfig& cfg);
PlanResult rrtconnect_plan(const Problem& problem, const PlannerConfig& cfg);
PlanResult sst_plan(const Problem& problem, const PlannerConfig& cfg);

/// Shortcut pass: for i ascending and j descending, bypass segments i..j with
/// one minimum-time local path when it validates and does not cost more.
PiecewiseTrajectory postprocess(const PiecewiseTrajectory& traj, const Problem& problem, const PlannerConfig& cfg,
                                PlanStats* stats = nullptr);

struct ValidationReport {
  bool ok = true;
  std::string failure;  // first failed check, empty when ok
  double t_fail = 0.0;  // trajectory time of the first violation
  CcReason reason = CcReason::None;
  double continuity_error = 0.0;
  double tracking_rate = 0.0;
  double clearance = 0.0;  // smallest signed sphere gap over dense samples
};

/// Independent re-check of a trajectory: continuity, RK4 round trip of the
/// original dynamics, and validation of every segment at resolution / scale.
ValidationReport validate_trajectory(const PiecewiseTrajectory& traj, const Problem& problem, double resolution_scale,
                                     double tracking_tol = 1e-4);

/// Smallest signed distance between robot and obstacle spheres, sampled with
/// flat-position spacing at most `spacing`. Negative means penetration.
double trajectory_clearance(const PiecewiseTrajectory& traj, const Problem& problem, double spacing);

}  // namespace flask
