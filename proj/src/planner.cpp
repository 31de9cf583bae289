#include "flask/planner.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <optional>

namespace flask {

// ------------------------------------------------------------------ problem

bool FlatBox::contains(const FlatState& z) const {
  const auto d = z.data();
  if (lo.size() != d.size() || hi.size() != d.size()) return false;
  for (std::size_t i = 0; i < d.size(); ++i) {
    if (d[i] < lo[i] || d[i] > hi[i]) return false;
  }
  return true;
}

bool FlatBox::empty() const {
  if (lo.size() != hi.size() || lo.empty()) return true;
  for (std::size_t i = 0; i < lo.size(); ++i) {
    if (!(lo[i] <= hi[i])) return true;
  }
  return false;
}

namespace {

[[noreturn]] void semantic(const std::string& what) { throw Error(ErrorCode::SemanticError, what); }

}  // namespace

void Problem::prepare() {
  if (!map) semantic("problem has no flatness map");
  if (dims.n != map->flat_dim()) semantic("flat dimension does not match the robot");
  if (dims.r < 1 || std::max(dims.r, map->jet_order()) > kMaxJetOrder) semantic("unsupported derivative order r");
  if (weights.n() != dims.n) semantic("cost weights do not match the flat dimension");
  const auto rn = static_cast<std::size_t>(dims.state_size());
  if (!(start.dims() == dims)) semantic("start state has the wrong dimensions");
  if (!(goal_state.dims() == dims)) semantic("goal state has the wrong dimensions");
  try {
    validation.validate(dims);
    obstacles.validate();
  } catch (const Error& e) {
    semantic(e.what());
  }
  if (goal.lo.size() != rn || goal.hi.size() != rn) semantic("goal box must have r * n entries");
  if (goal.empty()) semantic("goal box is empty (lo > hi)");
  if (sample.lo.empty() && sample.hi.empty()) {
    sample.lo = validation.flat_lo;
    sample.hi = validation.flat_hi;
  }
  if (sample.lo.size() != rn || sample.hi.size() != rn) semantic("sampling box must have r * n entries");
  if (sample.empty()) semantic("sampling box is empty");
  for (std::size_t i = 0; i < rn; ++i) {
    if (!std::isfinite(sample.lo[i]) || !std::isfinite(sample.hi[i])) semantic("sampling box must be finite");
  }
  const auto n = static_cast<std::size_t>(dims.n);
  if (w_lo.empty() && w_hi.empty()) {
    for (std::size_t i = 0; i < n; ++i) {
      const double b = validation.w_max.empty() ? 1.0 : validation.w_max[i];
      w_lo.push_back(-b);
      w_hi.push_back(b);
    }
  }
  if (w_lo.size() != n || w_hi.size() != n) semantic("pseudo-control box must have n entries");
  for (std::size_t i = 0; i < n; ++i) {
    if (!(w_lo[i] <= w_hi[i]) || !std::isfinite(w_lo[i]) || !std::isfinite(w_hi[i])) {
      semantic("pseudo-control box is empty or unbounded");
    }
  }
  lanes_ = ObstacleLanes(obstacles);

  if (const CcReason why = check_state(start); why != CcReason::None) {
    semantic("start state is invalid (" + std::string(to_string(why)) + ")");
  }
  if (!goal.contains(goal_state)) semantic("goal state lies outside the goal box");
  if (const CcReason why = check_state(goal_state); why != CcReason::None) {
    semantic("goal state is invalid (" + std::string(to_string(why)) + ")");
  }
}

CcContext Problem::context() const { return {map.get(), &robot, &lanes_, &validation}; }

CcReason Problem::check_state(const FlatState& z) const {
  const Jet jet = state_jet(z, std::max(map->jet_order(), dims.r));
  OriginalSample s;
  try {
    s = map->evaluate(jet);
  } catch (const Error&) {
    return CcReason::FlatnessSingularity;
  }
  if (!state_collision_free(s.x, context())) return CcReason::Collision;
  const auto d = z.data();
  for (std::size_t i = 0; i < d.size(); ++i) {
    if ((!validation.flat_lo.empty() && d[i] < validation.flat_lo[i]) ||
        (!validation.flat_hi.empty() && d[i] > validation.flat_hi[i])) {
      return CcReason::FlatBounds;
    }
  }
  if (validation.original_limits && !map->within_limits(s)) return CcReason::OriginalLimits;
  return CcReason::None;
}

// ------------------------------------------------------------------- config

std::string_view to_string(Variant v) {
  switch (v) {
    case Variant::RrtConnect: return "rrtconnect";
    case Variant::SstBvpAug: return "sst_bvp";
    case Variant::SstSimdOnly: return "sst_simd";
    case Variant::DpRrt: return "dp_rrt";
  }
  return "unknown";
}

Variant parse_variant(std::string_view s) {
  std::string low(s);
  for (char& c : low) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  if (low == "rrtconnect" || low == "rrt_connect") return Variant::RrtConnect;
  if (low == "sst_bvp" || low == "sstbvpaug") return Variant::SstBvpAug;
  if (low == "sst_simd" || low == "sstsimdonly") return Variant::SstSimdOnly;
  if (low == "dp_rrt" || low == "dprrt") return Variant::DpRrt;
  throw Error(ErrorCode::InvalidArgument, "unknown planner variant '" + std::string(s) + "'");
}

void PlannerConfig::validate() const {
  auto need = [](bool ok, const char* what) {
    if (!ok) throw Error(ErrorCode::InvalidArgument, what);
  };
  need(max_iters >= 1, "max_iters must be at least 1");
  need(goal_bias >= 0.0 && goal_bias <= 1.0, "goal_bias must be in [0, 1]");
  need(zeta > 0.0, "zeta must be positive");
  need(!zeta_schedule || (zeta_c > 0.0 && std::isfinite(zeta_c)), "zeta schedule constant must be positive");
  need(neighbors >= 1, "neighbors must be at least 1");
  need(max_step > 0.0, "max_step must be positive");
  need(extend_candidates >= 1, "extend_candidates must be at least 1");
  need(delta_s > 0.0 && delta_bn > 0.0, "SST radii must be positive");
  need(t_min > 0.0 && t_min <= t_max, "propagation time range must satisfy 0 < t_min <= t_max");
  need(time_limit_s > 0.0, "time limit must be positive");
  need(bracket.lower > 0.0 && bracket.lower < bracket.upper, "invalid minimum-time bracket");
}

double zeta_threshold(const PlannerConfig& cfg, int nodes, FlatDims dims) {
  if (!cfg.zeta_schedule) return cfg.zeta;
  const double n = std::max(nodes, 2);
  const double d = 0.5 * (dims.r * dims.n + dims.r * dims.r * dims.n);
  return cfg.zeta_c * std::pow(std::log(n) / n, 1.0 / d);
}

int select_neighbor(std::span<const double> costs, double zeta) {
  int best = -1;
  for (std::size_t i = 0; i < costs.size(); ++i) {
    if (costs[i] > zeta) continue;
    if (best < 0 || costs[i] < costs[static_cast<std::size_t>(best)]) best = static_cast<int>(i);
  }
  return best;
}

// -------------------------------------------------------------------- graph

PlanGraph::PlanGraph(FlatDims dims, TreeTag tag) : dims_(dims), tag_(tag) {}

int PlanGraph::add_root(const FlatState& z) {
  if (!nodes_.empty()) throw Error(ErrorCode::InvalidArgument, "graph already has a root");
  PlanNode root;
  root.z = z;
  nodes_.push_back(std::move(root));
  coords_.insert(coords_.end(), z.data().begin(), z.data().end());
  ++live_;
  return 0;
}

int PlanGraph::add(int parent, LocalFlatPath edge) {
  PlanNode& p = nodes_[static_cast<std::size_t>(parent)];
  PlanNode nd;
  nd.z = tag_ == TreeTag::Start ? edge.zf : edge.z0;
  nd.parent = parent;
  nd.cost = p.cost + edge.cost;
  nd.edge = std::move(edge);
  ++p.children;
  coords_.insert(coords_.end(), nd.z.data().begin(), nd.z.data().end());
  nodes_.push_back(std::move(nd));
  ++live_;
  return size() - 1;
}

double PlanGraph::distance(int i, const FlatState& q) const {
  const auto rn = static_cast<std::size_t>(dims_.state_size());
  const double* c = coords_.data() + static_cast<std::size_t>(i) * rn;
  double s = 0.0;
  for (std::size_t k = 0; k < rn; ++k) {
    const double d = c[k] - q.data()[k];
    s += d * d;
  }
  return std::sqrt(s);
}

std::vector<int> PlanGraph::nearest(const FlatState& q, int k, bool active_only) const {
  const auto rn = static_cast<std::size_t>(dims_.state_size());
  std::vector<std::pair<double, int>> d;
  d.reserve(nodes_.size());
  const double* qd = q.data().data();
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    const PlanNode& nd = nodes_[i];
    if (nd.removed || (active_only && !nd.active)) continue;
    const double* c = coords_.data() + i * rn;
    double s = 0.0;
    for (std::size_t j = 0; j < rn; ++j) {
      const double e = c[j] - qd[j];
      s += e * e;
    }
    d.emplace_back(s, static_cast<int>(i));
  }
  const auto m = std::min(d.size(), static_cast<std::size_t>(k));
  std::partial_sort(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(m), d.end());
  std::vector<int> out(m);
  for (std::size_t i = 0; i < m; ++i) out[i] = d[i].second;
  return out;
}

std::vector<int> PlanGraph::within(const FlatState& q, double radius, bool active_only) const {
  std::vector<int> out;
  for (int i = 0; i < size(); ++i) {
    const PlanNode& nd = nodes_[static_cast<std::size_t>(i)];
    if (nd.removed || (active_only && !nd.active)) continue;
    if (distance(i, q) <= radius) out.push_back(i);
  }
  return out;
}

void PlanGraph::deactivate(int i) {
  nodes_[static_cast<std::size_t>(i)].active = false;
  // The root is never removed.
  while (i > 0) {
    PlanNode& nd = nodes_[static_cast<std::size_t>(i)];
    if (nd.active || nd.removed || nd.children > 0) break;
    nd.removed = true;
    --live_;
    i = nd.parent;
    --nodes_[static_cast<std::size_t>(i)].children;
  }
}

std::vector<int> PlanGraph::branch(int i) const {
  std::vector<int> out;
  for (; i >= 0; i = nodes_[static_cast<std::size_t>(i)].parent) out.push_back(i);
  std::reverse(out.begin(), out.end());
  return out;
}

namespace {

bool states_close(const FlatState& a, const FlatState& b, double tol) {
  if (!(a.dims() == b.dims())) return false;
  for (std::size_t i = 0; i < a.data().size(); ++i) {
    const double x = a.data()[i];
    if (std::abs(x - b.data()[i]) > tol * std::max(1.0, std::abs(x))) return false;
  }
  return true;
}

}  // namespace

bool PlanGraph::well_formed(double tol) const {
  for (std::size_t i = 1; i < nodes_.size(); ++i) {
    const PlanNode& nd = nodes_[i];
    if (nd.removed) continue;
    if (nd.parent < 0 || nd.parent >= static_cast<int>(i)) return false;
    const PlanNode& p = nodes_[static_cast<std::size_t>(nd.parent)];
    if (p.removed) return false;
    const FlatState begin = eval_path(nd.edge, 0.0).z;
    const FlatState end = eval_path(nd.edge, nd.edge.duration).z;
    const FlatState& from = tag_ == TreeTag::Start ? p.z : nd.z;
    const FlatState& to = tag_ == TreeTag::Start ? nd.z : p.z;
    if (!states_close(begin, from, tol) || !states_close(end, to, tol)) return false;
    if (std::abs(nd.cost - (p.cost + nd.edge.cost)) > tol * std::max(1.0, std::abs(nd.cost))) return false;
  }
  return true;
}

// ------------------------------------------------------------------ planning

namespace {

using Clock = std::chrono::steady_clock;

constexpr int kSampleTries = 32;

double ms_since(Clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

class Sampler {
 public:
  explicit Sampler(std::uint64_t seed) : rng_(seed) {}

  double uniform(double lo, double hi) { return lo == hi ? lo : std::uniform_real_distribution<double>(lo, hi)(rng_); }
  bool coin(double p) { return p > 0.0 && uniform(0.0, 1.0) < p; }

  FlatState in_box(FlatDims dims, const FlatBox& box, const FlatBox* clip = nullptr) {
    FlatState z(dims);
    for (std::size_t i = 0; i < z.data().size(); ++i) {
      double lo = box.lo[i];
      double hi = box.hi[i];
      if (clip) {
        lo = std::max(lo, clip->lo[i]);
        hi = std::min(hi, clip->hi[i]);
        if (lo > hi) lo = hi = std::clamp(box.lo[i], clip->lo[i], clip->hi[i]);
      }
      z.data()[i] = uniform(lo, hi);
    }
    return z;
  }

 private:
  std::mt19937_64 rng_;
};

struct Candidate {
  int node;
  double duration;
  double cost;
};

// Local cost for the edge between node i and target, oriented by the tree.
Candidate rate(const PlanGraph& g, int i, const FlatState& target, const Problem& pb, const PlannerConfig& cfg) {
  const FlatState& from = g.tag() == TreeTag::Start ? g.node(i).z : target;
  const FlatState& to = g.tag() == TreeTag::Start ? target : g.node(i).z;
  const MinTime mt = optimal_duration(from, to, pb.weights, cfg.bracket);
  return {i, mt.duration, bvp_cost(from, to, mt.duration, pb.weights)};
}

LocalFlatPath build_edge(const PlanGraph& g, const Candidate& c, const FlatState& target, const Problem& pb) {
  if (g.tag() == TreeTag::Start) return solve_bvp_fixed_time(g.node(c.node).z, target, c.duration, pb.weights);
  return solve_bvp_fixed_time(target, g.node(c.node).z, c.duration, pb.weights);
}

// Pulls the position block of `sample` within max_step of `anchor`.
FlatState steer(const FlatState& anchor, const FlatState& sample, double max_step) {
  const int n = sample.dims().n;
  double d2 = 0.0;
  for (int i = 0; i < n; ++i) d2 += (sample(0, i) - anchor(0, i)) * (sample(0, i) - anchor(0, i));
  const double d = std::sqrt(d2);
  if (d <= max_step) return sample;
  FlatState out = sample;
  for (int i = 0; i < n; ++i) out(0, i) = anchor(0, i) + (sample(0, i) - anchor(0, i)) * (max_step / d);
  return out;
}

PiecewiseTrajectory start_branch(const PlanGraph& g, int i) {
  PiecewiseTrajectory t;
  const auto b = g.branch(i);
  for (std::size_t k = 1; k < b.size(); ++k) t.push_back(g.node(b[k]).edge);
  return t;
}

void append_goal_branch(PiecewiseTrajectory& t, const PlanGraph& g, int i) {
  for (; g.node(i).parent >= 0; i = g.node(i).parent) t.push_back(g.node(i).edge);
}

CcResult checked(const LocalFlatPath& path, const Problem& pb, PlanStats& stats) {
  ++stats.cc_calls;
  return flask_cc(path, pb.context());
}

void finish(PlanResult& res, const Problem& pb, const PlannerConfig& cfg, Clock::time_point t0) {
  res.stats.time_ms = ms_since(t0);
  res.stats.raw_segments = static_cast<int>(res.raw.size());
  const auto t1 = Clock::now();
  res.trajectory = cfg.postprocess ? postprocess(res.raw, pb, cfg, &res.stats) : res.raw;
  res.stats.post_ms = ms_since(t1);
  res.cost = res.trajectory.cost();
  res.length = trajectory_length(res.trajectory);
}

}  // namespace

ExtendOutcome flask_extend(PlanGraph& graph, const FlatState& sample, const PlannerConfig& cfg, const Problem& problem,
                           PlanStats& stats) {
  ExtendOutcome out;
  const auto near = graph.nearest(sample, cfg.neighbors);
  if (near.empty()) return out;
  const FlatState target = steer(graph.node(near.front()).z, sample, cfg.max_step);

  std::vector<Candidate> cands;
  std::vector<double> costs;
  cands.reserve(near.size());
  for (int i : near) {
    cands.push_back(rate(graph, i, target, problem, cfg));
    costs.push_back(cands.back().cost);
  }
  const double zeta = zeta_threshold(cfg, graph.live(), graph.dims());
  // Candidates under the threshold, cheapest first; ties keep prefilter order.
  std::vector<int> order;
  for (std::size_t i = 0; i < cands.size(); ++i) {
    if (costs[i] <= zeta) order.push_back(static_cast<int>(i));
  }
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return costs[static_cast<std::size_t>(a)] < costs[static_cast<std::size_t>(b)]; });
  if (order.size() > static_cast<std::size_t>(cfg.extend_candidates)) order.resize(static_cast<std::size_t>(cfg.extend_candidates));

  for (int k : order) {
    const Candidate& c = cands[static_cast<std::size_t>(k)];
    LocalFlatPath edge = build_edge(graph, c, target, problem);
    out.cc = checked(edge, problem, stats);
    if (out.cc.valid) {
      out.node = graph.add(c.node, std::move(edge));
      return out;
    }
  }
  return out;
}

ExtendOutcome flask_extend(PlanGraph& graph, int from, std::span<const double> w, double duration,
                           const Problem& problem, PlanStats& stats) {
  ExtendOutcome out;
  LocalFlatPath edge = propagate(graph.node(from).z, w, duration, problem.weights);
  out.cc = checked(edge, problem, stats);
  if (out.cc.valid) out.node = graph.add(from, std::move(edge));
  return out;
}

PlanResult rrtconnect_plan(const Problem& pb, const PlannerConfig& cfg) {
  cfg.validate();
  const auto t0 = Clock::now();
  PlanResult res;
  PlanGraph ts(pb.dims, TreeTag::Start);
  PlanGraph tg(pb.dims, TreeTag::Goal);
  ts.add_root(pb.start);
  tg.add_root(pb.goal_state);
  if (pb.goal.contains(pb.start)) {
    res.success = true;
    res.stats.nodes = 1;
    finish(res, pb, cfg, t0);
    return res;
  }
  Sampler rng(cfg.seed);
  PlanGraph* a = &ts;
  PlanGraph* b = &tg;
  const double limit_ms = cfg.time_limit_s * 1e3;

  auto succeed = [&](int si, int gi) {
    res.success = true;
    res.raw = start_branch(ts, si);
    if (gi >= 0) append_goal_branch(res.raw, tg, gi);
    // Stop at the first knot that already lies in the goal box.
    std::vector<LocalFlatPath> segs;
    for (const auto& seg : res.raw.segments()) {
      segs.push_back(seg);
      if (pb.goal.contains(seg.zf)) break;
    }
    res.raw = PiecewiseTrajectory(std::move(segs));
  };

  for (long it = 0; it < cfg.max_iters && !res.success; ++it) {
    res.stats.iterations = it + 1;
    if (ms_since(t0) > limit_ms) break;
    FlatState sample;
    if (rng.coin(cfg.goal_bias)) {
      sample = a->tag() == TreeTag::Start ? rng.in_box(pb.dims, pb.goal, &pb.sample) : pb.start;
    } else {
      // Invalid samples can only produce invalid edge endpoints; redraw a few
      // times before giving up and using the last one.
      for (int tries = 0; tries < kSampleTries; ++tries) {
        sample = rng.in_box(pb.dims, pb.sample);
        if (pb.check_state(sample) == CcReason::None) break;
      }
    }
    const ExtendOutcome ext = flask_extend(*a, sample, cfg, pb, res.stats);
    if (ext.node >= 0) {
      if (a->tag() == TreeTag::Start && pb.goal.contains(a->node(ext.node).z)) {
        succeed(ext.node, -1);
        break;
      }
      // Connect: one direct BVP path from the other tree to the new node.
      PlannerConfig direct = cfg;
      direct.max_step = std::numeric_limits<double>::infinity();
      const ExtendOutcome c = flask_extend(*b, a->node(ext.node).z, direct, pb, res.stats);
      if (c.node >= 0) {
        if (a->tag() == TreeTag::Start) {
          succeed(ext.node, c.node);
        } else {
          succeed(c.node, ext.node);
        }
        break;
      }
    }
    std::swap(a, b);
  }
  res.stats.nodes = ts.live() + tg.live();
  if (!res.success) {
    res.failure = res.stats.iterations >= cfg.max_iters ? "iteration budget exhausted" : "time limit reached";
    res.stats.time_ms = ms_since(t0);
    return res;
  }
  finish(res, pb, cfg, t0);
  return res;
}

PlanResult sst_plan(const Problem& pb, const PlannerConfig& cfg) {
  cfg.validate();
  if (cfg.variant == Variant::RrtConnect) throw Error(ErrorCode::InvalidArgument, "sst_plan needs an SST variant");
  const auto t0 = Clock::now();
  PlanResult res;
  PlanGraph g(pb.dims, TreeTag::Start);
  g.add_root(pb.start);
  const bool sst = cfg.variant != Variant::DpRrt;
  if (sst) g.witnesses.push_back({pb.start, 0});
  if (pb.goal.contains(pb.start)) {
    res.success = true;
    res.stats.nodes = 1;
    finish(res, pb, cfg, t0);
    return res;
  }
  Sampler rng(cfg.seed);
  const double limit_ms = cfg.time_limit_s * 1e3;
  std::vector<double> w(static_cast<std::size_t>(pb.dims.n));

  for (long it = 0; it < cfg.max_iters && !res.success; ++it) {
    res.stats.iterations = it + 1;
    if (ms_since(t0) > limit_ms) break;
    const FlatState sample = rng.coin(cfg.goal_bias) ? rng.in_box(pb.dims, pb.goal, &pb.sample)
                                                     : rng.in_box(pb.dims, pb.sample);
    int sel = -1;
    if (sst) {
      // Best-cost active node near the sample, else the nearest active one.
      for (int i : g.within(sample, cfg.delta_bn, true)) {
        if (sel < 0 || g.node(i).cost < g.node(sel).cost) sel = i;
      }
      if (sel < 0) sel = g.nearest(sample, 1, true).front();
    } else {
      sel = g.nearest(sample, 1).front();
    }
    for (std::size_t i = 0; i < w.size(); ++i) w[i] = rng.uniform(pb.w_lo[i], pb.w_hi[i]);
    const double duration = rng.uniform(cfg.t_min, cfg.t_max);

    LocalFlatPath edge = propagate(g.node(sel).z, w, duration, pb.weights);
    if (!checked(edge, pb, res.stats).valid) continue;

    int node = -1;
    if (sst) {
      const FlatState& zn = edge.zf;
      int wi = -1;
      double best = std::numeric_limits<double>::infinity();
      for (std::size_t k = 0; k < g.witnesses.size(); ++k) {
        double s = 0.0;
        for (std::size_t j = 0; j < zn.data().size(); ++j) {
          const double e = g.witnesses[k].s.data()[j] - zn.data()[j];
          s += e * e;
        }
        if (s < best) {
          best = s;
          wi = static_cast<int>(k);
        }
      }
      if (std::sqrt(best) > cfg.delta_s) {
        g.witnesses.push_back({zn, -1});
        wi = static_cast<int>(g.witnesses.size()) - 1;
      }
      const int rep = g.witnesses[static_cast<std::size_t>(wi)].rep;
      const double c = g.node(sel).cost + edge.cost;
      if (rep >= 0 && !g.node(rep).removed && g.node(rep).cost <= c) continue;
      node = g.add(sel, std::move(edge));
      g.witnesses[static_cast<std::size_t>(wi)].rep = node;
      if (rep >= 0 && !g.node(rep).removed) g.deactivate(rep);
    } else {
      node = g.add(sel, std::move(edge));
    }

    if (pb.goal.contains(g.node(node).z)) {
      res.success = true;
      res.raw = start_branch(g, node);
      break;
    }
    if (cfg.variant == Variant::SstBvpAug) {
      // Arrive at the goal position with the node's own derivatives clipped
      // into the goal box; a fixed arrival velocity is rarely reachable.
      FlatState target = g.node(node).z;
      const int n = pb.dims.n;
      for (std::size_t j = 0; j < target.data().size(); ++j) {
        target.data()[j] = j < static_cast<std::size_t>(n) ? pb.goal_state.data()[j]
                                                           : std::clamp(target.data()[j], pb.goal.lo[j], pb.goal.hi[j]);
      }
      LocalFlatPath link = solve_bvp_min_time(g.node(node).z, target, pb.weights, cfg.bracket);
      if (checked(link, pb, res.stats).valid) {
        res.success = true;
        res.raw = start_branch(g, node);
        res.raw.push_back(std::move(link));
        break;
      }
    }
  }
  res.stats.nodes = g.live();
  if (!res.success) {
    res.failure = res.stats.iterations >= cfg.max_iters ? "iteration budget exhausted" : "time limit reached";
    res.stats.time_ms = ms_since(t0);
    return res;
  }
  finish(res, pb, cfg, t0);
  return res;
}

PlanResult plan(const Problem& problem, const PlannerConfig& cfg) {
  return cfg.variant == Variant::RrtConnect ? rrtconnect_plan(problem, cfg) : sst_plan(problem, cfg);
}

PiecewiseTrajectory postprocess(const PiecewiseTrajectory& traj, const Problem& problem, const PlannerConfig& cfg,
                                PlanStats* stats) {
  PlanStats local;
  PlanStats& st = stats ? *stats : local;
  std::vector<LocalFlatPath> segs = traj.segments();
  for (std::size_t i = 0; i + 1 < segs.size(); ++i) {
    for (std::size_t j = segs.size() - 1; j > i; --j) {
      double span = 0.0;
      double span_t = 0.0;
      for (std::size_t k = i; k <= j; ++k) {
        span += segs[k].cost;
        span_t += segs[k].duration;
      }
      // Optimal duration first, then the span's own duration, which is
      // slower and can never cost more than the span it replaces.
      std::optional<LocalFlatPath> cut;
      LocalFlatPath fast = solve_bvp_min_time(segs[i].z0, segs[j].zf, problem.weights, cfg.bracket);
      if (fast.cost <= span && checked(fast, problem, st).valid) {
        cut = std::move(fast);
      } else if (std::abs(fast.duration - span_t) > 1e-9 * span_t) {
        LocalFlatPath slow = solve_bvp_fixed_time(segs[i].z0, segs[j].zf, span_t, problem.weights);
        if (slow.cost <= span && checked(slow, problem, st).valid) cut = std::move(slow);
      }
      if (!cut) continue;
      segs.erase(segs.begin() + static_cast<std::ptrdiff_t>(i) + 1, segs.begin() + static_cast<std::ptrdiff_t>(j) + 1);
      segs[i] = std::move(*cut);
      break;
    }
  }
  return PiecewiseTrajectory(std::move(segs));
}

double trajectory_clearance(const PiecewiseTrajectory& traj, const Problem& problem, double spacing) {
  ValidationConfig cfg = problem.validation;
  cfg.resolution = spacing;
  const auto& spheres = problem.robot.spheres();
  std::vector<Eigen::Vector3f> centers(spheres.size());
  double best = std::numeric_limits<double>::infinity();
  for (const LocalFlatPath& seg : traj.segments()) {
    const int count = dyadic_count(sample_count(seg, cfg));
    for (int j = 0; j < count; ++j) {
      const double t = j == count - 1 ? seg.duration : seg.duration * j / (count - 1);
      OriginalSample s;
      try {
        s = problem.map->evaluate_at(seg, t);
      } catch (const Error&) {
        continue;
      }
      problem.robot.fk(*problem.map, s.x, centers);
      for (std::size_t k = 0; k < spheres.size(); ++k) {
        for (std::size_t o = 0; o < problem.obstacles.size(); ++o) {
          const double gap = (centers[k].cast<double>() - problem.obstacles.centers[o]).norm() - spheres[k].radius -
                             problem.obstacles.radii[o];
          best = std::min(best, gap);
        }
      }
    }
  }
  return best;
}

ValidationReport validate_trajectory(const PiecewiseTrajectory& traj, const Problem& problem, double resolution_scale,
                                     double tracking_tol) {
  if (!(resolution_scale > 0.0)) throw Error(ErrorCode::InvalidArgument, "resolution scale must be positive");
  ValidationReport rep;
  auto fail = [&](const std::string& what, double t) {
    if (!rep.ok) return;
    rep.ok = false;
    rep.failure = what;
    rep.t_fail = t;
  };
  if (!traj.empty() && !(traj.segments().front().z0 == problem.start) &&
      !states_close(eval_path(traj.segments().front(), 0.0).z, problem.start, 1e-9)) {
    fail("start mismatch", 0.0);
  }
  rep.continuity_error = traj.continuity_error();
  if (rep.continuity_error > 1e-9) {
    // Locate the first broken knot.
    for (std::size_t k = 1; k < traj.size(); ++k) {
      PiecewiseTrajectory pair({traj.segments()[k - 1], traj.segments()[k]});
      if (pair.continuity_error() > 1e-9) {
        fail("continuity", traj.knots()[k]);
        break;
      }
    }
  }
  if (!traj.empty() && !problem.goal.contains(traj.eval(traj.duration()).z)) fail("goal not reached", traj.duration());

  ValidationConfig cfg = problem.validation;
  cfg.resolution = problem.validation.resolution / resolution_scale;
  CcContext ctx = problem.context();
  ctx.cfg = &cfg;
  for (std::size_t k = 0; k < traj.size(); ++k) {
    const CcResult cc = flask_cc_scalar(traj.segments()[k], ctx);
    if (!cc.valid) {
      rep.reason = cc.reason;
      fail(cc.reason == CcReason::Collision ? "collision" : "limits", traj.knots()[k] + cc.t_hit);
      break;
    }
  }
  rep.clearance = trajectory_clearance(traj, problem, cfg.resolution);

  const TrackingReport tr = rk4_tracking(traj, *problem.map);
  rep.tracking_rate = tr.worst_rate;
  if (tr.singular) {
    fail("dynamics (singular)", tr.worst_time);
  } else if (tr.worst_rate > tracking_tol) {
    fail("dynamics", tr.worst_time);
  }
  return rep;
}

}  // namespace flask
