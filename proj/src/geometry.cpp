#include "flask/geometry.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>

namespace flask {

void SphereSet::add(const Eigen::Vector3d& c, double r) {
  centers.push_back(c);
  radii.push_back(r);
}

void SphereSet::validate() const {
  if (centers.size() != radii.size()) throw Error(ErrorCode::InvalidArgument, "sphere centers and radii differ");
  for (std::size_t i = 0; i < radii.size(); ++i) {
    if (!(radii[i] > 0.0) || !std::isfinite(radii[i])) {
      throw Error(ErrorCode::InvalidArgument, "sphere radius must be positive");
    }
    if (!centers[i].allFinite()) throw Error(ErrorCode::InvalidArgument, "sphere center must be finite");
  }
}

ObstacleLanes::ObstacleLanes(const SphereSet& s) {
  s.validate();
  for (std::size_t i = 0; i < s.size(); ++i) {
    x.push_back(static_cast<float>(s.centers[i].x()));
    y.push_back(static_cast<float>(s.centers[i].y()));
    z.push_back(static_cast<float>(s.centers[i].z()));
    r.push_back(static_cast<float>(s.radii[i]));
  }
}

RobotGeometry RobotGeometry::mobile(double radius, const Eigen::Vector3d& offset) {
  if (!(radius > 0.0)) throw Error(ErrorCode::InvalidArgument, "robot radius must be positive");
  RobotGeometry g;
  g.kind_ = Kind::Mobile;
  g.spheres_.push_back({0, offset, radius});
  return g;
}

RobotGeometry RobotGeometry::planar_arm(double l1, double l2, int per_link, double radius, const Eigen::Vector3d& base) {
  if (!(radius > 0.0) || !(l1 > 0.0) || !(l2 > 0.0) || per_link < 1) {
    throw Error(ErrorCode::InvalidArgument, "invalid arm geometry");
  }
  RobotGeometry g;
  g.kind_ = Kind::PlanarArm;
  g.l1_ = l1;
  g.l2_ = l2;
  g.base_ = base;
  for (int link = 1; link <= 2; ++link) {
    const double len = link == 1 ? l1 : l2;
    for (int k = 1; k <= per_link; ++k) g.spheres_.push_back({link, {len * k / per_link, 0.0, 0.0}, radius});
  }
  return g;
}

namespace {

// World center of one body sphere in double precision. Both the scalar and the
// lane FK go through this so they round identically.
Eigen::Vector3d sphere_center(const RobotGeometry& robot, const FlatnessMap& map, const StateVec& x,
                              const BodySphere& s) {
  if (robot.kind() == RobotGeometry::Kind::Mobile) return map.position(x) + s.offset;
  const double q1 = x(0);
  const double q12 = x(0) + x(1);
  const Eigen::Vector3d base = robot.base();
  if (s.link == 1) return base + Eigen::Vector3d(s.offset.x() * std::cos(q1), s.offset.x() * std::sin(q1), 0.0);
  return base + Eigen::Vector3d(robot.l1() * std::cos(q1) + s.offset.x() * std::cos(q12),
                                robot.l1() * std::sin(q1) + s.offset.x() * std::sin(q12), 0.0);
}

}  // namespace

void RobotGeometry::fk(const FlatnessMap& map, const StateVec& x, std::span<Eigen::Vector3f> out) const {
  for (std::size_t i = 0; i < spheres_.size(); ++i) out[i] = sphere_center(*this, map, x, spheres_[i]).cast<float>();
}

void batch_fk_spheres(const RobotGeometry& robot, const FlatnessMap& map, std::span<const StateVec> states,
                      LaneCenters& out) {
  const int lanes = static_cast<int>(states.size());
  const int ns = robot.sphere_count();
  out.lanes = lanes;
  out.x.resize(static_cast<std::size_t>(ns * lanes));
  out.y.resize(out.x.size());
  out.z.resize(out.x.size());
  for (int l = 0; l < lanes; ++l) {
    for (int s = 0; s < ns; ++s) {
      const Eigen::Vector3f c =
          sphere_center(robot, map, states[static_cast<std::size_t>(l)], robot.spheres()[static_cast<std::size_t>(s)])
              .cast<float>();
      const auto k = static_cast<std::size_t>(s * lanes + l);
      out.x[k] = c.x();
      out.y[k] = c.y();
      out.z[k] = c.z();
    }
  }
}

int BatchLayout::batch(int i, std::span<int> out) const {
  const int s = stride();
  int m = 0;
  for (int l = 0; l < lanes; ++l) {
    const int j = i + l * s;
    if (j >= count) break;
    out[static_cast<std::size_t>(m++)] = j;
  }
  return m;
}

void ValidationConfig::validate(FlatDims dims) const {
  if (!(resolution > 0.0)) throw Error(ErrorCode::InvalidArgument, "resolution must be positive");
  if (lane_width < 1 || lane_width > 64) throw Error(ErrorCode::InvalidArgument, "lane width must be in [1, 64]");
  const auto rn = static_cast<std::size_t>(dims.state_size());
  if ((!flat_lo.empty() && flat_lo.size() != rn) || (!flat_hi.empty() && flat_hi.size() != rn)) {
    throw Error(ErrorCode::DimensionMismatch, "flat box must have r * n entries");
  }
  if (!w_max.empty() && w_max.size() != static_cast<std::size_t>(dims.n)) {
    throw Error(ErrorCode::DimensionMismatch, "pseudo-control bound must have n entries");
  }
}

int sample_count(const LocalFlatPath& path, const ValidationConfig& cfg) {
  constexpr int kIntervals = 32;
  const int n = path.dims().n;
  const double dt = path.duration / kIntervals;
  std::array<double, kMaxFlatDim> v{};
  double prev = 0.0;
  double length = 0.0;
  for (int k = 0; k <= kIntervals; ++k) {
    eval_derivative(path, k * dt, 1, std::span<double>(v.data(), static_cast<std::size_t>(n)));
    double s = 0.0;
    for (int i = 0; i < n; ++i) s += v[static_cast<std::size_t>(i)] * v[static_cast<std::size_t>(i)];
    s = std::sqrt(s);
    if (k > 0) length += std::max(prev, s) * dt;
    prev = s;
  }
  const double steps = std::ceil(length / cfg.resolution - 1e-9);
  return std::max(2, static_cast<int>(steps) + 1);
}

int dyadic_count(int n) {
  int intervals = 1;
  while (intervals + 1 < n) intervals *= 2;
  return intervals + 1;
}

std::string_view to_string(CcReason r) {
  switch (r) {
    case CcReason::None: return "None";
    case CcReason::Collision: return "Collision";
    case CcReason::FlatBounds: return "FlatBounds";
    case CcReason::ControlBounds: return "ControlBounds";
    case CcReason::OriginalLimits: return "OriginalLimits";
    case CcReason::FlatnessSingularity: return "FlatnessSingularity";
  }
  return "Unknown";
}

namespace {

constexpr int kMaxLanes = 64;

double sample_time(const LocalFlatPath& path, int j, int count) {
  return j == count - 1 ? path.duration : path.duration * j / (count - 1);
}

// Evaluation of one sample up to (not including) the collision test.
struct Sample {
  CcReason pre = CcReason::None;   // singularity, if any
  CcReason post = CcReason::None;  // limit violation, checked after collision
  OriginalSample x;
};

void evaluate_sample(const LocalFlatPath& path, double t, const CcContext& ctx, Sample& out) {
  const FlatDims d = path.dims();
  const ValidationConfig& cfg = *ctx.cfg;
  const Jet jet = path_jet(path, t, std::max(ctx.map->jet_order(), d.r));
  out.pre = CcReason::None;
  out.post = CcReason::None;
  try {
    out.x = ctx.map->evaluate(jet);
  } catch (const Error&) {
    out.pre = CcReason::FlatnessSingularity;
    return;
  }
  if (!cfg.flat_lo.empty() || !cfg.flat_hi.empty()) {
    for (int k = 0; k < d.r && out.post == CcReason::None; ++k) {
      for (int i = 0; i < d.n; ++i) {
        const auto idx = static_cast<std::size_t>(k * d.n + i);
        const double v = jet(i, k);
        if ((!cfg.flat_lo.empty() && v < cfg.flat_lo[idx]) || (!cfg.flat_hi.empty() && v > cfg.flat_hi[idx])) {
          out.post = CcReason::FlatBounds;
          break;
        }
      }
    }
  }
  if (out.post == CcReason::None && !cfg.w_max.empty()) {
    for (int i = 0; i < d.n; ++i) {
      if (std::abs(jet(i, d.r)) > cfg.w_max[static_cast<std::size_t>(i)]) {
        out.post = CcReason::ControlBounds;
        break;
      }
    }
  }
  if (out.post == CcReason::None && cfg.original_limits && !ctx.map->within_limits(out.x)) {
    out.post = CcReason::OriginalLimits;
  }
}

// Marks lanes whose spheres overlap any obstacle.
void collide_lanes(const LaneCenters& c, const RobotGeometry& robot, const ObstacleLanes& obs, std::uint8_t* hit) {
  const int lanes = c.lanes;
  for (int s = 0; s < robot.sphere_count(); ++s) {
    const float rs = static_cast<float>(robot.spheres()[static_cast<std::size_t>(s)].radius);
    const float* cx = c.x.data() + s * lanes;
    const float* cy = c.y.data() + s * lanes;
    const float* cz = c.z.data() + s * lanes;
    for (std::size_t o = 0; o < obs.size(); ++o) {
      const float ox = obs.x[o];
      const float oy = obs.y[o];
      const float oz = obs.z[o];
      const float rsum = (rs + obs.r[o]) + kCollisionInflation;
      const float rr = rsum * rsum;
#pragma omp simd
      for (int l = 0; l < lanes; ++l) {
        const float dx = cx[l] - ox;
        const float dy = cy[l] - oy;
        const float dz = cz[l] - oz;
        const float d2 = (dx * dx + dy * dy) + dz * dz;
        hit[l] |= static_cast<std::uint8_t>(d2 < rr);
      }
    }
  }
}

bool collides_scalar(const std::span<const Eigen::Vector3f> centers, const RobotGeometry& robot,
                     const ObstacleLanes& obs) {
  for (int s = 0; s < robot.sphere_count(); ++s) {
    const float rs = static_cast<float>(robot.spheres()[static_cast<std::size_t>(s)].radius);
    const Eigen::Vector3f& c = centers[static_cast<std::size_t>(s)];
    for (std::size_t o = 0; o < obs.size(); ++o) {
      const float rsum = (rs + obs.r[o]) + kCollisionInflation;
      const float rr = rsum * rsum;
      const float dx = c.x() - obs.x[o];
      const float dy = c.y() - obs.y[o];
      const float dz = c.z() - obs.z[o];
      if ((dx * dx + dy * dy) + dz * dz < rr) return true;
    }
  }
  return false;
}

void require_context(const LocalFlatPath& path, const CcContext& ctx) {
  if (!ctx.map || !ctx.robot || !ctx.obstacles || !ctx.cfg) throw Error(ErrorCode::InvalidArgument, "incomplete CC context");
  if (path.dims().n != ctx.map->flat_dim()) throw Error(ErrorCode::DimensionMismatch, "path does not match the map");
  if (std::max(ctx.map->jet_order(), path.dims().r) > kMaxJetOrder) {
    throw Error(ErrorCode::InvalidArgument, "derivative order exceeds jet capacity");
  }
  ctx.cfg->validate(path.dims());
}

bool wants_between(const CcContext& ctx) { return ctx.cfg->original_limits && ctx.map->checks_between_samples(); }

// Ordered pass over consecutive samples, run once the sweep found no
// invalid sample. Both kernels share it so their verdicts agree.
void check_between(const LocalFlatPath& path, const std::vector<StateVec>& xs, const CcContext& ctx, CcResult& result) {
  const int count = static_cast<int>(xs.size());
  for (int j = 1; j < count; ++j) {
    const double t0 = sample_time(path, j - 1, count);
    const double t1 = sample_time(path, j, count);
    if (!ctx.map->consistent_between(xs[static_cast<std::size_t>(j - 1)], xs[static_cast<std::size_t>(j)], t1 - t0)) {
      result.valid = false;
      result.reason = CcReason::OriginalLimits;
      result.t_hit = t1;
      return;
    }
  }
}

struct LaneScratch {
  std::array<Sample, kMaxLanes> samples;
  std::array<StateVec, kMaxLanes> states;
  std::array<std::uint8_t, kMaxLanes> hit{};
  LaneCenters centers;
};

}  // namespace

CcResult flask_cc(const LocalFlatPath& path, const CcContext& ctx) {
  require_context(path, ctx);
  const int count = dyadic_count(sample_count(path, *ctx.cfg));
  const BatchLayout layout{count, ctx.cfg->lane_width};
  thread_local LaneScratch scratch;
  thread_local std::vector<StateVec> ordered;
  const bool between = wants_between(ctx);
  if (between) ordered.resize(static_cast<std::size_t>(count));
  std::array<int, kMaxLanes> idx{};
  CcResult result;

  for (int b = 0; b < layout.batches(); ++b) {
    const int m = layout.batch(b, idx);
    for (int l = 0; l < m; ++l) {
      Sample& s = scratch.samples[static_cast<std::size_t>(l)];
      evaluate_sample(path, sample_time(path, idx[static_cast<std::size_t>(l)], count), ctx, s);
      // Singular lanes get a placeholder state; their verdict is already set.
      scratch.states[static_cast<std::size_t>(l)] =
          s.pre == CcReason::None ? s.x.x : StateVec(StateVec::Zero(ctx.map->state_size()));
      if (between) ordered[static_cast<std::size_t>(idx[static_cast<std::size_t>(l)])] = scratch.states[static_cast<std::size_t>(l)];
      scratch.hit[static_cast<std::size_t>(l)] = 0;
    }
    result.samples += m;
    batch_fk_spheres(*ctx.robot, *ctx.map, std::span<const StateVec>(scratch.states.data(), static_cast<std::size_t>(m)),
                     scratch.centers);
    collide_lanes(scratch.centers, *ctx.robot, *ctx.obstacles, scratch.hit.data());

    // Lane l holds sample idx[l]; indices increase with l, so the first
    // invalid lane is the earliest invalid time in this batch.
    for (int l = 0; l < m; ++l) {
      const Sample& s = scratch.samples[static_cast<std::size_t>(l)];
      CcReason why = s.pre;
      if (why == CcReason::None && scratch.hit[static_cast<std::size_t>(l)]) why = CcReason::Collision;
      if (why == CcReason::None) why = s.post;
      if (why != CcReason::None) {
        result.valid = false;
        result.reason = why;
        result.t_hit = sample_time(path, idx[static_cast<std::size_t>(l)], count);
        return result;
      }
    }
  }
  if (between) check_between(path, ordered, ctx, result);
  return result;
}

CcResult flask_cc_scalar(const LocalFlatPath& path, const CcContext& ctx) {
  require_context(path, ctx);
  const int count = dyadic_count(sample_count(path, *ctx.cfg));
  std::vector<Eigen::Vector3f> centers(static_cast<std::size_t>(ctx.robot->sphere_count()));
  Sample s;
  CcResult result;
  const bool between = wants_between(ctx);
  std::vector<StateVec> ordered;
  if (between) ordered.reserve(static_cast<std::size_t>(count));
  for (int j = 0; j < count; ++j) {
    const double t = sample_time(path, j, count);
    evaluate_sample(path, t, ctx, s);
    ++result.samples;
    if (between && s.pre == CcReason::None) ordered.push_back(s.x.x);
    CcReason why = s.pre;
    if (why == CcReason::None) {
      ctx.robot->fk(*ctx.map, s.x.x, centers);
      if (collides_scalar(centers, *ctx.robot, *ctx.obstacles)) why = CcReason::Collision;
    }
    if (why == CcReason::None) why = s.post;
    if (why != CcReason::None) {
      result.valid = false;
      result.reason = why;
      result.t_hit = t;
      return result;
    }
  }
  if (between) check_between(path, ordered, ctx, result);
  return result;
}

std::vector<CcResult> flask_cc_many(std::span<const LocalFlatPath> paths, const CcContext& ctx) {
  std::vector<CcResult> out(paths.size());
  const auto count = static_cast<std::ptrdiff_t>(paths.size());
#pragma omp parallel for schedule(dynamic, 4)
  for (std::ptrdiff_t i = 0; i < count; ++i) out[static_cast<std::size_t>(i)] = flask_cc(paths[static_cast<std::size_t>(i)], ctx);
  return out;
}

std::vector<CcResult> flask_cc_many_serial(std::span<const LocalFlatPath> paths, const CcContext& ctx) {
  std::vector<CcResult> out;
  out.reserve(paths.size());
  for (const LocalFlatPath& p : paths) out.push_back(flask_cc_scalar(p, ctx));
  return out;
}

bool state_collision_free(const StateVec& x, const CcContext& ctx) {
  std::vector<Eigen::Vector3f> centers(static_cast<std::size_t>(ctx.robot->sphere_count()));
  ctx.robot->fk(*ctx.map, x, centers);
  return !collides_scalar(centers, *ctx.robot, *ctx.obstacles);
}

}  // namespace flask
