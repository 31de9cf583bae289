#include "flask/scene_io.hpp"

#include <json.hpp>

#include <algorithm>
#include <array>
#include <charconv>
#include <cstdio>
#include <optional>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

namespace flask {

using nlohmann::json;
using ojson = nlohmann::ordered_json;

int RobotSpec::flat_dim() const {
  if (type == "unicycle" || type == "planar_quadrotor" || type == "two_link_arm") return 2;
  if (type == "quadrotor") return 3;
  return 0;
}

void add_box_spheres(SphereSet& set, const Eigen::Vector3d& lo, const Eigen::Vector3d& hi, double radius) {
  if (!(radius > 0.0)) throw Error(ErrorCode::SemanticError, "box sphere radius must be positive");
  if (!(lo.array() <= hi.array()).all()) throw Error(ErrorCode::SemanticError, "box has lo > hi");
  int axes = 0;
  for (int a = 0; a < 3; ++a) axes += hi[a] > lo[a] ? 1 : 0;
  // Every point of the box is within half a spacing of a center along each
  // live axis, so within radius overall.
  const double spacing = axes == 0 ? 1.0 : 2.0 * radius / std::sqrt(static_cast<double>(axes));
  std::array<int, 3> count{};
  for (int a = 0; a < 3; ++a) {
    const double ext = hi[a] - lo[a];
    count[static_cast<std::size_t>(a)] = ext > 0.0 ? static_cast<int>(std::ceil(ext / spacing - 1e-12)) + 1 : 1;
  }
  auto coord = [&](int a, int k) {
    const int c = count[static_cast<std::size_t>(a)];
    return c == 1 ? 0.5 * (lo[a] + hi[a]) : lo[a] + (hi[a] - lo[a]) * k / (c - 1);
  };
  for (int i = 0; i < count[0]; ++i) {
    for (int j = 0; j < count[1]; ++j) {
      for (int k = 0; k < count[2]; ++k) set.add({coord(0, i), coord(1, j), coord(2, k)}, radius);
    }
  }
}

// ----------------------------------------------------------- JSON reading

namespace {

struct ReadCtx {
  const std::string& text;
  bool lenient;
  std::vector<std::string>* warnings;
};

int line_of_key(const std::string& text, const std::string& path) {
  const auto dot = path.find_last_of('.');
  std::string key = dot == std::string::npos ? path : path.substr(dot + 1);
  if (const auto br = key.find('['); br != std::string::npos) key = key.substr(0, br);
  const auto pos = text.find("\"" + key + "\"");
  if (pos == std::string::npos) return 0;
  return 1 + static_cast<int>(std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(pos), '\n'));
}

[[noreturn]] void field_error(const ReadCtx& ctx, const std::string& path, const std::string& what) {
  const int line = line_of_key(ctx.text, path);
  std::string msg = line > 0 ? "line " + std::to_string(line) + ": " : "";
  throw Error(ErrorCode::ParseError, msg + "field '" + path + "': " + what);
}

class Fields {
 public:
  Fields(const json& j, std::string path, const ReadCtx& ctx) : j_(j), path_(std::move(path)), ctx_(ctx) {
    if (!j.is_object()) field_error(ctx_, path_.empty() ? "<root>" : path_, "expected an object");
  }
  Fields(const Fields&) = delete;
  ~Fields() noexcept(false) {
    if (std::uncaught_exceptions() > 0) return;
    for (const auto& [k, v] : j_.items()) {
      if (used_.count(k)) continue;
      if (!ctx_.lenient) field_error(ctx_, at(k), "unknown field");
      if (ctx_.warnings) ctx_.warnings->push_back("ignoring unknown field '" + at(k) + "'");
    }
  }

  bool has(const std::string& k) const { return j_.contains(k); }
  std::string at(const std::string& k) const { return path_.empty() ? k : path_ + "." + k; }

  const json& need(const std::string& k) {
    if (!j_.contains(k)) field_error(ctx_, at(k), "missing required field");
    used_.insert(k);
    return j_.at(k);
  }
  const json* opt(const std::string& k) {
    if (!j_.contains(k)) return nullptr;
    used_.insert(k);
    return &j_.at(k);
  }

  double num(const std::string& k, std::optional<double> def = std::nullopt) {
    const json* v = def ? opt(k) : &need(k);
    if (!v) return *def;
    if (!v->is_number()) field_error(ctx_, at(k), "expected a number");
    return v->get<double>();
  }
  long integer(const std::string& k, std::optional<long> def = std::nullopt) {
    const json* v = def ? opt(k) : &need(k);
    if (!v) return *def;
    if (!v->is_number_integer()) field_error(ctx_, at(k), "expected an integer");
    return v->get<long>();
  }
  bool boolean(const std::string& k, bool def) {
    const json* v = opt(k);
    if (!v) return def;
    if (!v->is_boolean()) field_error(ctx_, at(k), "expected true or false");
    return v->get<bool>();
  }
  std::string str(const std::string& k, std::optional<std::string> def = std::nullopt) {
    const json* v = def ? opt(k) : &need(k);
    if (!v) return *def;
    if (!v->is_string()) field_error(ctx_, at(k), "expected a string");
    return v->get<std::string>();
  }
  std::vector<double> nums(const std::string& k, bool required = true, int size = -1) {
    const json* v = required ? &need(k) : opt(k);
    if (!v) return {};
    if (!v->is_array()) field_error(ctx_, at(k), "expected an array of numbers");
    std::vector<double> out;
    for (const auto& e : *v) {
      if (!e.is_number()) field_error(ctx_, at(k), "expected an array of numbers");
      out.push_back(e.get<double>());
    }
    if (size >= 0 && static_cast<int>(out.size()) != size) {
      field_error(ctx_, at(k), "expected " + std::to_string(size) + " entries, got " + std::to_string(out.size()));
    }
    return out;
  }
  Eigen::Vector3d vec3(const std::string& k, std::optional<Eigen::Vector3d> def = std::nullopt) {
    if (def && !has(k)) return *def;
    const auto v = nums(k, true, 3);
    return {v[0], v[1], v[2]};
  }
  const ReadCtx& ctx() const { return ctx_; }

 private:
  const json& j_;
  std::string path_;
  const ReadCtx& ctx_;
  std::set<std::string> used_;
};

void read_robot(const json& j, const ReadCtx& ctx, RobotSpec& r) {
  Fields f(j, "robot", ctx);
  r.type = f.str("type");
  if (r.flat_dim() == 0) field_error(ctx, "robot.type", "unknown robot type '" + r.type + "'");
  r.r = static_cast<int>(f.integer("r", 2));
  if (r.r < 1 || r.r > kMaxJetOrder) field_error(ctx, "robot.r", "r must be in [1, 4]");

  const json* params = f.opt("params");
  const json* limits = f.opt("limits");
  static const json empty = json::object();
  Fields p(params ? *params : empty, "robot.params", ctx);
  Fields l(limits ? *limits : empty, "robot.limits", ctx);
  if (r.type == "unicycle") {
    r.kappa = static_cast<int>(p.integer("kappa", 0));
    r.unicycle.v_max = l.num("v_max", r.unicycle.v_max);
    r.unicycle.omega_max = l.num("omega_max", r.unicycle.omega_max);
  } else if (r.type == "quadrotor") {
    r.quadrotor.mass = p.num("mass", r.quadrotor.mass);
    if (p.has("inertia")) {
      const auto d = p.nums("inertia", true, 3);
      r.quadrotor.inertia = Eigen::Vector3d(d[0], d[1], d[2]).asDiagonal();
    }
    r.quadrotor.gravity = p.num("gravity", r.quadrotor.gravity);
    r.quadrotor_limits.v_max = l.num("v_max", r.quadrotor_limits.v_max);
    r.quadrotor_limits.omega_max = l.num("omega_max", r.quadrotor_limits.omega_max);
    r.quadrotor_limits.thrust_max_g = l.num("thrust_max_g", r.quadrotor_limits.thrust_max_g);
    r.quadrotor_limits.torque_max = l.num("torque_max", r.quadrotor_limits.torque_max);
  } else if (r.type == "planar_quadrotor") {
    r.planar.mass = p.num("mass", r.planar.mass);
    r.planar.inertia = p.num("inertia", r.planar.inertia);
    r.planar.arm = p.num("arm", r.planar.arm);
    r.planar.gravity = p.num("gravity", r.planar.gravity);
    r.planar_limits.thrust_max_g = l.num("thrust_max_g", r.planar_limits.thrust_max_g);
  } else {
    r.arm.l1 = p.num("l1", r.arm.l1);
    r.arm.l2 = p.num("l2", r.arm.l2);
    r.arm.m1 = p.num("m1", r.arm.m1);
    r.arm.m2 = p.num("m2", r.arm.m2);
    r.arm.lc1 = p.num("lc1", r.arm.lc1);
    r.arm.lc2 = p.num("lc2", r.arm.lc2);
    r.arm.i1 = p.num("i1", r.arm.i1);
    r.arm.i2 = p.num("i2", r.arm.i2);
    r.arm.gravity = p.num("gravity", r.arm.gravity);
    if (l.has("q_min")) r.arm_limits.q_min = Eigen::Map<const Eigen::VectorXd>(l.nums("q_min", true, 2).data(), 2);
    if (l.has("q_max")) r.arm_limits.q_max = Eigen::Map<const Eigen::VectorXd>(l.nums("q_max", true, 2).data(), 2);
    r.arm_limits.qdot_max = l.num("qdot_max", r.arm_limits.qdot_max);
    r.arm_limits.torque_max = l.num("torque_max", r.arm_limits.torque_max);
  }

  Fields g(f.need("geometry"), "robot.geometry", ctx);
  r.radius = g.num("radius");
  if (r.type == "two_link_arm") {
    r.per_link = static_cast<int>(g.integer("per_link", 4));
    r.base = g.vec3("base", Eigen::Vector3d::Zero());
  } else {
    r.offset = g.vec3("offset", Eigen::Vector3d::Zero());
  }
}

void read_planner(const json& j, const ReadCtx& ctx, PlannerConfig& c) {
  Fields f(j, "planner", ctx);
  if (f.has("variant")) {
    try {
      c.variant = parse_variant(f.str("variant"));
    } catch (const Error& e) {
      field_error(ctx, "planner.variant", e.what());
    }
  }
  c.max_iters = f.integer("max_iters", c.max_iters);
  c.seed = static_cast<std::uint64_t>(f.integer("seed", static_cast<long>(c.seed)));
  c.goal_bias = f.num("goal_bias", c.goal_bias);
  c.zeta = f.num("zeta", c.zeta);
  c.zeta_schedule = f.boolean("zeta_schedule", c.zeta_schedule);
  c.zeta_c = f.num("zeta_c", c.zeta_c);
  c.neighbors = static_cast<int>(f.integer("neighbors", c.neighbors));
  c.max_step = f.num("max_step", c.max_step);
  c.extend_candidates = static_cast<int>(f.integer("extend_candidates", c.extend_candidates));
  c.delta_s = f.num("delta_s", c.delta_s);
  c.delta_bn = f.num("delta_bn", c.delta_bn);
  c.t_min = f.num("t_min", c.t_min);
  c.t_max = f.num("t_max", c.t_max);
  c.time_limit_s = f.num("time_limit_s", c.time_limit_s);
  c.postprocess = f.boolean("postprocess", c.postprocess);
  if (f.has("bracket")) {
    const auto b = f.nums("bracket", true, 2);
    c.bracket = {b[0], b[1]};
  }
  try {
    c.validate();
  } catch (const Error& e) {
    field_error(ctx, "planner", e.what());
  }
}

FlatBox read_box(Fields& parent, const std::string& key, const ReadCtx& ctx, bool with_state,
                 std::vector<double>* state) {
  Fields f(parent.need(key), parent.at(key), ctx);
  FlatBox b{f.nums("lo"), f.nums("hi")};
  if (with_state) *state = f.nums("state");
  return b;
}

}  // namespace

ProblemFile parse_problem(const std::string& text, bool lenient, std::vector<std::string>* warnings) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    const auto upto = std::min<std::size_t>(e.byte, text.size());
    const int line = 1 + static_cast<int>(std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(upto), '\n'));
    throw Error(ErrorCode::ParseError, "line " + std::to_string(line) + ": malformed JSON");
  }
  const ReadCtx ctx{text, lenient, warnings};
  ProblemFile p;
  Fields f(root, "", ctx);
  p.name = f.str("name");
  p.description = f.str("description", "");
  read_robot(f.need("robot"), ctx, p.robot);

  {
    Fields s(f.need("scene"), "scene", ctx);
    if (s.has("bounds")) {
      Fields b(s.need("bounds"), "scene.bounds", ctx);
      p.world_lo = b.vec3("lo");
      p.world_hi = b.vec3("hi");
    }
    if (const json* arr = s.opt("spheres")) {
      if (!arr->is_array()) field_error(ctx, "scene.spheres", "expected an array");
      for (std::size_t i = 0; i < arr->size(); ++i) {
        Fields o((*arr)[i], "scene.spheres[" + std::to_string(i) + "]", ctx);
        p.spheres.push_back({o.vec3("center"), o.num("radius")});
      }
    }
    if (const json* arr = s.opt("boxes")) {
      if (!arr->is_array()) field_error(ctx, "scene.boxes", "expected an array");
      for (std::size_t i = 0; i < arr->size(); ++i) {
        Fields o((*arr)[i], "scene.boxes[" + std::to_string(i) + "]", ctx);
        p.boxes.push_back({o.vec3("lo"), o.vec3("hi"), o.num("sphere_radius")});
      }
    }
  }

  p.start = f.nums("start");
  p.goal = read_box(f, "goal", ctx, true, &p.goal_state);

  {
    Fields l(f.need("limits"), "limits", ctx);
    p.validation.flat_lo = l.nums("flat_lo");
    p.validation.flat_hi = l.nums("flat_hi");
    p.validation.w_max = l.nums("w_max", false);
    p.validation.original_limits = l.boolean("original", true);
  }
  if (const json* v = f.opt("validation")) {
    Fields c(*v, "validation", ctx);
    p.validation.resolution = c.num("resolution", p.validation.resolution);
    p.validation.lane_width = static_cast<int>(c.integer("lane_width", p.validation.lane_width));
  }
  if (f.has("sample")) p.sample = read_box(f, "sample", ctx, false, nullptr);
  if (const json* v = f.opt("propagation")) {
    Fields c(*v, "propagation", ctx);
    p.w_lo = c.nums("w_lo");
    p.w_hi = c.nums("w_hi");
  }
  if (const json* v = f.opt("cost")) {
    Fields c(*v, "cost", ctx);
    p.rho = c.num("rho", 1.0);
    p.rw_diag = c.nums("rw_diag", false);
  }
  if (const json* v = f.opt("planner")) read_planner(*v, ctx, p.planner);
  return p;
}

namespace {

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

ProblemFile read_problem_file(const std::filesystem::path& path, bool lenient, std::vector<std::string>* warnings) {
  return parse_problem(read_text(path), lenient, warnings);
}

namespace {

ojson arr3(const Eigen::Vector3d& v) { return ojson::array({v.x(), v.y(), v.z()}); }

ojson planner_json(const PlannerConfig& c) {
  ojson j;
  j["variant"] = std::string(to_string(c.variant));
  j["max_iters"] = c.max_iters;
  j["seed"] = static_cast<long>(c.seed);
  j["goal_bias"] = c.goal_bias;
  if (std::isfinite(c.zeta)) j["zeta"] = c.zeta;
  j["zeta_schedule"] = c.zeta_schedule;
  j["zeta_c"] = c.zeta_c;
  j["neighbors"] = c.neighbors;
  j["max_step"] = c.max_step;
  j["extend_candidates"] = c.extend_candidates;
  j["delta_s"] = c.delta_s;
  j["delta_bn"] = c.delta_bn;
  j["t_min"] = c.t_min;
  j["t_max"] = c.t_max;
  j["time_limit_s"] = c.time_limit_s;
  j["postprocess"] = c.postprocess;
  j["bracket"] = ojson::array({c.bracket.lower, c.bracket.upper});
  return j;
}

}  // namespace

std::string dump_problem(const ProblemFile& p) {
  ojson j;
  j["name"] = p.name;
  if (!p.description.empty()) j["description"] = p.description;
  const RobotSpec& r = p.robot;
  ojson robot;
  robot["type"] = r.type;
  robot["r"] = r.r;
  ojson params = ojson::object();
  ojson limits = ojson::object();
  ojson geom;
  geom["radius"] = r.radius;
  if (r.type == "unicycle") {
    params["kappa"] = r.kappa;
    limits["v_max"] = r.unicycle.v_max;
    limits["omega_max"] = r.unicycle.omega_max;
  } else if (r.type == "quadrotor") {
    params["mass"] = r.quadrotor.mass;
    params["inertia"] = arr3(r.quadrotor.inertia.diagonal());
    params["gravity"] = r.quadrotor.gravity;
    limits["v_max"] = r.quadrotor_limits.v_max;
    limits["omega_max"] = r.quadrotor_limits.omega_max;
    limits["thrust_max_g"] = r.quadrotor_limits.thrust_max_g;
    limits["torque_max"] = r.quadrotor_limits.torque_max;
  } else if (r.type == "planar_quadrotor") {
    params["mass"] = r.planar.mass;
    params["inertia"] = r.planar.inertia;
    params["arm"] = r.planar.arm;
    params["gravity"] = r.planar.gravity;
    limits["thrust_max_g"] = r.planar_limits.thrust_max_g;
  } else {
    const TwoLinkParams& a = r.arm;
    params = ojson{{"l1", a.l1}, {"l2", a.l2}, {"m1", a.m1}, {"m2", a.m2}, {"lc1", a.lc1},
                   {"lc2", a.lc2}, {"i1", a.i1}, {"i2", a.i2}, {"gravity", a.gravity}};
    if (r.arm_limits.q_min.size() == 2) limits["q_min"] = {r.arm_limits.q_min(0), r.arm_limits.q_min(1)};
    if (r.arm_limits.q_max.size() == 2) limits["q_max"] = {r.arm_limits.q_max(0), r.arm_limits.q_max(1)};
    if (std::isfinite(r.arm_limits.qdot_max)) limits["qdot_max"] = r.arm_limits.qdot_max;
    if (std::isfinite(r.arm_limits.torque_max)) limits["torque_max"] = r.arm_limits.torque_max;
    geom["per_link"] = r.per_link;
    geom["base"] = arr3(r.base);
  }
  if (r.type != "two_link_arm") geom["offset"] = arr3(r.offset);
  robot["params"] = params;
  robot["limits"] = limits;
  robot["geometry"] = geom;
  j["robot"] = robot;

  ojson scene;
  scene["bounds"] = {{"lo", arr3(p.world_lo)}, {"hi", arr3(p.world_hi)}};
  scene["spheres"] = ojson::array();
  for (const auto& s : p.spheres) scene["spheres"].push_back({{"center", arr3(s.center)}, {"radius", s.radius}});
  scene["boxes"] = ojson::array();
  for (const auto& b : p.boxes) {
    scene["boxes"].push_back({{"lo", arr3(b.lo)}, {"hi", arr3(b.hi)}, {"sphere_radius", b.sphere_radius}});
  }
  j["scene"] = scene;
  j["start"] = p.start;
  j["goal"] = {{"lo", p.goal.lo}, {"hi", p.goal.hi}, {"state", p.goal_state}};
  ojson lim;
  lim["flat_lo"] = p.validation.flat_lo;
  lim["flat_hi"] = p.validation.flat_hi;
  if (!p.validation.w_max.empty()) lim["w_max"] = p.validation.w_max;
  lim["original"] = p.validation.original_limits;
  j["limits"] = lim;
  j["validation"] = {{"resolution", p.validation.resolution}, {"lane_width", p.validation.lane_width}};
  if (!p.sample.lo.empty()) j["sample"] = {{"lo", p.sample.lo}, {"hi", p.sample.hi}};
  if (!p.w_lo.empty()) j["propagation"] = {{"w_lo", p.w_lo}, {"w_hi", p.w_hi}};
  ojson cost;
  cost["rho"] = p.rho;
  if (!p.rw_diag.empty()) cost["rw_diag"] = p.rw_diag;
  j["cost"] = cost;
  j["planner"] = planner_json(p.planner);
  return j.dump(2) + "\n";
}

std::shared_ptr<const FlatnessMap> make_map(const RobotSpec& r) {
  try {
    if (r.type == "unicycle") return std::make_shared<UnicycleMap>(r.unicycle, r.kappa);
    if (r.type == "quadrotor") return std::make_shared<QuadrotorMap>(r.quadrotor, r.quadrotor_limits);
    if (r.type == "planar_quadrotor") return std::make_shared<PlanarQuadrotorMap>(r.planar, r.planar_limits);
    if (r.type == "two_link_arm") return std::make_shared<ManipulatorMap>(two_link_dynamics(r.arm), r.arm_limits);
  } catch (const Error& e) {
    throw Error(ErrorCode::SemanticError, e.what());
  }
  throw Error(ErrorCode::SemanticError, "unknown robot type '" + r.type + "'");
}

RobotGeometry make_geometry(const RobotSpec& r) {
  try {
    if (r.type == "two_link_arm") return RobotGeometry::planar_arm(r.arm.l1, r.arm.l2, r.per_link, r.radius, r.base);
    return RobotGeometry::mobile(r.radius, r.offset);
  } catch (const Error& e) {
    throw Error(ErrorCode::SemanticError, e.what());
  }
}

Problem build_problem(const ProblemFile& f) {
  Problem pb;
  pb.name = f.name;
  pb.map = make_map(f.robot);
  pb.robot = make_geometry(f.robot);
  pb.dims = {f.robot.flat_dim(), f.robot.r};
  const auto rn = static_cast<std::size_t>(pb.dims.state_size());
  auto sized = [&](const std::vector<double>& v, const char* what) {
    if (v.size() != rn) {
      throw Error(ErrorCode::SemanticError, std::string(what) + " must have r * n = " + std::to_string(rn) + " entries");
    }
    return FlatState(pb.dims, v);
  };
  pb.start = sized(f.start, "start");
  pb.goal_state = sized(f.goal_state, "goal.state");
  pb.goal = f.goal;
  pb.validation = f.validation;
  pb.sample = f.sample;
  pb.w_lo = f.w_lo;
  pb.w_hi = f.w_hi;
  if (!(f.rho >= 0.0)) throw Error(ErrorCode::SemanticError, "rho must be non-negative");
  if (f.rw_diag.empty()) {
    pb.weights = CostWeights(pb.dims.n, f.rho);
  } else {
    if (f.rw_diag.size() != static_cast<std::size_t>(pb.dims.n)) {
      throw Error(ErrorCode::SemanticError, "cost.rw_diag must have n entries");
    }
    try {
      pb.weights = CostWeights(Eigen::Map<const Eigen::VectorXd>(f.rw_diag.data(), pb.dims.n).asDiagonal(), f.rho);
    } catch (const Error& e) {
      throw Error(ErrorCode::SemanticError, e.what());
    }
  }
  if (!(f.world_lo.array() <= f.world_hi.array()).all()) throw Error(ErrorCode::SemanticError, "world bounds have lo > hi");
  for (const auto& s : f.spheres) {
    if (!(s.radius > 0.0)) throw Error(ErrorCode::SemanticError, "obstacle radius must be positive");
    pb.obstacles.add(s.center, s.radius);
  }
  for (const auto& b : f.boxes) add_box_spheres(pb.obstacles, b.lo, b.hi, b.sphere_radius);
  pb.prepare();
  return pb;
}

Problem load_problem(const std::filesystem::path& path) { return build_problem(read_problem_file(path)); }

std::string config_hash(const PlannerConfig& cfg, const std::string& problem_name) {
  // The seed has its own header line; runs over many seeds share a hash.
  ojson j = planner_json(cfg);
  j.erase("seed");
  const std::string s = problem_name + "\n" + j.dump();
  std::uint64_t h = 1469598103934665603ull;
  for (const unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

// ------------------------------------------------------------ trajectories

namespace {

void put(std::string& out, double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::general, 17);
  out.push_back(' ');
  out.append(buf, res.ptr);
}

void put_row(std::string& out, const char* tag, std::span<const double> v) {
  out += tag;
  for (double x : v) put(out, x);
  out += '\n';
}

class LineReader {
 public:
  explicit LineReader(const std::string& text) : in_(text) {}

  // Next non-empty, non-comment line split into tokens.
  std::vector<std::string> next() {
    std::string line;
    while (std::getline(in_, line)) {
      ++line_no_;
      if (line.empty() || line[0] == '#') continue;
      std::istringstream ss(line);
      std::vector<std::string> tok;
      for (std::string t; ss >> t;) tok.push_back(t);
      if (!tok.empty()) return tok;
    }
    fail("unexpected end of file");
  }

  std::vector<std::string> expect(const std::string& key, std::size_t min_tokens = 2) {
    auto tok = next();
    if (tok[0] != key) fail("expected '" + key + "', found '" + tok[0] + "'");
    if (tok.size() < min_tokens) fail("too few values after '" + key + "'");
    return tok;
  }

  double number(const std::string& s) const {
    double v = 0.0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size()) fail("bad number '" + s + "'");
    return v;
  }
  long integer(const std::string& s) const {
    long v = 0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size()) fail("bad integer '" + s + "'");
    return v;
  }
  std::vector<double> numbers(const std::vector<std::string>& tok, std::size_t from, std::size_t count) const {
    if (tok.size() != from + count) {
      fail("expected " + std::to_string(count) + " values after '" + tok[0] + "'");
    }
    std::vector<double> v;
    for (std::size_t i = from; i < tok.size(); ++i) v.push_back(number(tok[i]));
    return v;
  }

  [[noreturn]] void fail(const std::string& what) const {
    throw Error(ErrorCode::ParseError, "line " + std::to_string(line_no_) + ": " + what);
  }

 private:
  std::istringstream in_;
  int line_no_ = 0;
};

}  // namespace

std::string format_trajectory(const TrajectoryFile& f) {
  const TrajectoryHeader& h = f.header;
  std::string out = "# flask trajectory v1\n";
  out += "robot " + h.robot + "\n";
  out += "problem " + h.problem + "\n";
  out += "variant " + h.variant + "\n";
  out += "seed " + std::to_string(h.seed) + "\n";
  out += "config_hash " + h.config_hash + "\n";
  out += std::string("valid ") + (h.valid ? "1" : "0") + "\n";
  out += "cost";
  put(out, h.cost);
  out += "\nlength";
  put(out, h.length);
  out += "\ntime_ms";
  put(out, h.time_ms);
  out += "\npost_ms";
  put(out, h.post_ms);
  out += "\n";

  const auto& segs = f.trajectory.segments();
  const FlatDims d = segs.empty() ? FlatDims{} : segs.front().dims();
  out += "dims " + std::to_string(d.n) + " " + std::to_string(d.r) + "\n";
  out += "segments " + std::to_string(segs.size()) + "\n";
  for (const auto& s : segs) {
    out += "segment";
    put(out, s.duration);
    put(out, s.cost);
    out += "\n";
    put_row(out, "z0", s.z0.data());
    put_row(out, "zf", s.zf.data());
    for (int i = 0; i < d.n; ++i) {
      const Eigen::VectorXd y = s.y_coeffs.row(i).transpose();
      put_row(out, "y", std::span<const double>(y.data(), static_cast<std::size_t>(y.size())));
    }
    for (int i = 0; i < d.n; ++i) {
      const Eigen::VectorXd w = s.w_coeffs.row(i).transpose();
      put_row(out, "w", std::span<const double>(w.data(), static_cast<std::size_t>(w.size())));
    }
  }
  const int nx = f.samples.empty() ? 0 : static_cast<int>(f.samples.front().x.size());
  const int nu = f.samples.empty() ? 0 : static_cast<int>(f.samples.front().u.size());
  out += "samples " + std::to_string(f.samples.size()) + " " + std::to_string(nx) + " " + std::to_string(nu);
  put(out, f.dt_out);
  out += "\n";
  for (const auto& row : f.samples) {
    out += "s";
    put(out, row.t);
    for (int i = 0; i < nx; ++i) put(out, row.x(i));
    for (int i = 0; i < nu; ++i) put(out, row.u(i));
    out += row.singular ? " 1\n" : " 0\n";
  }
  out += "end\n";
  return out;
}

TrajectoryFile parse_trajectory(const std::string& text) {
  LineReader in(text);
  TrajectoryFile f;
  TrajectoryHeader& h = f.header;
  h.robot = in.expect("robot")[1];
  h.problem = in.expect("problem")[1];
  h.variant = in.expect("variant")[1];
  h.seed = static_cast<std::uint64_t>(in.integer(in.expect("seed")[1]));
  h.config_hash = in.expect("config_hash")[1];
  h.valid = in.integer(in.expect("valid")[1]) != 0;
  h.cost = in.number(in.expect("cost")[1]);
  h.length = in.number(in.expect("length")[1]);
  h.time_ms = in.number(in.expect("time_ms")[1]);
  h.post_ms = in.number(in.expect("post_ms")[1]);

  const auto dt = in.expect("dims", 3);
  const FlatDims d{static_cast<int>(in.integer(dt[1])), static_cast<int>(in.integer(dt[2]))};
  if (d.n < 1 || d.n > kMaxFlatDim || d.r < 1 || d.r > kMaxJetOrder) in.fail("unsupported dims");
  const long count = in.integer(in.expect("segments")[1]);
  if (count < 0) in.fail("negative segment count");
  const auto rn = static_cast<std::size_t>(d.state_size());
  std::vector<LocalFlatPath> segs;
  for (long k = 0; k < count; ++k) {
    LocalFlatPath s;
    const auto head = in.numbers(in.expect("segment", 3), 1, 2);
    s.duration = head[0];
    s.cost = head[1];
    if (!(s.duration > 0.0)) in.fail("segment duration must be positive");
    s.z0 = FlatState(d, in.numbers(in.expect("z0"), 1, rn));
    s.zf = FlatState(d, in.numbers(in.expect("zf"), 1, rn));
    s.y_coeffs.resize(d.n, 2 * d.r);
    s.w_coeffs.resize(d.n, d.r);
    for (int i = 0; i < d.n; ++i) {
      const auto v = in.numbers(in.expect("y"), 1, static_cast<std::size_t>(2 * d.r));
      for (int c = 0; c < 2 * d.r; ++c) s.y_coeffs(i, c) = v[static_cast<std::size_t>(c)];
    }
    for (int i = 0; i < d.n; ++i) {
      const auto v = in.numbers(in.expect("w"), 1, static_cast<std::size_t>(d.r));
      for (int c = 0; c < d.r; ++c) s.w_coeffs(i, c) = v[static_cast<std::size_t>(c)];
    }
    // Stored endpoint states must agree with the polynomial.
    const FlatState a = eval_path(s, 0.0).z;
    const FlatState b = eval_path(s, s.duration).z;
    for (std::size_t j = 0; j < rn; ++j) {
      const double e0 = std::abs(a.data()[j] - s.z0.data()[j]) / std::max(1.0, std::abs(s.z0.data()[j]));
      const double e1 = std::abs(b.data()[j] - s.zf.data()[j]) / std::max(1.0, std::abs(s.zf.data()[j]));
      if (!(e0 <= 1e-9) || !(e1 <= 1e-9)) {
        throw Error(ErrorCode::ValidationError,
                    "segment " + std::to_string(k) + " endpoint states do not match its coefficients");
      }
    }
    segs.push_back(std::move(s));
  }
  const auto st = in.expect("samples", 5);
  const long rows = in.integer(st[1]);
  const long nx = in.integer(st[2]);
  const long nu = in.integer(st[3]);
  if (rows < 0 || nx < 0 || nx > 18 || nu < 0 || nu > kMaxFlatDim) in.fail("bad sample table shape");
  f.dt_out = in.number(st[4]);
  for (long k = 0; k < rows; ++k) {
    const auto tok = in.expect("s");
    const auto v = in.numbers(tok, 1, static_cast<std::size_t>(2 + nx + nu));
    OriginalRow row;
    row.t = v[0];
    row.x.resize(nx);
    row.u.resize(nu);
    for (long i = 0; i < nx; ++i) row.x(i) = v[static_cast<std::size_t>(1 + i)];
    for (long i = 0; i < nu; ++i) row.u(i) = v[static_cast<std::size_t>(1 + nx + i)];
    row.singular = v.back() != 0.0;
    f.samples.push_back(std::move(row));
  }
  in.expect("end", 1);
  f.trajectory = PiecewiseTrajectory(std::move(segs));
  f.trajectory.check_continuity(1e-9);
  return f;
}

void save_trajectory(const TrajectoryFile& file, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::IoError, "cannot write '" + path.string() + "'");
  out << format_trajectory(file);
  if (!out) throw Error(ErrorCode::IoError, "write failed for '" + path.string() + "'");
}

TrajectoryFile load_trajectory(const std::filesystem::path& path) { return parse_trajectory(read_text(path)); }

double sample_table_error(const TrajectoryFile& file, const FlatnessMap& map) {
  double worst = 0.0;
  if (file.trajectory.empty()) return file.samples.empty() ? 0.0 : std::numeric_limits<double>::infinity();
  for (const auto& row : file.samples) {
    const auto [i, tl] = file.trajectory.locate(row.t);
    try {
      const OriginalSample s = map.evaluate_at(file.trajectory.segments()[static_cast<std::size_t>(i)], tl);
      if (row.singular || s.x.size() != row.x.size() || s.u.size() != row.u.size()) {
        return std::numeric_limits<double>::infinity();
      }
      worst = std::max(worst, (s.x - row.x).cwiseAbs().maxCoeff() / (1.0 + s.x.norm()));
      worst = std::max(worst, (s.u - row.u).cwiseAbs().maxCoeff() / (1.0 + s.u.norm()));
    } catch (const Error&) {
      if (!row.singular) return std::numeric_limits<double>::infinity();
    }
  }
  return worst;
}

}  // namespace flask
