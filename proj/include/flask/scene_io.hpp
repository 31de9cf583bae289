#pragma once

// Problem files (JSON, strict schema) and trajectory files (line-oriented
// text, 17 significant digits).

#include <Eigen/Core>

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "flask/planner.hpp"

namespace flask {

struct RobotSpec {
  std::string type = "unicycle";  // unicycle | quadrotor | planar_quadrotor | two_link_arm
  int r = 2;

  UnicycleLimits unicycle;
  int kappa = 0;
  QuadrotorParams quadrotor;
  QuadrotorLimits quadrotor_limits;
  PlanarQuadrotorParams planar;
  PlanarQuadrotorLimits planar_limits;
  TwoLinkParams arm;
  ManipulatorLimits arm_limits;

  double radius = 0.1;
  Eigen::Vector3d offset = Eigen::Vector3d::Zero();
  int per_link = 4;
  Eigen::Vector3d base = Eigen::Vector3d::Zero();

  int flat_dim() const;
};

struct SphereObstacle {
  Eigen::Vector3d center = Eigen::Vector3d::Zero();
  double radius = 0.0;
};

/// Axis-aligned box turned into a sphere grid at load time.
struct BoxObstacle {
  Eigen::Vector3d lo = Eigen::Vector3d::Zero();
  Eigen::Vector3d hi = Eigen::Vector3d::Zero();
  double sphere_radius = 0.1;
};

/// Everything a problem file says, kept so it can be written back out.
struct ProblemFile {
  std::string name;
  std::string description;
  RobotSpec robot;
  Eigen::Vector3d world_lo = Eigen::Vector3d::Zero();
  Eigen::Vector3d world_hi = Eigen::Vector3d::Zero();
  std::vector<SphereObstacle> spheres;
  std::vector<BoxObstacle> boxes;
  std::vector<double> start;
  FlatBox goal;
  std::vector<double> goal_state;
  ValidationConfig validation;
  FlatBox sample;
  std::vector<double> w_lo;
  std::vector<double> w_hi;
  double rho = 1.0;
  std::vector<double> rw_diag;
  PlannerConfig planner;
};

/// Covers the box with spheres of the given radius on a regular grid over
/// its non-degenerate axes. The union contains the box.
void add_box_spheres(SphereSet& set, const Eigen::Vector3d& lo, const Eigen::Vector3d& hi, double radius);

/// Throws ParseError (with line number for syntax errors, field path for
/// schema errors). Unknown fields are errors unless `lenient`, in which case
/// they are appended to `warnings`.
ProblemFile parse_problem(const std::string& text, bool lenient = false, std::vector<std::string>* warnings = nullptr);
ProblemFile read_problem_file(const std::filesystem::path& path, bool lenient = false,
                              std::vector<std::string>* warnings = nullptr);
/// Canonical JSON with every field spelled out.
std::string dump_problem(const ProblemFile& file);

std::shared_ptr<const FlatnessMap> make_map(const RobotSpec& spec);
RobotGeometry make_geometry(const RobotSpec& spec);
/// Fully validated problem; throws SemanticError.
Problem build_problem(const ProblemFile& file);
Problem load_problem(const std::filesystem::path& path);

/// FNV-1a of the canonical planner block (seed excluded) plus the problem name.
std::string config_hash(const PlannerConfig& cfg, const std::string& problem_name);

// -------------------------------------------------------------- trajectories

struct TrajectoryHeader {
  std::string robot;
  std::string problem;
  std::string variant;
  std::uint64_t seed = 0;
  std::string config_hash;
  bool valid = true;
  double cost = 0.0;
  double length = 0.0;
  double time_ms = 0.0;
  double post_ms = 0.0;
};

struct TrajectoryFile {
  TrajectoryHeader header;
  PiecewiseTrajectory trajectory;
  double dt_out = 0.05;
  std::vector<OriginalRow> samples;
};

std::string format_trajectory(const TrajectoryFile& file);
/// Throws ParseError on malformed input and ValidationError when segments
/// break continuity.
TrajectoryFile parse_trajectory(const std::string& text);
void save_trajectory(const TrajectoryFile& file, const std::filesystem::path& path);
TrajectoryFile load_trajectory(const std::filesystem::path& path);

/// Largest gap between the stored sample table and a fresh evaluation of the
/// segments through `map` (singular rows must agree on the flag).
double sample_table_error(const TrajectoryFile& file, const FlatnessMap& map);

}  // namespace flask
