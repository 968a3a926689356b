#pragma once

#include "slim/env.hpp"
#include "slim/hrl.hpp"

#include <json.hpp>

#include <filesystem>
#include <string>
#include <vector>

namespace slim {

struct WaypointPlan {
  std::string name;
  std::vector<Vec3> waypoints;
  int step_budget = 150;  // per waypoint
  double threshold = 0.05;

  // Throws std::invalid_argument when empty or outside the workspace.
  void validate(const EnvConfig& env) const;
};

// Samples logged while following one waypoint. The first state of every
// segment after the first repeats the last state of the previous segment.
struct WaypointTrace {
  int waypoint = 0;
  std::vector<Vec3> obj_pos;
  std::vector<double> distance;
  std::vector<bool> safe;
  bool reached = false;
};

struct TrajectoryReport {
  bool overall_success = false;
  double max_distance = 0.0;
  int points_success = 0;
  double safety_rate = 1.0;
  std::vector<WaypointTrace> traces;

  // Metrics in table order: overall success, max distance, points success, safety rate.
  nlohmann::json to_json(bool with_traces = false) const;
  std::string table_row() const;
};

// Drives the position controller through the plan in order. On budget
// exhaustion the waypoint is recorded as missed and the next one starts.
TrajectoryReport follow(const WaypointPlan& plan, const HighLevelPolicy& high, const Policy& low,
                        const EnvConfig& env, std::uint64_t rng_seed);

// Recomputes the four metrics from the plan and the logged positions/flags only.
TrajectoryReport score_traces(const WaypointPlan& plan, const std::vector<WaypointTrace>& traces);

// Six five-waypoint shapes: line, L-shape, square loop, lift-and-place arc,
// zigzag, triangle loop.
std::vector<WaypointPlan> builtin_plans();

// Text format: one "x y z" triple per line; blank lines and '#' comments are
// ignored. Throws std::runtime_error with the offending line number.
WaypointPlan load_plan(const std::filesystem::path& path);

}  // namespace slim
