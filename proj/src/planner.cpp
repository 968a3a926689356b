#include "slim/planner.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace slim {

void WaypointPlan::validate(const EnvConfig& env) const {
  if (waypoints.empty()) throw std::invalid_argument("plan: needs at least one waypoint");
  if (step_budget < 1 || !(threshold > 0.0))
    throw std::invalid_argument("plan: budget and threshold must be positive");
  const Vec3 lo = workspace_lo(env), hi = workspace_hi(env);
  for (const auto& w : waypoints)
    if ((w.array() < lo.array()).any() || (w.array() > hi.array()).any())
      throw std::invalid_argument("plan: waypoint outside the workspace");
}

nlohmann::json TrajectoryReport::to_json(bool with_traces) const {
  // nlohmann::ordered_json keeps the table column order on output.
  nlohmann::json j = {{"overall_success", overall_success},
                      {"max_distance", max_distance},
                      {"points_success", points_success},
                      {"safety_rate", safety_rate}};
  if (with_traces) {
    nlohmann::json tr = nlohmann::json::array();
    for (const auto& t : traces) {
      nlohmann::json pos = nlohmann::json::array();
      for (const auto& p : t.obj_pos) pos.push_back({p.x(), p.y(), p.z()});
      tr.push_back({{"waypoint", t.waypoint},
                    {"reached", t.reached},
                    {"obj", pos},
                    {"distance", t.distance},
                    {"safe", t.safe}});
    }
    j["traces"] = tr;
  }
  return j;
}

std::string TrajectoryReport::table_row() const {
  char buf[160];
  std::snprintf(buf, sizeof buf,
                "overall_success=%d max_distance=%.4f points_success=%d safety_rate=%.4f",
                overall_success ? 1 : 0, max_distance, points_success, safety_rate);
  return buf;
}

TrajectoryReport follow(const WaypointPlan& plan, const HighLevelPolicy& high, const Policy& low,
                        const EnvConfig& env, std::uint64_t rng_seed) {
  plan.validate(env);
  EnvConfig run_env = env;
  run_env.episode_len = static_cast<int>(plan.waypoints.size()) * plan.step_budget;
  State s = reset(rng_seed, run_env);
  Rng rng(rng_seed);

  TrajectoryReport rep;
  long long safe_states = 0, states = 0;
  for (std::size_t i = 0; i < plan.waypoints.size(); ++i) {
    Goal goal;
    goal.kind = GoalKind::position;
    goal.target_pos = plan.waypoints[i];
    goal.threshold = plan.threshold;
    RolloutOptions opt;
    opt.max_steps = plan.step_budget;
    opt.deterministic = true;
    opt.stop_on_success = true;
    const EpisodeRecord rec = hrl_rollout(high, low, run_env, s, goal, rng, opt);

    WaypointTrace tr;
    tr.waypoint = static_cast<int>(i);
    tr.reached = rec.success;
    for (std::size_t k = 0; k < rec.states.size(); ++k) {
      tr.obj_pos.push_back(rec.states[k].obj_pos);
      tr.distance.push_back(rec.errors[k]);
      tr.safe.push_back(rec.safe[k]);
      rep.max_distance = std::max(rep.max_distance, rec.errors[k]);
      // The segment start is the previous segment's final state.
      if (k > 0 || i == 0) {
        ++states;
        if (rec.safe[k]) ++safe_states;
      }
    }
    if (rec.success) ++rep.points_success;
    rep.traces.push_back(std::move(tr));
    s = rec.states.back();
  }
  rep.overall_success = rep.points_success == static_cast<int>(plan.waypoints.size());
  rep.safety_rate = states ? static_cast<double>(safe_states) / static_cast<double>(states) : 1.0;
  return rep;
}

TrajectoryReport score_traces(const WaypointPlan& plan, const std::vector<WaypointTrace>& traces) {
  TrajectoryReport rep;
  rep.traces = traces;
  long long unique = 0, unsafe = 0;
  for (std::size_t i = 0; i < traces.size(); ++i) {
    const auto& tr = traces[i];
    const Vec3& wp = plan.waypoints.at(static_cast<std::size_t>(tr.waypoint));
    bool hit = false;
    for (std::size_t k = 0; k < tr.obj_pos.size(); ++k) {
      const double d = (tr.obj_pos[k] - wp).norm();
      if (d > rep.max_distance) rep.max_distance = d;
      if (d < plan.threshold) hit = true;
    }
    rep.points_success += hit ? 1 : 0;
    const std::size_t first = i == 0 ? 0 : 1;
    for (std::size_t k = first; k < tr.safe.size(); ++k) {
      ++unique;
      if (!tr.safe[k]) ++unsafe;
    }
  }
  rep.overall_success = rep.points_success == static_cast<int>(plan.waypoints.size());
  rep.safety_rate = unique ? 1.0 - static_cast<double>(unsafe) / static_cast<double>(unique) : 1.0;
  return rep;
}

std::vector<WaypointPlan> builtin_plans() {
  const double r = 0.025;  // cube resting height
  auto plan = [](std::string name, std::vector<Vec3> w) {
    WaypointPlan p;
    p.name = std::move(name);
    p.waypoints = std::move(w);
    return p;
  };
  return {
      plan("line", {{-0.12, 0.0, r}, {-0.06, 0.0, r}, {0.0, 0.0, r}, {0.06, 0.0, r}, {0.12, 0.0, r}}),
      plan("l_shape",
           {{-0.10, 0.10, r}, {-0.10, 0.0, r}, {-0.10, -0.10, r}, {0.0, -0.10, r}, {0.10, -0.10, r}}),
      plan("square_loop",
           {{0.08, 0.08, r}, {-0.08, 0.08, r}, {-0.08, -0.08, r}, {0.08, -0.08, r}, {0.08, 0.08, r}}),
      plan("lift_and_place_arc",
           {{-0.10, 0.0, r}, {-0.05, 0.0, 0.08}, {0.0, 0.0, 0.11}, {0.05, 0.0, 0.08}, {0.10, 0.0, r}}),
      plan("zigzag",
           {{-0.12, -0.06, r}, {-0.06, 0.06, r}, {0.0, -0.06, r}, {0.06, 0.06, r}, {0.12, -0.06, r}}),
      plan("triangle_loop",
           {{0.0, 0.10, r}, {-0.045, 0.02, r}, {-0.09, -0.06, r}, {0.09, -0.06, r}, {0.0, 0.10, r}}),
  };
}

WaypointPlan load_plan(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("plan: cannot open " + path.string());
  WaypointPlan p;
  p.name = path.filename().string();
  std::string line;
  int line_no = 0;
  while (std::getline(f, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::istringstream ss(line);
    double x, y, z;
    std::string extra;
    if (!(ss >> x >> y >> z) || (ss >> extra))
      throw std::runtime_error("plan: line " + std::to_string(line_no) + ": expected 'x y z'");
    p.waypoints.emplace_back(x, y, z);
  }
  if (p.waypoints.empty()) throw std::runtime_error("plan: " + path.string() + " has no waypoints");
  return p;
}

}  // namespace slim
