#pragma once

#include "slim/checkpoint.hpp"
#include "slim/config.hpp"
#include "slim/env.hpp"
#include "slim/policy.hpp"
#include "slim/skills.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <stdexcept>
#include <vector>

namespace slim {

class HrlError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class GoalKind { position, yaw };

struct Goal {
  GoalKind kind = GoalKind::position;
  Vec3 target_pos = Vec3::Zero();
  double target_yaw = 0.0;
  double threshold = 0.05;  // meters or radians
};

GoalKind goal_kind_from_string(const std::string& s);  // "pos" | "yaw"
const char* goal_kind_name(GoalKind k);

// [is_position, is_yaw, target - obj (3), sin/cos of the yaw error].
inline constexpr int kGoalEncDim = 7;
Eigen::VectorXd encode_goal(const State& s, const Goal& g);

// Object-to-goal error: Euclidean distance or wrapped absolute yaw error.
double goal_error(const State& s, const Goal& g);
bool goal_reached(const State& s, const Goal& g);

// Dense task reward: -error + bonus * [error < threshold].
double task_reward(const State& s, const Goal& g, double bonus = 10.0);

// Emits unit skills for a frozen low-level policy every `interval` steps.
struct HighLevelPolicy {
  Policy policy;  // gaussian head over the skill space
  int interval = 25;

  // Skill for one observation: sample (or mean) projected onto the sphere.
  static SkillVector project(const Eigen::VectorXd& raw);
};

HighLevelPolicy make_high_level(int skill_dim, const HrlConfig& cfg, Rng& rng);

struct Decision {
  Eigen::VectorXd input;
  Eigen::VectorXd raw;
  double log_prob = 0.0;
  double reward = 0.0;
};

struct EpisodeRecord {
  std::vector<State> states;  // initial state, then one per executed step
  std::vector<double> errors;  // goal error per entry of `states`
  std::vector<bool> safe;      // is_safe per entry of `states`
  std::vector<SkillVector> skills;  // one per high-level decision
  std::vector<Decision> decisions;
  bool success = false;
  int first_success = -1;  // index into `states`, or -1
};

struct RolloutOptions {
  int max_steps = 200;
  bool deterministic = false;
  bool stop_on_success = false;
  double bonus = 10.0;
};

// Every `interval` steps the high level emits z; the frozen low level then runs
// up to `interval` primitive steps conditioned on z with its distribution mode.
EpisodeRecord hrl_rollout(const HighLevelPolicy& high, const Policy& low, const EnvConfig& env,
                          const State& start, const Goal& goal, Rng& rng,
                          const RolloutOptions& opt);

// Primitive-action baseline on the same task: one decision per step.
EpisodeRecord flat_rollout(const Policy& flat, const EnvConfig& env, const State& start,
                           const Goal& goal, Rng& rng, const RolloutOptions& opt);

Goal sample_goal(GoalKind kind, const State& start, const HrlConfig& cfg, Rng& rng);

enum class HrlMode { hierarchical, scratch };

struct CurvePoint {
  int iteration = 0;
  long long env_steps = 0;
  double success_rate = 0.0;
  double mean_return = 0.0;

  nlohmann::json to_json() const;
};

struct HrlResult {
  std::vector<CurvePoint> curve;
  Checkpoint checkpoint;
  std::filesystem::path checkpoint_path;
  std::filesystem::path curve_path;
};

// Trains the high-level controller over a frozen skill policy (or, in scratch
// mode, a flat primitive-action policy that ignores the skill checkpoint) with
// single-critic PPO on the task reward. Throws HrlError when the skill
// checkpoint's dimension disagrees with cfg.skill.dim.
HrlResult hrl_train(const Checkpoint* skill_ckpt, const std::filesystem::path& skill_path,
                    GoalKind kind, HrlMode mode, const ExperimentConfig& cfg,
                    const std::filesystem::path& out_dir,
                    const std::function<void(const CurvePoint&)>& progress = {});

// A loaded hierarchical controller with its frozen low-level policy.
struct HrlController {
  HighLevelPolicy high;
  Policy low;
  ExperimentConfig config;
  GoalKind kind = GoalKind::position;
};

// Loads a hierarchical checkpoint and the low-level checkpoint it references
// (or `skill_override`), verifying the recorded low-level hash.
HrlController load_controller(const Checkpoint& hrl_ckpt,
                              const std::optional<std::filesystem::path>& skill_override = {});

std::string hash_hex(std::uint64_t h);

}  // namespace slim
