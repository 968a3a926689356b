#pragma once

#include "slim/env.hpp"
#include "slim/rewards.hpp"
#include "slim/skills.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace slim {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct SkillConfig {
  int dim = 4;
  double kappa = 0.0;
  std::vector<double> mu;  // empty = e1
  int n_segments = 2;

  SkillPrior prior() const;
};

struct TrainConfig {
  std::string variant = "slim";
  std::uint64_t seed = 0;
  int n_iterations = 157;  // 157 x 64 x 200 ~ 2.0e6 env steps
  int n_envs = 64;
  double gamma = 0.99;
  double lam = 0.95;
  double clip = 0.2;
  double policy_lr = 3e-4;
  double critic_lr = 1e-3;
  double phi_lr = 1e-3;
  double disc_lr = 1e-3;
  int ppo_epochs = 4;
  int n_minibatches = 4;
  int critic_epochs = 4;
  int phi_steps = 32;
  int phi_batch = 1024;
  double ent_coef = 0.0;
  double max_grad_norm = 0.5;
  double init_log_std = -0.5;
  std::vector<int> policy_hidden{128, 128};
  std::vector<int> critic_hidden{128, 128};
  std::vector<int> phi_hidden{64, 64};
  std::string discovery_input = "full";  // "full" | "object"
  std::map<std::string, double> omega{{"reach", 1.0}, {"discovery", 1.0}, {"safety", 1.0}};
  int checkpoint_interval = 50;
};

struct HrlConfig {
  int decision_interval = 25;
  double pos_threshold = 0.05;
  double yaw_threshold = 0.2;
  double success_bonus = 10.0;
  int n_iterations = 60;
  int n_envs = 32;
  double gamma = 0.99;
  double lam = 0.95;
  double lr = 3e-4;
  int ppo_epochs = 4;
  int n_minibatches = 4;
  double init_log_std = 0.0;
  std::vector<int> hidden{64, 64};
  double goal_min_distance = 0.08;  // goals closer than this to the start are resampled
  double goal_half_extent = 0.18;
  std::uint64_t seed = 0;
};

struct EvalConfig {
  int n_rollouts = 100;
  int n_seeds = 4;
  int export_skills = 100;
  std::uint64_t seed = 1000;
  bool deterministic = true;  // act with the policy mode; false samples actions
};

struct PlanConfig {
  int step_budget = 150;
  double threshold = 0.05;
  std::uint64_t seed = 0;
};

struct ExperimentConfig {
  EnvConfig env;
  SkillConfig skill;
  RewardConfig reward;
  TrainConfig train;
  HrlConfig hrl;
  EvalConfig eval;
  PlanConfig plan;
  std::string output_dir = "runs";

  void validate() const;
};

nlohmann::json to_json(const ExperimentConfig& cfg);
// Missing keys keep their defaults; unknown keys raise ConfigError.
ExperimentConfig config_from_json(const nlohmann::json& j);
ExperimentConfig load_config(const std::filesystem::path& path);
void save_config(const ExperimentConfig& cfg, const std::filesystem::path& path);

// Output directory after applying the SLIM_OUT_DIR override.
std::filesystem::path resolve_output_dir(const ExperimentConfig& cfg);

// Deterministic stream derivation from one master seed.
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream, std::uint64_t index = 0);

}  // namespace slim
