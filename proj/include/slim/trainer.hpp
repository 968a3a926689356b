#pragma once

#include "slim/checkpoint.hpp"
#include "slim/config.hpp"
#include "slim/discovery.hpp"
#include "slim/mcppo.hpp"
#include "slim/policy.hpp"

#include <json.hpp>

#include <filesystem>
#include <functional>
#include <optional>
#include <random>
#include <vector>

namespace slim {

// Everything a skill-discovery run learns.
struct SkillAgent {
  ExperimentConfig config;
  AlgoVariant variant;
  Policy policy;
  Adam policy_opt;
  CriticEnsemble critics;
  std::optional<ReprNet> repr;
  Adam repr_opt;
  std::optional<Discriminator> disc;
  Adam disc_opt;

  int skill_dim() const { return config.skill.dim; }
  int input_dim() const { return kObsDim + config.skill.dim; }
  DiscoveryModel discovery_model() const;
};

SkillAgent make_agent(const ExperimentConfig& cfg, const AlgoVariant& variant);

Checkpoint agent_checkpoint(const SkillAgent& agent, std::int64_t iteration);
// Throws CheckpointError when the file is not a skill checkpoint.
SkillAgent agent_from_checkpoint(const Checkpoint& ck);

struct IterationMetrics {
  int iteration = 0;
  long long env_steps = 0;
  double return_reach = 0.0;      // mean per-episode sum
  double return_discovery = 0.0;
  double return_safety = 0.0;
  double safety_rate = 0.0;       // fraction of safe post-step states
  int coverage_proxy = 0;         // distinct object cells in the batch
  double phi_loss = 0.0;
  double disc_alignment = 0.0;
  double clip_fraction = 0.0;
  double approx_kl = 0.0;
  double wall_time_s = 0.0;  // progress output only, not logged

  nlohmann::json to_json() const;
};

// Per-episode mean of each reward channel sum.
std::array<double, 3> mean_episode_returns(const RolloutBatch& b);

// Channel rewards fed to each critic, keyed by critic name. Per-channel
// variants get one entry per active channel; single-critic variants get one
// entry "sum" holding the (standardised, for slim_nr) channel sum.
std::map<std::string, Eigen::VectorXd> critic_rewards(const AlgoVariant& v, const RolloutBatch& b);

// Per-column standardisation of one reward channel across the batch.
Eigen::VectorXd standardize_rewards(const Eigen::Ref<const Eigen::VectorXd>& r);

// Runs one iteration of the multi-critic loop on `agent`. Exposed for tests.
IterationMetrics train_iteration(SkillAgent& agent, int iteration);

struct TrainResult {
  std::filesystem::path checkpoint;
  std::filesystem::path metrics_log;
  std::vector<IterationMetrics> log;
};

using ProgressFn = std::function<void(const IterationMetrics&)>;

// Full loop: schedules -> rollouts -> discovery update -> per-critic returns,
// critic fits and GAE -> normalisation -> combination -> PPO. Writes
// config.json, metrics.jsonl, periodic checkpoints and final.ckpt under out_dir.
// Throws NumericalError on divergence.
TrainResult train(const AlgoVariant& variant, const ExperimentConfig& cfg,
                  const std::filesystem::path& out_dir, const ProgressFn& progress = {});

// Seed streams.
enum SeedStream : std::uint64_t {
  kStreamInit = 1,
  kStreamReset = 2,
  kStreamSkill = 3,
  kStreamAct = 4,
  kStreamUpdate = 5,
  kStreamEvalReset = 6,
  kStreamEvalSkill = 7,
  kStreamHrl = 8,
  kStreamGoal = 9,
  kStreamEvalAct = 10,
};

}  // namespace slim
