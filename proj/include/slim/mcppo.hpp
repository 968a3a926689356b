#pragma once

#include "slim/discovery.hpp"
#include "slim/env.hpp"
#include "slim/network.hpp"
#include "slim/policy.hpp"
#include "slim/rewards.hpp"
#include "slim/skills.hpp"

#include <Eigen/Core>

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace slim {

// Raised when training produces non-finite numbers.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Estimators

// G_t = sum_{j>=t} gamma^{j-t} r_j over one episode.
Eigen::VectorXd mc_returns(const Eigen::Ref<const Eigen::VectorXd>& rewards, double gamma);

// Generalised advantage estimation over one episode. `values` has one more
// entry than `rewards`; the last entry is the bootstrap value (0 at a terminal).
Eigen::VectorXd gae(const Eigen::Ref<const Eigen::VectorXd>& rewards,
                    const Eigen::Ref<const Eigen::VectorXd>& values, double gamma, double lam);

// (A - mean) / max(std, 1e-8) with the population std; a constant input maps to zeros.
Eigen::VectorXd normalize_advantages(const Eigen::Ref<const Eigen::VectorXd>& a);

// ---------------------------------------------------------------------------
// Channels and variants

enum class Channel { reach = 0, discovery = 1, safety = 2 };
inline constexpr std::array<Channel, 3> kAllChannels{Channel::reach, Channel::discovery,
                                                     Channel::safety};
const char* channel_name(Channel c);

struct CombinationWeights {
  std::map<Channel, double> omega{{Channel::reach, 1.0}, {Channel::discovery, 1.0},
                                  {Channel::safety, 1.0}};
  double weight(Channel c) const;
  void validate() const;
};

// Sum of omega_c * A_c over the channels present in `advantages`.
Eigen::VectorXd combine_advantages(const std::map<Channel, Eigen::VectorXd>& advantages,
                                   const CombinationWeights& w);

enum class CriticMode {
  per_channel,  // one critic per active channel, advantages normalised per channel
  single_sum,   // one critic on the summed (possibly standardised) rewards
};

enum class RewardNorm { none, standardize };
enum class DiscoverySource { lsd, diayn };

struct AlgoVariant {
  std::string tag;
  std::vector<Channel> channels;
  CriticMode critic_mode = CriticMode::per_channel;
  RewardNorm reward_norm = RewardNorm::none;
  DiscoverySource discovery = DiscoverySource::lsd;

  bool uses(Channel c) const;
  int critic_count() const;

  // slim, slim_ur, slim_nr, no_reach, no_discovery, no_safety, lsd, diayn.
  // Throws std::invalid_argument on an unknown tag.
  static AlgoVariant from_tag(const std::string& tag);
  static const std::vector<std::string>& tags();
};

// ---------------------------------------------------------------------------
// Critics

// Value network whose raw output lives in a normalised target space. The
// affine output map (scale, shift) is updated with output-preserving
// rescaling of the last layer, so V(s, z) keeps the channel's own reward scale.
class Critic {
 public:
  Critic() = default;
  Critic(int input_dim, const std::vector<int>& hidden, double lr, std::mt19937_64& rng);

  Eigen::RowVectorXd value(const Eigen::MatrixXd& inputs) const;
  // Refits the output map to the statistics of `targets` without changing
  // the value function.
  void update_target_stats(const Eigen::Ref<const Eigen::VectorXd>& targets);
  // One Adam step on 0.5 * mean (V - target)^2 in normalised space. Returns the
  // loss before the step (in the channel's own scale).
  double regress(const Eigen::MatrixXd& inputs, const Eigen::Ref<const Eigen::VectorXd>& targets);
  // Gradient of the normalised-space loss; exposed for gradient checks.
  GradientSet loss_gradient(const Eigen::MatrixXd& inputs,
                            const Eigen::Ref<const Eigen::VectorXd>& targets,
                            double* loss = nullptr) const;

  const Network& net() const { return net_; }
  Network& net() { return net_; }
  double shift() const { return shift_; }
  double scale() const { return scale_; }
  void set_output_map(double shift, double scale) { shift_ = shift; scale_ = scale; }
  void set_lr(double lr) { opt_.set_lr(lr); }

 private:
  Network net_;
  Adam opt_;
  double shift_ = 0.0;
  double scale_ = 1.0;
};

struct CriticEnsemble {
  std::map<std::string, Critic> critics;
};

// One regression step per critic against its own channel's targets. Keys of
// `targets` must match the ensemble. Returns per-critic losses.
std::map<std::string, double> critic_update(CriticEnsemble& ens, const Eigen::MatrixXd& inputs,
                                            const std::map<std::string, Eigen::VectorXd>& targets);

// ---------------------------------------------------------------------------
// Rollouts

struct Transition {
  Observation obs;
  SkillVector z;
  Eigen::VectorXd raw;  // stored action encoding
  Action action;
  double log_prob = 0.0;
  RewardTriple rewards;
  bool safe = true;
  Observation next_obs;
  bool done = false;
};

// Structure-of-arrays storage for n_episodes x T transitions; column
// e * T + t holds step t of episode e.
struct RolloutBatch {
  int n_episodes = 0;
  int horizon = 0;
  Eigen::MatrixXd obs, next_obs, z, raw;
  Eigen::VectorXd log_prob;
  Eigen::MatrixXd rewards;  // 3 x N, rows indexed by Channel
  Eigen::VectorXd safe, done;
  Eigen::MatrixXd obj_pos, ee_pos;  // post-step positions, 3 x N
  Eigen::VectorXd obj_yaw;
  std::vector<int> segment;  // skill segment index per column

  // Filled by the training loop, keyed by critic name.
  std::map<std::string, Eigen::VectorXd> values, returns, advantages;

  Eigen::Index size() const { return obs.cols(); }
  Transition transition(Eigen::Index i) const;
  Eigen::MatrixXd policy_inputs() const;  // obs stacked over z
  Eigen::Ref<const Eigen::VectorXd> episode(const Eigen::VectorXd& per_step, int e) const {
    return per_step.segment(static_cast<Eigen::Index>(e) * horizon, horizon);
  }
};

// Source of the discovery channel used while collecting.
struct DiscoveryModel {
  DiscoverySource source = DiscoverySource::lsd;
  const ReprNet* repr = nullptr;
  const Discriminator* disc = nullptr;
};

// Recomputes the discovery row of `batch` from the current model.
void recompute_discovery(RolloutBatch& batch, const DiscoveryModel& model);

struct RolloutSpec {
  EnvConfig env;
  RewardConfig reward;
  // One reset seed and one schedule per episode.
  std::vector<std::uint64_t> reset_seeds;
  std::vector<SkillSchedule> schedules;
  bool deterministic = false;  // act with the distribution mode
};

// Runs every episode for T steps with `policy` (inputs obs ⊕ z), filling all
// three reward channels. Deterministic given the rng state and seeds.
RolloutBatch collect_rollouts(const Policy& policy, const DiscoveryModel& model,
                              const RolloutSpec& spec, std::mt19937_64& rng);

// ---------------------------------------------------------------------------
// Policy update

struct PpoConfig {
  double clip_eps = 0.2;
  int n_epochs = 4;
  int n_minibatches = 4;
  double ent_coef = 0.0;
  double max_grad_norm = 0.5;
};

struct PpoStats {
  double surrogate = 0.0;
  double clip_fraction = 0.0;
  double approx_kl = 0.0;
};

// Clipped-surrogate loss gradient (for descent) and statistics on one minibatch.
struct SurrogateGrad {
  Eigen::VectorXd grad;
  double surrogate = 0.0;
  double clip_fraction = 0.0;
  double approx_kl = 0.0;
};
SurrogateGrad surrogate_gradient(const Policy& policy, const Eigen::MatrixXd& inputs,
                                 const Eigen::MatrixXd& raw, const Eigen::VectorXd& old_log_prob,
                                 const Eigen::VectorXd& advantages, double clip_eps,
                                 double ent_coef);

// Maximises mean[min(rho A, clip(rho, 1 +- eps) A)] over n_epochs of shuffled
// minibatches. Throws NumericalError on a non-finite ratio.
PpoStats ppo_update(Policy& policy, Adam& opt, const Eigen::MatrixXd& inputs,
                    const Eigen::MatrixXd& raw, const Eigen::VectorXd& old_log_prob,
                    const Eigen::VectorXd& advantages, const PpoConfig& cfg, std::mt19937_64& rng);

// Minibatch index permutation used by the update loops.
std::vector<std::vector<Eigen::Index>> minibatches(Eigen::Index n, int n_minibatches,
                                                   std::mt19937_64& rng);
Eigen::MatrixXd gather_cols(const Eigen::MatrixXd& m, const std::vector<Eigen::Index>& idx);
Eigen::VectorXd gather(const Eigen::VectorXd& v, const std::vector<Eigen::Index>& idx);

}  // namespace slim
