#include "slim/mcppo.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace slim {

Eigen::VectorXd mc_returns(const Eigen::Ref<const Eigen::VectorXd>& rewards, double gamma) {
  Eigen::VectorXd g(rewards.size());
  double acc = 0.0;
  for (Eigen::Index t = rewards.size(); t-- > 0;) {
    acc = rewards[t] + gamma * acc;
    g[t] = acc;
  }
  return g;
}

Eigen::VectorXd gae(const Eigen::Ref<const Eigen::VectorXd>& rewards,
                    const Eigen::Ref<const Eigen::VectorXd>& values, double gamma, double lam) {
  if (values.size() != rewards.size() + 1)
    throw std::invalid_argument("gae: values must have one more entry than rewards");
  Eigen::VectorXd adv(rewards.size());
  double acc = 0.0;
  for (Eigen::Index t = rewards.size(); t-- > 0;) {
    const double delta = rewards[t] + gamma * values[t + 1] - values[t];
    acc = delta + gamma * lam * acc;
    adv[t] = acc;
  }
  return adv;
}

Eigen::VectorXd normalize_advantages(const Eigen::Ref<const Eigen::VectorXd>& a) {
  if (a.size() == 0) throw std::invalid_argument("normalize_advantages: empty input");
  const double mean = a.mean();
  const Eigen::ArrayXd centered = a.array() - mean;
  const double std = std::sqrt(centered.square().mean());
  if (std == 0.0 || (centered == 0.0).all()) return Eigen::VectorXd::Zero(a.size());
  return centered / std::max(std, 1e-8);
}

const char* channel_name(Channel c) {
  switch (c) {
    case Channel::reach: return "reach";
    case Channel::discovery: return "discovery";
    case Channel::safety: return "safety";
  }
  return "?";
}

double CombinationWeights::weight(Channel c) const {
  auto it = omega.find(c);
  return it == omega.end() ? 0.0 : it->second;
}

void CombinationWeights::validate() const {
  bool positive = false;
  for (const auto& [c, w] : omega) {
    if (!(w >= 0.0)) throw std::invalid_argument("combination weights must be nonnegative");
    positive = positive || w > 0.0;
  }
  if (!positive) throw std::invalid_argument("combination weights need one positive entry");
}

Eigen::VectorXd combine_advantages(const std::map<Channel, Eigen::VectorXd>& advantages,
                                   const CombinationWeights& w) {
  if (advantages.empty()) throw std::invalid_argument("combine_advantages: no channels");
  const Eigen::Index n = advantages.begin()->second.size();
  Eigen::VectorXd out = Eigen::VectorXd::Zero(n);
  for (const auto& [c, a] : advantages) {
    if (a.size() != n) throw std::invalid_argument("combine_advantages: shape mismatch");
    out += w.weight(c) * a;
  }
  return out;
}

bool AlgoVariant::uses(Channel c) const {
  return std::find(channels.begin(), channels.end(), c) != channels.end();
}

int AlgoVariant::critic_count() const {
  return critic_mode == CriticMode::single_sum ? 1 : static_cast<int>(channels.size());
}

const std::vector<std::string>& AlgoVariant::tags() {
  static const std::vector<std::string> t{"slim",      "slim_ur",      "slim_nr",   "no_reach",
                                          "no_discovery", "no_safety", "lsd",       "diayn"};
  return t;
}

AlgoVariant AlgoVariant::from_tag(const std::string& tag) {
  using enum Channel;
  AlgoVariant v;
  v.tag = tag;
  if (tag == "slim") {
    v.channels = {reach, discovery, safety};
  } else if (tag == "slim_ur") {
    v.channels = {reach, discovery, safety};
    v.critic_mode = CriticMode::single_sum;
  } else if (tag == "slim_nr") {
    v.channels = {reach, discovery, safety};
    v.critic_mode = CriticMode::single_sum;
    v.reward_norm = RewardNorm::standardize;
  } else if (tag == "no_reach") {
    v.channels = {discovery, safety};
  } else if (tag == "no_discovery") {
    v.channels = {reach, safety};
  } else if (tag == "no_safety") {
    v.channels = {reach, discovery};
  } else if (tag == "lsd") {
    v.channels = {discovery};
    v.critic_mode = CriticMode::single_sum;
  } else if (tag == "diayn") {
    v.channels = {discovery};
    v.critic_mode = CriticMode::single_sum;
    v.discovery = DiscoverySource::diayn;
  } else {
    throw std::invalid_argument("unknown algorithm variant '" + tag + "'");
  }
  return v;
}

Critic::Critic(int input_dim, const std::vector<int>& hidden, double lr, std::mt19937_64& rng) {
  std::vector<int> sizes{input_dim};
  sizes.insert(sizes.end(), hidden.begin(), hidden.end());
  sizes.push_back(1);
  net_ = Network(sizes, Activation::tanh, false, rng, 1.0);
  opt_ = Adam(net_.parameter_count(), lr);
}

Eigen::RowVectorXd Critic::value(const Eigen::MatrixXd& inputs) const {
  return (scale_ * net_.forward(inputs).row(0)).array() + shift_;
}

void Critic::update_target_stats(const Eigen::Ref<const Eigen::VectorXd>& targets) {
  if (targets.size() == 0) return;
  const double mean = targets.mean();
  const double std = std::sqrt((targets.array() - mean).square().mean());
  const double new_scale = std::max(std, 1e-2);
  auto& last = net_.layers().back();
  last.weight *= scale_ / new_scale;
  last.bias = ((scale_ * last.bias).array() + shift_ - mean) / new_scale;
  shift_ = mean;
  scale_ = new_scale;
}

GradientSet Critic::loss_gradient(const Eigen::MatrixXd& inputs,
                                  const Eigen::Ref<const Eigen::VectorXd>& targets,
                                  double* loss) const {
  if (targets.size() != inputs.cols()) throw std::invalid_argument("critic: target size mismatch");
  const double n = static_cast<double>(inputs.cols());
  Network::Cache cache;
  const Eigen::MatrixXd y = net_.forward(inputs, cache);
  const Eigen::RowVectorXd err =
      y.row(0) - ((targets.array() - shift_) / scale_).matrix().transpose();
  if (loss) *loss = 0.5 * err.squaredNorm() / n;
  return net_.backward(cache, err / n);
}

double Critic::regress(const Eigen::MatrixXd& inputs,
                       const Eigen::Ref<const Eigen::VectorXd>& targets) {
  double loss = 0.0;
  const GradientSet g = loss_gradient(inputs, targets, &loss);
  Eigen::VectorXd grad = g.flatten();
  clip_grad_norm(grad, 1.0);
  Eigen::VectorXd p = net_.flat_params();
  opt_.step(p, grad);
  net_.set_flat_params(p);
  return loss * scale_ * scale_;
}

std::map<std::string, double> critic_update(CriticEnsemble& ens, const Eigen::MatrixXd& inputs,
                                            const std::map<std::string, Eigen::VectorXd>& targets) {
  if (targets.size() != ens.critics.size())
    throw std::invalid_argument("critic_update: target channels do not match the ensemble");
  std::map<std::string, double> losses;
  for (auto& [name, critic] : ens.critics) {
    auto it = targets.find(name);
    if (it == targets.end()) throw std::invalid_argument("critic_update: missing targets for " + name);
    losses[name] = critic.regress(inputs, it->second);
  }
  return losses;
}

Transition RolloutBatch::transition(Eigen::Index i) const {
  Transition tr;
  tr.obs = obs.col(i);
  tr.z = z.col(i);
  tr.raw = raw.col(i);
  tr.action.delta = raw.col(i).head(4).array().tanh();
  tr.action.gripper = raw(4, i) > 0.5;
  tr.log_prob = log_prob[i];
  tr.rewards = {rewards(0, i), rewards(1, i), rewards(2, i)};
  tr.safe = safe[i] > 0.5;
  tr.next_obs = next_obs.col(i);
  tr.done = done[i] > 0.5;
  return tr;
}

Eigen::MatrixXd RolloutBatch::policy_inputs() const {
  Eigen::MatrixXd x(obs.rows() + z.rows(), obs.cols());
  x << obs, z;
  return x;
}

void recompute_discovery(RolloutBatch& batch, const DiscoveryModel& model) {
  if (model.source == DiscoverySource::lsd) {
    if (!model.repr) throw std::invalid_argument("recompute_discovery: missing representation");
    batch.rewards.row(1) = phi_discovery_rewards(*model.repr, batch.obs, batch.next_obs, batch.z);
  } else {
    if (!model.disc) throw std::invalid_argument("recompute_discovery: missing discriminator");
    batch.rewards.row(1) = diayn_rewards(*model.disc, batch.next_obs, batch.z);
  }
}

RolloutBatch collect_rollouts(const Policy& policy, const DiscoveryModel& model,
                              const RolloutSpec& spec, std::mt19937_64& rng) {
  const int n_eps = static_cast<int>(spec.reset_seeds.size());
  if (n_eps == 0) throw std::invalid_argument("collect_rollouts: empty environment pool");
  if (spec.schedules.size() != spec.reset_seeds.size())
    throw std::invalid_argument("collect_rollouts: one schedule per episode required");
  const int T = spec.env.episode_len;
  const int d = static_cast<int>(spec.schedules.front().segments.front().z.size());
  for (const auto& s : spec.schedules)
    if (s.horizon() != T) throw std::invalid_argument("collect_rollouts: schedule horizon != T");

  RolloutBatch b;
  b.n_episodes = n_eps;
  b.horizon = T;
  const Eigen::Index n = static_cast<Eigen::Index>(n_eps) * T;
  b.obs.resize(kObsDim, n);
  b.next_obs.resize(kObsDim, n);
  b.z.resize(d, n);
  b.raw.resize(policy.raw_dim(), n);
  b.log_prob.resize(n);
  b.rewards.resize(3, n);
  b.safe.resize(n);
  b.done.resize(n);
  b.obj_pos.resize(3, n);
  b.ee_pos.resize(3, n);
  b.obj_yaw.resize(n);
  b.segment.resize(n);

  std::vector<State> states;
  states.reserve(n_eps);
  for (auto seed : spec.reset_seeds) states.push_back(reset(seed, spec.env));

  Eigen::MatrixXd inputs(kObsDim + d, n_eps);
  for (int t = 0; t < T; ++t) {
    for (int e = 0; e < n_eps; ++e) {
      inputs.col(e).head(kObsDim) = observe(states[e]);
      inputs.col(e).tail(d) = spec.schedules[e].skill_at(t);
    }
    std::vector<PolicySample> samples;
    if (spec.deterministic) {
      const Policy::Batch pb = policy.evaluate(inputs);
      samples.resize(n_eps);
      for (int e = 0; e < n_eps; ++e) {
        samples[e].raw = Eigen::VectorXd(policy.raw_dim());
        samples[e].raw.head(4) = pb.mean.col(e);
        samples[e].raw[4] = pb.logit[e] > 0.0 ? 1.0 : 0.0;
        samples[e].action.delta = pb.mean.col(e).array().tanh();
        samples[e].action.gripper = pb.logit[e] > 0.0;
      }
    } else {
      samples = policy.sample(inputs, rng);
    }
    for (int e = 0; e < n_eps; ++e) {
      const Eigen::Index i = static_cast<Eigen::Index>(e) * T + t;
      const State next = step(states[e], samples[e].action, spec.env);
      const bool safe = is_safe(next, spec.env);
      b.obs.col(i) = inputs.col(e).head(kObsDim);
      b.z.col(i) = inputs.col(e).tail(d);
      b.raw.col(i) = samples[e].raw;
      b.log_prob[i] = samples[e].log_prob;
      b.next_obs.col(i) = observe(next);
      b.rewards(0, i) = reach_reward(next.ee_pos, next.obj_pos, spec.reward.epsilon);
      b.rewards(1, i) = 0.0;
      b.rewards(2, i) = safety_reward(safe);
      b.safe[i] = safe ? 1.0 : 0.0;
      b.done[i] = t + 1 == T ? 1.0 : 0.0;
      b.obj_pos.col(i) = next.obj_pos;
      b.ee_pos.col(i) = next.ee_pos;
      b.obj_yaw[i] = next.obj_yaw;
      b.segment[i] = spec.schedules[e].segment_index(t);
      states[e] = next;
    }
  }
  if (model.repr || model.disc) recompute_discovery(b, model);
  return b;
}

std::vector<std::vector<Eigen::Index>> minibatches(Eigen::Index n, int n_minibatches,
                                                   std::mt19937_64& rng) {
  std::vector<Eigen::Index> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  // Fisher-Yates with an explicit draw so the order is library independent.
  for (Eigen::Index i = n - 1; i > 0; --i) {
    const auto j = static_cast<Eigen::Index>(rng() % static_cast<std::uint64_t>(i + 1));
    std::swap(idx[i], idx[j]);
  }
  const int m = std::max(1, std::min<int>(n_minibatches, static_cast<int>(n)));
  std::vector<std::vector<Eigen::Index>> out(m);
  for (Eigen::Index k = 0; k < n; ++k) out[k % m].push_back(idx[k]);
  return out;
}

Eigen::MatrixXd gather_cols(const Eigen::MatrixXd& m, const std::vector<Eigen::Index>& idx) {
  Eigen::MatrixXd out(m.rows(), static_cast<Eigen::Index>(idx.size()));
  for (std::size_t k = 0; k < idx.size(); ++k) out.col(static_cast<Eigen::Index>(k)) = m.col(idx[k]);
  return out;
}

Eigen::VectorXd gather(const Eigen::VectorXd& v, const std::vector<Eigen::Index>& idx) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(idx.size()));
  for (std::size_t k = 0; k < idx.size(); ++k) out[static_cast<Eigen::Index>(k)] = v[idx[k]];
  return out;
}

SurrogateGrad surrogate_gradient(const Policy& policy, const Eigen::MatrixXd& inputs,
                                 const Eigen::MatrixXd& raw, const Eigen::VectorXd& old_log_prob,
                                 const Eigen::VectorXd& advantages, double clip_eps,
                                 double ent_coef) {
  const Eigen::Index m = inputs.cols();
  const Policy::Batch b = policy.evaluate(inputs);
  const Eigen::VectorXd lp = policy.log_prob(b, raw);
  Eigen::VectorXd w(m);
  SurrogateGrad out;
  for (Eigen::Index i = 0; i < m; ++i) {
    const double log_ratio = lp[i] - old_log_prob[i];
    const double rho = std::exp(log_ratio);
    if (!std::isfinite(rho)) throw NumericalError("ppo: non-finite probability ratio");
    const double a = advantages[i];
    const double clipped = std::clamp(rho, 1.0 - clip_eps, 1.0 + clip_eps);
    const double unclipped_obj = rho * a, clipped_obj = clipped * a;
    out.surrogate += std::min(unclipped_obj, clipped_obj) / m;
    // The gradient flows only through the unclipped branch when it is the minimum.
    const bool active = unclipped_obj <= clipped_obj;
    w[i] = active ? rho * a / m : 0.0;
    if (clipped != rho) out.clip_fraction += 1.0 / m;
    out.approx_kl += ((rho - 1.0) - log_ratio) / m;
  }
  // Ascent on the surrogate = descent on its negation.
  out.grad = -policy.log_prob_gradient(b, raw, w, ent_coef);
  return out;
}

PpoStats ppo_update(Policy& policy, Adam& opt, const Eigen::MatrixXd& inputs,
                    const Eigen::MatrixXd& raw, const Eigen::VectorXd& old_log_prob,
                    const Eigen::VectorXd& advantages, const PpoConfig& cfg, std::mt19937_64& rng) {
  if (!advantages.allFinite()) throw NumericalError("ppo: non-finite advantages");
  PpoStats stats;
  int count = 0;
  for (int epoch = 0; epoch < cfg.n_epochs; ++epoch) {
    for (const auto& idx : minibatches(inputs.cols(), cfg.n_minibatches, rng)) {
      SurrogateGrad g = surrogate_gradient(policy, gather_cols(inputs, idx), gather_cols(raw, idx),
                                           gather(old_log_prob, idx), gather(advantages, idx),
                                           cfg.clip_eps, cfg.ent_coef);
      if (!g.grad.allFinite()) throw NumericalError("ppo: non-finite policy gradient");
      clip_grad_norm(g.grad, cfg.max_grad_norm);
      Eigen::VectorXd p = policy.flat_params();
      opt.step(p, g.grad);
      policy.set_flat_params(p);
      stats.surrogate += g.surrogate;
      stats.clip_fraction += g.clip_fraction;
      stats.approx_kl += g.approx_kl;
      ++count;
    }
  }
  if (count > 0) {
    stats.surrogate /= count;
    stats.clip_fraction /= count;
    stats.approx_kl /= count;
  }
  return stats;
}

}  // namespace slim
