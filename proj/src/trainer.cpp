#include "slim/trainer.hpp"

#include "slim/metrics.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace slim {

namespace {

Channel channel_from_name(const std::string& n) {
  for (Channel c : kAllChannels)
    if (n == channel_name(c)) return c;
  throw std::invalid_argument("unknown channel '" + n + "'");
}

CombinationWeights weights_from_config(const TrainConfig& t) {
  CombinationWeights w;
  for (const auto& [name, value] : t.omega) w.omega[channel_from_name(name)] = value;
  w.validate();
  return w;
}

std::vector<std::string> critic_names(const AlgoVariant& v) {
  if (v.critic_mode == CriticMode::single_sum) return {"sum"};
  std::vector<std::string> names;
  for (Channel c : v.channels) names.emplace_back(channel_name(c));
  return names;
}

}  // namespace

DiscoveryModel SkillAgent::discovery_model() const {
  DiscoveryModel m;
  m.source = variant.discovery;
  m.repr = repr ? &*repr : nullptr;
  m.disc = disc ? &*disc : nullptr;
  return m;
}

SkillAgent make_agent(const ExperimentConfig& cfg, const AlgoVariant& variant) {
  cfg.validate();
  SkillAgent a;
  a.config = cfg;
  a.config.train.variant = variant.tag;
  a.variant = variant;
  const auto& t = cfg.train;
  Rng rng(derive_seed(t.seed, kStreamInit));
  const int in = kObsDim + cfg.skill.dim;
  a.policy = Policy(in, 4, PolicyHead::squashed_gripper, t.policy_hidden, t.init_log_std, rng);
  a.policy_opt = Adam(a.policy.parameter_count(), t.policy_lr);
  for (const auto& name : critic_names(variant))
    a.critics.critics.emplace(name, Critic(in, t.critic_hidden, t.critic_lr, rng));
  // The representation exists for every variant so evaluation can report the
  // discovery channel; it is trained only when the variant uses it.
  const std::vector<int> rows = discovery_rows(discovery_input_from_string(t.discovery_input));
  a.repr.emplace(kObsDim, cfg.skill.dim, t.phi_hidden, rng, rows);
  a.repr_opt = Adam(a.repr->net().parameter_count(), t.phi_lr);
  if (variant.discovery == DiscoverySource::diayn) {
    a.disc.emplace(kObsDim, cfg.skill.dim, t.phi_hidden, rng, rows);
    a.disc_opt = Adam(a.disc->net().parameter_count(), t.disc_lr);
  }
  return a;
}

Checkpoint agent_checkpoint(const SkillAgent& agent, std::int64_t iteration) {
  Checkpoint ck;
  ck.kind = "skill";
  ck.step = iteration;
  ck.config = to_json(agent.config);
  put_policy(ck, "policy", agent.policy);
  for (const auto& [name, critic] : agent.critics.critics) {
    put_network(ck, "critic/" + name, critic.net());
    ck.attrs["critic/" + name]["shift"] = critic.shift();
    ck.attrs["critic/" + name]["scale"] = critic.scale();
  }
  if (agent.repr) put_network(ck, "phi", agent.repr->net());
  if (agent.disc) put_network(ck, "disc", agent.disc->net());
  ck.attrs["variant"] = agent.variant.tag;
  return ck;
}

SkillAgent agent_from_checkpoint(const Checkpoint& ck) {
  if (ck.kind != "skill") throw CheckpointError("checkpoint: expected a skill checkpoint, got '" + ck.kind + "'");
  ExperimentConfig cfg;
  AlgoVariant variant;
  try {
    cfg = config_from_json(ck.config);
    variant = AlgoVariant::from_tag(ck.attrs.at("variant").get<std::string>());
  } catch (const std::exception& e) {
    throw CheckpointError(std::string("checkpoint: ") + e.what());
  }
  SkillAgent a = make_agent(cfg, variant);
  a.policy = get_policy(ck, "policy");
  if (a.policy.input_dim() != a.input_dim())
    throw CheckpointError("checkpoint: policy input does not match the skill dimension");
  for (auto& [name, critic] : a.critics.critics) {
    critic.net() = get_network(ck, "critic/" + name);
    const auto& info = ck.attrs.at("critic/" + name);
    critic.set_output_map(info.at("shift").get<double>(), info.at("scale").get<double>());
  }
  const std::vector<int> rows = discovery_rows(discovery_input_from_string(cfg.train.discovery_input));
  if (ck.attrs.contains("phi")) a.repr = ReprNet(get_network(ck, "phi"), rows);
  if (ck.attrs.contains("disc")) a.disc = Discriminator(get_network(ck, "disc"), rows);
  if (a.repr && a.repr->skill_dim() != a.skill_dim())
    throw CheckpointError("checkpoint: representation dimension does not match the skill dimension");
  return a;
}

nlohmann::json IterationMetrics::to_json() const {
  return {{"iteration", iteration},
          {"env_steps", env_steps},
          {"return_reach", return_reach},
          {"return_discovery", return_discovery},
          {"return_safety", return_safety},
          {"safety_rate", safety_rate},
          {"coverage_proxy", coverage_proxy},
          {"phi_loss", phi_loss},
          {"disc_alignment", disc_alignment},
          {"clip_fraction", clip_fraction},
          {"approx_kl", approx_kl}};
}

std::array<double, 3> mean_episode_returns(const RolloutBatch& b) {
  std::array<double, 3> r{};
  for (int c = 0; c < 3; ++c) r[c] = b.rewards.row(c).sum() / std::max(1, b.n_episodes);
  return r;
}

Eigen::VectorXd standardize_rewards(const Eigen::Ref<const Eigen::VectorXd>& r) {
  const double mean = r.mean();
  const double std = std::sqrt((r.array() - mean).square().mean());
  if (std < 1e-12) return Eigen::VectorXd::Zero(r.size());
  return (r.array() - mean) / std;
}

std::map<std::string, Eigen::VectorXd> critic_rewards(const AlgoVariant& v, const RolloutBatch& b) {
  std::map<std::string, Eigen::VectorXd> out;
  if (v.critic_mode == CriticMode::per_channel) {
    for (Channel c : v.channels) out[channel_name(c)] = b.rewards.row(static_cast<int>(c)).transpose();
    return out;
  }
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(b.size());
  for (Channel c : v.channels) {
    const Eigen::VectorXd r = b.rewards.row(static_cast<int>(c)).transpose();
    sum += v.reward_norm == RewardNorm::standardize ? standardize_rewards(r) : r;
  }
  out["sum"] = std::move(sum);
  return out;
}

IterationMetrics train_iteration(SkillAgent& agent, int iteration) {
  const auto& cfg = agent.config;
  const auto& t = cfg.train;
  const int T = cfg.env.episode_len;
  const auto iter = static_cast<std::uint64_t>(iteration);
  IterationMetrics m;
  m.iteration = iteration;

  // Skill sequences and environment seeds for this iteration.
  RolloutSpec spec;
  spec.env = cfg.env;
  spec.reward = cfg.reward;
  Rng skill_rng(derive_seed(t.seed, kStreamSkill, iter));
  for (int e = 0; e < t.n_envs; ++e) {
    spec.reset_seeds.push_back(derive_seed(t.seed, kStreamReset, iter * 100003ULL + e));
    spec.schedules.push_back(make_schedule(skill_rng, T, cfg.skill.n_segments, cfg.skill.prior()));
  }
  Rng act_rng(derive_seed(t.seed, kStreamAct, iter));
  Rng update_rng(derive_seed(t.seed, kStreamUpdate, iter));

  RolloutBatch batch = collect_rollouts(agent.policy, agent.discovery_model(), spec, act_rng);
  const Eigen::MatrixXd inputs = batch.policy_inputs();

  // Representation / discriminator update, then refresh the discovery channel.
  if (agent.variant.uses(Channel::discovery)) {
    const Eigen::Index n = batch.size();
    const int bs = static_cast<int>(std::min<Eigen::Index>(t.phi_batch, n));
    for (int k = 0; k < t.phi_steps; ++k) {
      std::vector<Eigen::Index> idx(bs);
      for (auto& i : idx) i = static_cast<Eigen::Index>(update_rng() % static_cast<std::uint64_t>(n));
      if (agent.variant.discovery == DiscoverySource::lsd) {
        m.phi_loss = phi_update(*agent.repr, agent.repr_opt, gather_cols(batch.obs, idx),
                                gather_cols(batch.next_obs, idx), gather_cols(batch.z, idx));
      } else {
        m.disc_alignment = diayn_disc_update(*agent.disc, agent.disc_opt,
                                             gather_cols(batch.next_obs, idx), gather_cols(batch.z, idx));
      }
    }
    recompute_discovery(batch, agent.discovery_model());
  }

  // Per-critic Monte Carlo targets, value fits, then GAE with the fitted critics.
  const auto rewards = critic_rewards(agent.variant, batch);
  std::map<std::string, Eigen::VectorXd> returns;
  for (const auto& [name, r] : rewards) {
    Eigen::VectorXd g(batch.size());
    for (int e = 0; e < batch.n_episodes; ++e)
      g.segment(static_cast<Eigen::Index>(e) * T, T) = mc_returns(batch.episode(r, e), t.gamma);
    returns[name] = std::move(g);
  }
  for (auto& [name, critic] : agent.critics.critics) critic.update_target_stats(returns.at(name));
  for (int epoch = 0; epoch < t.critic_epochs; ++epoch) {
    for (const auto& idx : minibatches(batch.size(), t.n_minibatches, update_rng)) {
      const Eigen::MatrixXd x = gather_cols(inputs, idx);
      std::map<std::string, Eigen::VectorXd> targets;
      for (const auto& [name, g] : returns) targets[name] = gather(g, idx);
      critic_update(agent.critics, x, targets);
    }
  }

  std::map<Channel, Eigen::VectorXd> normalized;
  for (const auto& [name, critic] : agent.critics.critics) {
    const Eigen::RowVectorXd v = critic.value(inputs);
    Eigen::VectorXd adv(batch.size());
    Eigen::VectorXd values(T + 1);
    for (int e = 0; e < batch.n_episodes; ++e) {
      const Eigen::Index off = static_cast<Eigen::Index>(e) * T;
      values.head(T) = v.segment(off, T).transpose();
      values[T] = 0.0;  // time-limit terminal
      adv.segment(off, T) = gae(batch.episode(rewards.at(name), e), values, t.gamma, t.lam);
    }
    batch.values[name] = v.transpose();
    batch.returns[name] = returns.at(name);
    batch.advantages[name] = adv;
    const Channel key = name == "sum" ? Channel::discovery : channel_from_name(name);
    normalized[key] = normalize_advantages(adv);
  }
  CombinationWeights omega = weights_from_config(t);
  if (agent.variant.critic_mode == CriticMode::single_sum)
    omega.omega = {{Channel::discovery, 1.0}};
  const Eigen::VectorXd combined = combine_advantages(normalized, omega);

  PpoConfig ppo;
  ppo.clip_eps = t.clip;
  ppo.n_epochs = t.ppo_epochs;
  ppo.n_minibatches = t.n_minibatches;
  ppo.ent_coef = t.ent_coef;
  ppo.max_grad_norm = t.max_grad_norm;
  const PpoStats stats = ppo_update(agent.policy, agent.policy_opt, inputs, batch.raw,
                                    batch.log_prob, combined, ppo, update_rng);

  const auto rets = mean_episode_returns(batch);
  m.env_steps = static_cast<long long>(iteration + 1) * t.n_envs * T;
  m.return_reach = rets[0];
  m.return_discovery = rets[1];
  m.return_safety = rets[2];
  m.safety_rate = batch.safe.mean();
  CoverageGrid grid = CoverageGrid::standard();
  for (Eigen::Index i = 0; i < batch.size(); ++i) grid.visit(batch.obj_pos.col(i));
  m.coverage_proxy = grid.count();
  m.clip_fraction = stats.clip_fraction;
  m.approx_kl = stats.approx_kl;
  for (double x : {m.return_reach, m.return_discovery, m.return_safety, m.phi_loss, stats.surrogate})
    if (!std::isfinite(x))
      throw NumericalError("train: non-finite metric at iteration " + std::to_string(iteration));
  if (!agent.policy.flat_params().allFinite())
    throw NumericalError("train: non-finite policy parameters at iteration " + std::to_string(iteration));
  return m;
}

TrainResult train(const AlgoVariant& variant, const ExperimentConfig& cfg,
                  const std::filesystem::path& out_dir, const ProgressFn& progress) {
  std::filesystem::create_directories(out_dir);
  SkillAgent agent = make_agent(cfg, variant);
  save_config(agent.config, out_dir / "config.json");

  TrainResult res;
  res.metrics_log = out_dir / "metrics.jsonl";
  std::ofstream log(res.metrics_log, std::ios::trunc);
  if (!log) throw std::runtime_error("train: cannot write " + res.metrics_log.string());

  const auto start = std::chrono::steady_clock::now();
  for (int it = 0; it < cfg.train.n_iterations; ++it) {
    IterationMetrics m = train_iteration(agent, it);
    m.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    log << m.to_json().dump() << '\n' << std::flush;
    res.log.push_back(m);
    if (progress) progress(m);
    const int interval = cfg.train.checkpoint_interval;
    if (interval > 0 && (it + 1) % interval == 0 && it + 1 < cfg.train.n_iterations) {
      std::ostringstream name;
      name << "ckpt_" << std::setw(5) << std::setfill('0') << (it + 1) << ".ckpt";
      agent_checkpoint(agent, it + 1).save(out_dir / name.str());
    }
  }
  res.checkpoint = out_dir / "final.ckpt";
  agent_checkpoint(agent, cfg.train.n_iterations).save(res.checkpoint);
  return res;
}

}  // namespace slim
