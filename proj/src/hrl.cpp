#include "slim/hrl.hpp"

#include "slim/mcppo.hpp"
#include "slim/trainer.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>

namespace slim {

namespace {

constexpr double kYawGoalMinError = 0.5;

Eigen::VectorXd stack(const Observation& obs, const Eigen::VectorXd& tail) {
  Eigen::VectorXd x(obs.size() + tail.size());
  x << obs, tail;
  return x;
}

void record_state(EpisodeRecord& rec, const State& s, const Goal& g, const EnvConfig& env) {
  rec.states.push_back(s);
  rec.errors.push_back(goal_error(s, g));
  rec.safe.push_back(is_safe(s, env));
  if (!rec.success && rec.errors.back() < g.threshold) {
    rec.success = true;
    rec.first_success = static_cast<int>(rec.states.size()) - 1;
  }
}

}  // namespace

GoalKind goal_kind_from_string(const std::string& s) {
  if (s == "pos" || s == "position") return GoalKind::position;
  if (s == "yaw") return GoalKind::yaw;
  throw std::invalid_argument("unknown task '" + s + "' (expected pos or yaw)");
}

const char* goal_kind_name(GoalKind k) { return k == GoalKind::position ? "pos" : "yaw"; }

Eigen::VectorXd encode_goal(const State& s, const Goal& g) {
  Eigen::VectorXd e = Eigen::VectorXd::Zero(kGoalEncDim);
  if (g.kind == GoalKind::position) {
    e[0] = 1.0;
    e.segment<3>(2) = g.target_pos - s.obj_pos;
    e[6] = 1.0;
  } else {
    e[1] = 1.0;
    const double err = wrap_angle(g.target_yaw - s.obj_yaw);
    e[5] = std::sin(err);
    e[6] = std::cos(err);
  }
  return e;
}

double goal_error(const State& s, const Goal& g) {
  if (g.kind == GoalKind::position) return (s.obj_pos - g.target_pos).norm();
  return std::abs(wrap_angle(s.obj_yaw - g.target_yaw));
}

bool goal_reached(const State& s, const Goal& g) { return goal_error(s, g) < g.threshold; }

double task_reward(const State& s, const Goal& g, double bonus) {
  const double err = goal_error(s, g);
  return -err + (err < g.threshold ? bonus : 0.0);
}

SkillVector HighLevelPolicy::project(const Eigen::VectorXd& raw) {
  const double n = raw.norm();
  if (n < 1e-12) return Eigen::VectorXd::Unit(raw.size(), 0);
  return raw / n;
}

HighLevelPolicy make_high_level(int skill_dim, const HrlConfig& cfg, Rng& rng) {
  HighLevelPolicy h;
  h.policy = Policy(kObsDim + kGoalEncDim, skill_dim, PolicyHead::gaussian, cfg.hidden,
                    cfg.init_log_std, rng);
  h.interval = cfg.decision_interval;
  return h;
}

EpisodeRecord hrl_rollout(const HighLevelPolicy& high, const Policy& low, const EnvConfig& env,
                          const State& start, const Goal& goal, Rng& rng,
                          const RolloutOptions& opt) {
  EpisodeRecord rec;
  State s = start;
  record_state(rec, s, goal, env);
  if (rec.success && opt.stop_on_success) return rec;
  int steps = 0;
  while (steps < opt.max_steps && s.t < env.episode_len) {
    Decision dec;
    dec.input = stack(observe(s), encode_goal(s, goal));
    if (opt.deterministic) {
      dec.raw = high.policy.output(dec.input).mean;
    } else {
      PolicySample ps = high.policy.sample(Eigen::MatrixXd(dec.input), rng).front();
      dec.raw = ps.raw;
      dec.log_prob = ps.log_prob;
    }
    const SkillVector z = HighLevelPolicy::project(dec.raw);
    rec.skills.push_back(z);
    for (int k = 0; k < high.interval && steps < opt.max_steps && s.t < env.episode_len; ++k) {
      s = step(s, low.deterministic_action(stack(observe(s), z)), env);
      ++steps;
      record_state(rec, s, goal, env);
      dec.reward += task_reward(s, goal, opt.bonus);
      if (opt.stop_on_success && rec.success) break;
    }
    rec.decisions.push_back(std::move(dec));
    if (opt.stop_on_success && rec.success) break;
  }
  return rec;
}

EpisodeRecord flat_rollout(const Policy& flat, const EnvConfig& env, const State& start,
                           const Goal& goal, Rng& rng, const RolloutOptions& opt) {
  EpisodeRecord rec;
  State s = start;
  record_state(rec, s, goal, env);
  if (rec.success && opt.stop_on_success) return rec;
  for (int steps = 0; steps < opt.max_steps && s.t < env.episode_len; ++steps) {
    Decision dec;
    dec.input = stack(observe(s), encode_goal(s, goal));
    Action a;
    if (opt.deterministic) {
      a = flat.deterministic_action(dec.input);
    } else {
      PolicySample ps = flat.sample(Eigen::MatrixXd(dec.input), rng).front();
      a = ps.action;
      dec.raw = ps.raw;
      dec.log_prob = ps.log_prob;
    }
    s = step(s, a, env);
    record_state(rec, s, goal, env);
    dec.reward = task_reward(s, goal, opt.bonus);
    rec.decisions.push_back(std::move(dec));
    if (opt.stop_on_success && rec.success) break;
  }
  return rec;
}

Goal sample_goal(GoalKind kind, const State& start, const HrlConfig& cfg, Rng& rng) {
  Goal g;
  g.kind = kind;
  if (kind == GoalKind::position) {
    g.threshold = cfg.pos_threshold;
    std::uniform_real_distribution<double> u(-cfg.goal_half_extent, cfg.goal_half_extent);
    do {
      g.target_pos = Vec3(u(rng), u(rng), start.obj_pos.z());
    } while ((g.target_pos - start.obj_pos).norm() < cfg.goal_min_distance);
  } else {
    g.threshold = cfg.yaw_threshold;
    std::uniform_real_distribution<double> u(-std::numbers::pi, std::numbers::pi);
    do {
      g.target_yaw = u(rng);
    } while (std::abs(wrap_angle(g.target_yaw - start.obj_yaw)) < kYawGoalMinError);
  }
  return g;
}

nlohmann::json CurvePoint::to_json() const {
  return {{"iteration", iteration},
          {"env_steps", env_steps},
          {"success_rate", success_rate},
          {"mean_return", mean_return}};
}

std::string hash_hex(std::uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

HrlResult hrl_train(const Checkpoint* skill_ckpt, const std::filesystem::path& skill_path,
                    GoalKind kind, HrlMode mode, const ExperimentConfig& cfg,
                    const std::filesystem::path& out_dir,
                    const std::function<void(const CurvePoint&)>& progress) {
  cfg.validate();
  const HrlConfig& h = cfg.hrl;
  const int T = cfg.env.episode_len;

  std::optional<SkillAgent> skills;
  if (mode == HrlMode::hierarchical) {
    if (!skill_ckpt) throw HrlError("hrl: hierarchical mode needs a skill checkpoint");
    skills = agent_from_checkpoint(*skill_ckpt);
    if (skills->skill_dim() != cfg.skill.dim)
      throw HrlError("hrl: skill checkpoint has dimension " + std::to_string(skills->skill_dim()) +
                     " but the config expects " + std::to_string(cfg.skill.dim));
  }

  Rng init_rng(derive_seed(h.seed, kStreamHrl, mode == HrlMode::scratch ? 1 : 0));
  HighLevelPolicy high;
  Policy flat;
  Policy* learner = nullptr;
  if (mode == HrlMode::hierarchical) {
    high = make_high_level(cfg.skill.dim, h, init_rng);
    learner = &high.policy;
  } else {
    flat = Policy(kObsDim + kGoalEncDim, 4, PolicyHead::squashed_gripper, h.hidden,
                  std::min(h.init_log_std, -0.5), init_rng);
    learner = &flat;
  }
  Critic critic(kObsDim + kGoalEncDim, h.hidden, h.lr * 3.0, init_rng);
  Adam opt(learner->parameter_count(), h.lr);

  PpoConfig ppo;
  ppo.clip_eps = cfg.train.clip;
  ppo.n_epochs = h.ppo_epochs;
  ppo.n_minibatches = h.n_minibatches;
  ppo.max_grad_norm = cfg.train.max_grad_norm;

  std::filesystem::create_directories(out_dir);
  const std::string stem = std::string(goal_kind_name(kind)) +
                           (mode == HrlMode::scratch ? "_scratch" : "_hrl");
  HrlResult res;
  res.curve_path = out_dir / ("curve_" + stem + ".jsonl");
  std::ofstream curve_log(res.curve_path, std::ios::trunc);
  if (!curve_log) throw std::runtime_error("hrl: cannot write " + res.curve_path.string());

  long long env_steps = 0;
  for (int it = 0; it < h.n_iterations; ++it) {
    const auto iter = static_cast<std::uint64_t>(it);
    Rng goal_rng(derive_seed(h.seed, kStreamGoal, iter));
    Rng act_rng(derive_seed(h.seed, kStreamAct, iter));
    Rng update_rng(derive_seed(h.seed, kStreamUpdate, iter));

    std::vector<EpisodeRecord> episodes;
    int successes = 0;
    double total_return = 0.0;
    RolloutOptions ro;
    ro.max_steps = T;
    ro.bonus = h.success_bonus;
    for (int e = 0; e < h.n_envs; ++e) {
      const State start = reset(derive_seed(h.seed, kStreamReset, iter * 100003ULL + e), cfg.env);
      const Goal goal = sample_goal(kind, start, h, goal_rng);
      EpisodeRecord rec = mode == HrlMode::hierarchical
                              ? hrl_rollout(high, skills->policy, cfg.env, start, goal, act_rng, ro)
                              : flat_rollout(flat, cfg.env, start, goal, act_rng, ro);
      env_steps += static_cast<long long>(rec.states.size()) - 1;
      successes += rec.success ? 1 : 0;
      for (const auto& d : rec.decisions) total_return += d.reward;
      episodes.push_back(std::move(rec));
    }

    // Flatten decisions; each episode is its own GAE segment.
    Eigen::Index n = 0;
    for (const auto& ep : episodes) n += static_cast<Eigen::Index>(ep.decisions.size());
    const int in_dim = learner->input_dim();
    Eigen::MatrixXd inputs(in_dim, n), raw(learner->raw_dim(), n);
    Eigen::VectorXd logp(n), returns(n);
    std::vector<std::pair<Eigen::Index, Eigen::Index>> spans;
    Eigen::Index k = 0;
    for (const auto& ep : episodes) {
      const auto len = static_cast<Eigen::Index>(ep.decisions.size());
      Eigen::VectorXd r(len);
      for (Eigen::Index j = 0; j < len; ++j) {
        const auto& d = ep.decisions[j];
        inputs.col(k + j) = d.input;
        raw.col(k + j) = d.raw;
        logp[k + j] = d.log_prob;
        r[j] = d.reward;
      }
      returns.segment(k, len) = mc_returns(r, h.gamma);
      spans.emplace_back(k, len);
      k += len;
    }
    critic.update_target_stats(returns);
    for (int epoch = 0; epoch < h.ppo_epochs; ++epoch)
      for (const auto& idx : minibatches(n, h.n_minibatches, update_rng))
        critic.regress(gather_cols(inputs, idx), gather(returns, idx));
    const Eigen::RowVectorXd v = critic.value(inputs);
    Eigen::VectorXd adv(n);
    std::size_t ep_index = 0;
    for (const auto& [off, len] : spans) {
      const auto& ep = episodes[ep_index++];
      Eigen::VectorXd r(len), values(len + 1);
      for (Eigen::Index j = 0; j < len; ++j) r[j] = ep.decisions[j].reward;
      values.head(len) = v.segment(off, len).transpose();
      values[len] = 0.0;
      adv.segment(off, len) = gae(r, values, h.gamma, h.lam);
    }
    ppo_update(*learner, opt, inputs, raw, logp, normalize_advantages(adv), ppo, update_rng);

    CurvePoint cp;
    cp.iteration = it;
    cp.env_steps = env_steps;
    cp.success_rate = static_cast<double>(successes) / h.n_envs;
    cp.mean_return = total_return / h.n_envs;
    if (!std::isfinite(cp.mean_return)) throw NumericalError("hrl: non-finite return");
    curve_log << cp.to_json().dump() << '\n' << std::flush;
    res.curve.push_back(cp);
    if (progress) progress(cp);
  }

  Checkpoint& ck = res.checkpoint;
  ck.kind = "hrl";
  ck.step = h.n_iterations;
  ck.config = to_json(cfg);
  ck.attrs["mode"] = mode == HrlMode::scratch ? "scratch" : "hierarchical";
  ck.attrs["task"] = goal_kind_name(kind);
  ck.attrs["decision_interval"] = h.decision_interval;
  put_policy(ck, "high", *learner);
  put_network(ck, "critic", critic.net());
  if (mode == HrlMode::hierarchical) {
    ck.attrs["low_level_hash"] = hash_hex(skill_ckpt->content_hash());
    ck.attrs["low_level_path"] = std::filesystem::absolute(skill_path).string();
  }
  res.checkpoint_path = out_dir / ("hrl_" + stem + ".ckpt");
  ck.save(res.checkpoint_path);
  return res;
}

HrlController load_controller(const Checkpoint& ck,
                              const std::optional<std::filesystem::path>& skill_override) {
  if (ck.kind != "hrl") throw CheckpointError("checkpoint: expected an hrl checkpoint, got '" + ck.kind + "'");
  if (ck.attrs.value("mode", std::string()) != "hierarchical")
    throw HrlError("hrl: waypoint following needs a hierarchical controller checkpoint");
  HrlController c;
  try {
    c.config = config_from_json(ck.config);
  } catch (const std::exception& e) {
    throw CheckpointError(std::string("checkpoint: ") + e.what());
  }
  c.kind = goal_kind_from_string(ck.attrs.at("task").get<std::string>());
  c.high.policy = get_policy(ck, "high");
  c.high.interval = ck.attrs.at("decision_interval").get<int>();
  const std::filesystem::path low_path =
      skill_override ? *skill_override
                     : std::filesystem::path(ck.attrs.at("low_level_path").get<std::string>());
  const Checkpoint low_ck = Checkpoint::load(low_path);
  if (hash_hex(low_ck.content_hash()) != ck.attrs.at("low_level_hash").get<std::string>())
    throw HrlError("hrl: low-level checkpoint " + low_path.string() +
                   " does not match the one this controller was trained on");
  const SkillAgent agent = agent_from_checkpoint(low_ck);
  if (agent.skill_dim() != c.high.policy.action_dim())
    throw HrlError("hrl: skill dimension mismatch between controller and low-level policy");
  c.low = agent.policy;
  return c;
}

}  // namespace slim
