#include "slim/config.hpp"

#include "slim/mcppo.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <set>

namespace slim {

using nlohmann::json;

SkillPrior SkillConfig::prior() const {
  SkillPrior p;
  p.dim = dim;
  p.kappa = kappa;
  if (!mu.empty()) p.mu = Eigen::Map<const Eigen::VectorXd>(mu.data(), static_cast<Eigen::Index>(mu.size()));
  return p;
}

namespace {

// Reads the keys of one JSON object and rejects whatever is left over.
class Section {
 public:
  Section(const json& j, std::string name) : j_(j), name_(std::move(name)) {
    if (!j_.is_object()) throw ConfigError("config: section '" + name_ + "' must be an object");
  }

  template <typename T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception& e) {
      throw ConfigError("config: " + name_ + "." + key + ": " + e.what());
    }
  }

  void get_vec3(const char* key, Vec3& out) {
    std::vector<double> v{out.x(), out.y(), out.z()};
    get(key, v);
    if (v.size() != 3) throw ConfigError("config: " + name_ + "." + key + " needs 3 entries");
    out = Vec3(v[0], v[1], v[2]);
  }

  const json* child(const char* key) {
    seen_.insert(key);
    return j_.contains(key) ? &j_.at(key) : nullptr;
  }

  void finish() const {
    for (const auto& [k, v] : j_.items())
      if (!seen_.count(k)) throw ConfigError("config: unknown key '" + name_ + "." + k + "'");
  }

 private:
  const json& j_;
  std::string name_;
  std::set<std::string> seen_;
};

void read_env(const json& j, EnvConfig& c) {
  Section s(j, "env");
  s.get("table_half_extent", c.table_half_extent);
  s.get("init_area_half", c.init_area_half);
  s.get("cube_side", c.cube_side);
  s.get_vec3("ee_home", c.ee_home);
  s.get("ee_home_yaw", c.ee_home_yaw);
  s.get("max_step_translation", c.max_step_translation);
  s.get("max_step_yaw", c.max_step_yaw);
  s.get("grasp_radius", c.grasp_radius);
  s.get("z_max", c.z_max);
  s.get("ee_vel_max", c.ee_vel_max);
  s.get("episode_len", c.episode_len);
  s.finish();
}

void read_skill(const json& j, SkillConfig& c) {
  Section s(j, "skill");
  s.get("dim", c.dim);
  s.get("kappa", c.kappa);
  s.get("mu", c.mu);
  s.get("n_segments", c.n_segments);
  s.finish();
}

void read_reward(const json& j, RewardConfig& c) {
  Section s(j, "reward");
  s.get("epsilon", c.epsilon);
  s.finish();
}

void read_train(const json& j, TrainConfig& c) {
  Section s(j, "train");
  s.get("variant", c.variant);
  s.get("seed", c.seed);
  s.get("n_iterations", c.n_iterations);
  s.get("n_envs", c.n_envs);
  s.get("gamma", c.gamma);
  s.get("lam", c.lam);
  s.get("clip", c.clip);
  s.get("policy_lr", c.policy_lr);
  s.get("critic_lr", c.critic_lr);
  s.get("phi_lr", c.phi_lr);
  s.get("disc_lr", c.disc_lr);
  s.get("ppo_epochs", c.ppo_epochs);
  s.get("n_minibatches", c.n_minibatches);
  s.get("critic_epochs", c.critic_epochs);
  s.get("phi_steps", c.phi_steps);
  s.get("phi_batch", c.phi_batch);
  s.get("ent_coef", c.ent_coef);
  s.get("max_grad_norm", c.max_grad_norm);
  s.get("init_log_std", c.init_log_std);
  s.get("policy_hidden", c.policy_hidden);
  s.get("critic_hidden", c.critic_hidden);
  s.get("phi_hidden", c.phi_hidden);
  s.get("discovery_input", c.discovery_input);
  s.get("omega", c.omega);
  s.get("checkpoint_interval", c.checkpoint_interval);
  s.finish();
}

void read_hrl(const json& j, HrlConfig& c) {
  Section s(j, "hrl");
  s.get("decision_interval", c.decision_interval);
  s.get("pos_threshold", c.pos_threshold);
  s.get("yaw_threshold", c.yaw_threshold);
  s.get("success_bonus", c.success_bonus);
  s.get("n_iterations", c.n_iterations);
  s.get("n_envs", c.n_envs);
  s.get("gamma", c.gamma);
  s.get("lam", c.lam);
  s.get("lr", c.lr);
  s.get("ppo_epochs", c.ppo_epochs);
  s.get("n_minibatches", c.n_minibatches);
  s.get("init_log_std", c.init_log_std);
  s.get("hidden", c.hidden);
  s.get("goal_min_distance", c.goal_min_distance);
  s.get("goal_half_extent", c.goal_half_extent);
  s.get("seed", c.seed);
  s.finish();
}

void read_eval(const json& j, EvalConfig& c) {
  Section s(j, "eval");
  s.get("n_rollouts", c.n_rollouts);
  s.get("n_seeds", c.n_seeds);
  s.get("export_skills", c.export_skills);
  s.get("seed", c.seed);
  s.get("deterministic", c.deterministic);
  s.finish();
}

void read_plan(const json& j, PlanConfig& c) {
  Section s(j, "plan");
  s.get("step_budget", c.step_budget);
  s.get("threshold", c.threshold);
  s.get("seed", c.seed);
  s.finish();
}

}  // namespace

void ExperimentConfig::validate() const {
  try {
    env.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  auto require = [](bool ok, const char* what) {
    if (!ok) throw ConfigError(std::string("config: ") + what);
  };
  require(skill.dim >= 2, "skill.dim must be >= 2");
  require(skill.kappa >= 0.0, "skill.kappa must be >= 0");
  require(skill.mu.empty() || static_cast<int>(skill.mu.size()) == skill.dim,
          "skill.mu must have skill.dim entries");
  require(skill.n_segments >= 1 && skill.n_segments <= env.episode_len,
          "skill.n_segments must lie in [1, episode_len]");
  require(reward.epsilon > 0.0, "reward.epsilon must be positive");
  const auto& tags = AlgoVariant::tags();
  require(std::find(tags.begin(), tags.end(), train.variant) != tags.end(),
          "train.variant must be one of slim, slim_ur, slim_nr, no_reach, no_discovery, "
          "no_safety, lsd, diayn");
  require(train.discovery_input == "full" || train.discovery_input == "object",
          "train.discovery_input must be full or object");
  require(train.n_iterations >= 1 && train.n_envs >= 1, "train sizes must be positive");
  require(train.gamma >= 0.0 && train.gamma <= 1.0, "train.gamma must lie in [0, 1]");
  require(train.lam >= 0.0 && train.lam <= 1.0, "train.lam must lie in [0, 1]");
  require(train.clip > 0.0, "train.clip must be positive");
  require(train.ppo_epochs >= 1 && train.n_minibatches >= 1 && train.critic_epochs >= 1,
          "train epoch counts must be positive");
  for (const auto& [k, w] : train.omega) {
    require(k == "reach" || k == "discovery" || k == "safety", "train.omega keys must be channels");
    require(w >= 0.0, "train.omega weights must be nonnegative");
  }
  require(hrl.decision_interval >= 1, "hrl.decision_interval must be positive");
  require(hrl.pos_threshold > 0.0 && hrl.yaw_threshold > 0.0, "hrl thresholds must be positive");
  require(eval.n_rollouts >= 1 && eval.n_seeds >= 1, "eval counts must be positive");
  require(plan.step_budget >= 1 && plan.threshold > 0.0, "plan budget and threshold must be positive");
}

json to_json(const ExperimentConfig& c) {
  json j;
  const auto& e = c.env;
  j["env"] = {{"table_half_extent", e.table_half_extent},
              {"init_area_half", e.init_area_half},
              {"cube_side", e.cube_side},
              {"ee_home", {e.ee_home.x(), e.ee_home.y(), e.ee_home.z()}},
              {"ee_home_yaw", e.ee_home_yaw},
              {"max_step_translation", e.max_step_translation},
              {"max_step_yaw", e.max_step_yaw},
              {"grasp_radius", e.grasp_radius},
              {"z_max", e.z_max},
              {"ee_vel_max", e.ee_vel_max},
              {"episode_len", e.episode_len}};
  j["skill"] = {{"dim", c.skill.dim},
                {"kappa", c.skill.kappa},
                {"mu", c.skill.mu},
                {"n_segments", c.skill.n_segments}};
  j["reward"] = {{"epsilon", c.reward.epsilon}};
  const auto& t = c.train;
  j["train"] = {{"variant", t.variant},         {"seed", t.seed},
                {"n_iterations", t.n_iterations}, {"n_envs", t.n_envs},
                {"gamma", t.gamma},             {"lam", t.lam},
                {"clip", t.clip},               {"policy_lr", t.policy_lr},
                {"critic_lr", t.critic_lr},     {"phi_lr", t.phi_lr},
                {"disc_lr", t.disc_lr},         {"ppo_epochs", t.ppo_epochs},
                {"n_minibatches", t.n_minibatches}, {"critic_epochs", t.critic_epochs},
                {"phi_steps", t.phi_steps},     {"phi_batch", t.phi_batch},
                {"ent_coef", t.ent_coef},       {"max_grad_norm", t.max_grad_norm},
                {"init_log_std", t.init_log_std}, {"policy_hidden", t.policy_hidden},
                {"critic_hidden", t.critic_hidden}, {"phi_hidden", t.phi_hidden},
                {"discovery_input", t.discovery_input},
                {"omega", t.omega},             {"checkpoint_interval", t.checkpoint_interval}};
  const auto& h = c.hrl;
  j["hrl"] = {{"decision_interval", h.decision_interval},
              {"pos_threshold", h.pos_threshold},
              {"yaw_threshold", h.yaw_threshold},
              {"success_bonus", h.success_bonus},
              {"n_iterations", h.n_iterations},
              {"n_envs", h.n_envs},
              {"gamma", h.gamma},
              {"lam", h.lam},
              {"lr", h.lr},
              {"ppo_epochs", h.ppo_epochs},
              {"n_minibatches", h.n_minibatches},
              {"init_log_std", h.init_log_std},
              {"hidden", h.hidden},
              {"goal_min_distance", h.goal_min_distance},
              {"goal_half_extent", h.goal_half_extent},
              {"seed", h.seed}};
  j["eval"] = {{"n_rollouts", c.eval.n_rollouts},
               {"n_seeds", c.eval.n_seeds},
               {"export_skills", c.eval.export_skills},
               {"seed", c.eval.seed},
               {"deterministic", c.eval.deterministic}};
  j["plan"] = {{"step_budget", c.plan.step_budget},
               {"threshold", c.plan.threshold},
               {"seed", c.plan.seed}};
  j["output_dir"] = c.output_dir;
  return j;
}

ExperimentConfig config_from_json(const json& j) {
  ExperimentConfig c;
  Section root(j, "<root>");
  if (const json* s = root.child("env")) read_env(*s, c.env);
  if (const json* s = root.child("skill")) read_skill(*s, c.skill);
  if (const json* s = root.child("reward")) read_reward(*s, c.reward);
  if (const json* s = root.child("train")) read_train(*s, c.train);
  if (const json* s = root.child("hrl")) read_hrl(*s, c.hrl);
  if (const json* s = root.child("eval")) read_eval(*s, c.eval);
  if (const json* s = root.child("plan")) read_plan(*s, c.plan);
  root.get("output_dir", c.output_dir);
  root.finish();
  c.validate();
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("config: cannot open " + path.string());
  json j;
  try {
    j = json::parse(f);
  } catch (const json::exception& e) {
    throw ConfigError("config: " + path.string() + ": " + e.what());
  }
  return config_from_json(j);
}

void save_config(const ExperimentConfig& cfg, const std::filesystem::path& path) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw ConfigError("config: cannot write " + path.string());
  f << to_json(cfg).dump(2) << '\n';
}

std::filesystem::path resolve_output_dir(const ExperimentConfig& cfg) {
  if (const char* env = std::getenv("SLIM_OUT_DIR"); env && *env) return env;
  return cfg.output_dir;
}

std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream, std::uint64_t index) {
  // splitmix64 over a combined key.
  std::uint64_t x = master ^ (stream * 0x9e3779b97f4a7c15ULL) ^ (index * 0xbf58476d1ce4e5b9ULL);
  for (int i = 0; i < 2; ++i) {
    x += 0x9e3779b97f4a7c15ULL;
    std::uint64_t z = x;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    x = z ^ (z >> 31);
  }
  return x;
}

}  // namespace slim
