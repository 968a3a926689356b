#include "slim/hrl.hpp"
#include "slim/trainer.hpp"

#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <numbers>
#include <string>

using namespace slim;

namespace fs = std::filesystem;

namespace {

ExperimentConfig tiny_config() {
  ExperimentConfig cfg;
  cfg.train.policy_hidden = {8};
  cfg.train.critic_hidden = {8};
  cfg.train.phi_hidden = {8};
  cfg.hrl.hidden = {8};
  cfg.hrl.n_iterations = 3;
  cfg.hrl.n_envs = 2;
  return cfg;
}

fs::path scratch_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("slim_hrl_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

int count_lines(const fs::path& p) {
  std::ifstream f(p);
  std::string line;
  int n = 0;
  while (std::getline(f, line)) n += line.empty() ? 0 : 1;
  return n;
}

}  // namespace

TEST_CASE("task reward") {
  EnvConfig env;
  State s = reset(1, env);
  Goal g;
  g.target_pos = s.obj_pos;
  CHECK(task_reward(s, g) == doctest::Approx(10.0));
  g.target_pos = s.obj_pos + Vec3(0.2, 0.0, 0.0);
  CHECK(task_reward(s, g) == doctest::Approx(-0.2));

  Goal y;
  y.kind = GoalKind::yaw;
  y.threshold = 0.2;
  s.obj_yaw = 0.0;
  y.target_yaw = std::numbers::pi - 1e-9;
  const double at_pi = task_reward(s, y);
  y.target_yaw = std::numbers::pi / 2;
  CHECK(at_pi < task_reward(s, y));
}

TEST_CASE("goal encoding and parsing") {
  EnvConfig env;
  const State s = reset(2, env);
  Goal g;
  g.target_pos = s.obj_pos + Vec3(0.1, -0.05, 0.0);
  const Eigen::VectorXd e = encode_goal(s, g);
  CHECK(e.size() == kGoalEncDim);
  CHECK(e[0] == 1.0);
  CHECK(e[2] == doctest::Approx(0.1));
  CHECK(e[3] == doctest::Approx(-0.05));
  CHECK(goal_kind_from_string("pos") == GoalKind::position);
  CHECK(goal_kind_from_string("yaw") == GoalKind::yaw);
  CHECK_THROWS(goal_kind_from_string("roll"));
}

TEST_CASE("goal sampling respects the minimum distance") {
  HrlConfig cfg;
  Rng rng(3);
  EnvConfig env;
  for (int i = 0; i < 200; ++i) {
    const State s = reset(static_cast<std::uint64_t>(i), env);
    const Goal p = sample_goal(GoalKind::position, s, cfg, rng);
    CHECK(goal_error(s, p) >= cfg.goal_min_distance);
    CHECK(p.threshold == 0.05);
    const Goal y = sample_goal(GoalKind::yaw, s, cfg, rng);
    CHECK(y.threshold == 0.2);
    CHECK_FALSE(goal_reached(s, y));
  }
}

TEST_CASE("hierarchical rollouts: unit skills, decision count, success detection") {
  const ExperimentConfig cfg = tiny_config();
  const SkillAgent agent = make_agent(cfg, AlgoVariant::from_tag("slim"));
  Rng rng(4);
  HighLevelPolicy high = make_high_level(cfg.skill.dim, cfg.hrl, rng);
  const State s = reset(5, cfg.env);

  // Goal at the current object position: success at step 0.
  Goal here;
  here.target_pos = s.obj_pos;
  RolloutOptions stop;
  stop.stop_on_success = true;
  const EpisodeRecord r0 = hrl_rollout(high, agent.policy, cfg.env, s, here, rng, stop);
  CHECK(r0.success);
  CHECK(r0.first_success == 0);

  const Goal g = sample_goal(GoalKind::position, s, cfg.hrl, rng);
  RolloutOptions opt;
  opt.max_steps = cfg.env.episode_len;
  const EpisodeRecord rec = hrl_rollout(high, agent.policy, cfg.env, s, g, rng, opt);
  CHECK(rec.states.size() == static_cast<std::size_t>(cfg.env.episode_len + 1));
  CHECK(rec.skills.size() == 8);
  for (const auto& z : rec.skills) CHECK(std::abs(z.norm() - 1.0) < 1e-9);
  bool hit = false;
  for (const auto& st : rec.states) hit = hit || (st.obj_pos - g.target_pos).norm() < 0.05;
  CHECK(hit == rec.success);

  high.interval = cfg.env.episode_len;
  CHECK(hrl_rollout(high, agent.policy, cfg.env, s, g, rng, opt).skills.size() == 1);
}

TEST_CASE("hrl training keeps the low level frozen and logs one curve row per iteration") {
  const ExperimentConfig cfg = tiny_config();
  const fs::path dir = scratch_dir("train");
  const SkillAgent agent = make_agent(cfg, AlgoVariant::from_tag("slim"));
  const fs::path skill_path = dir / "skill.ckpt";
  agent_checkpoint(agent, 0).save(skill_path);
  const Checkpoint skill = Checkpoint::load(skill_path);
  const std::string before = skill.serialize();

  const HrlResult r =
      hrl_train(&skill, skill_path, GoalKind::position, HrlMode::hierarchical, cfg, dir / "out");
  CHECK(r.curve.size() == 3);
  CHECK(count_lines(r.curve_path) == 3);
  CHECK(Checkpoint::load(skill_path).serialize() == before);

  const HrlController c = load_controller(Checkpoint::load(r.checkpoint_path));
  CHECK(c.low == agent_from_checkpoint(skill).policy);
  CHECK(c.high.interval == 25);

  // Tampered low-level checkpoint is refused.
  SkillAgent other = make_agent(tiny_config(), AlgoVariant::from_tag("slim"));
  other.policy.set_log_std(Eigen::VectorXd::Constant(4, -1.0));
  agent_checkpoint(other, 0).save(dir / "other.ckpt");
  CHECK_THROWS_AS(load_controller(Checkpoint::load(r.checkpoint_path), dir / "other.ckpt"), HrlError);
  fs::remove_all(dir);
}

TEST_CASE("hrl rejects a skill dimension mismatch; scratch ignores the checkpoint") {
  ExperimentConfig cfg = tiny_config();
  const fs::path dir = scratch_dir("mismatch");
  ExperimentConfig six = cfg;
  six.skill.dim = 6;
  const SkillAgent agent = make_agent(six, AlgoVariant::from_tag("slim"));
  const Checkpoint skill = agent_checkpoint(agent, 0);
  CHECK_THROWS_AS(hrl_train(&skill, "x", GoalKind::position, HrlMode::hierarchical, cfg, dir), HrlError);

  const HrlResult a = hrl_train(&skill, "x", GoalKind::yaw, HrlMode::scratch, cfg, dir / "a");
  const HrlResult b = hrl_train(nullptr, "", GoalKind::yaw, HrlMode::scratch, cfg, dir / "b");
  REQUIRE(a.curve.size() == b.curve.size());
  for (std::size_t i = 0; i < a.curve.size(); ++i) CHECK(a.curve[i].to_json() == b.curve[i].to_json());
  fs::remove_all(dir);
}
