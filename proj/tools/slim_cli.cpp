#include "slim/checkpoint.hpp"
#include "slim/config.hpp"
#include "slim/hrl.hpp"
#include "slim/mcppo.hpp"
#include "slim/metrics.hpp"
#include "slim/planner.hpp"
#include "slim/trainer.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

namespace fs = std::filesystem;
using namespace slim;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;
constexpr int kExitNumerical = 3;

// Reports go next to the checkpoint unless SLIM_OUT_DIR says otherwise.
fs::path report_dir(const fs::path& ckpt) {
  if (const char* env = std::getenv("SLIM_OUT_DIR"); env && *env) return env;
  const fs::path parent = ckpt.parent_path();
  return parent.empty() ? fs::path(".") : parent;
}

void append_jsonl(const fs::path& path, const nlohmann::json& j) {
  fs::create_directories(path.parent_path().empty() ? fs::path(".") : path.parent_path());
  std::ofstream f(path, std::ios::app);
  if (!f) throw std::runtime_error("cannot write " + path.string());
  f << j.dump() << '\n';
}

struct TrainArgs {
  std::string config;
  std::string variant;
  std::optional<std::uint64_t> seed;
  bool quiet = false;
};

int cmd_train(const TrainArgs& a) {
  ExperimentConfig cfg = load_config(a.config);
  if (!a.variant.empty()) cfg.train.variant = a.variant;
  if (a.seed) cfg.train.seed = *a.seed;
  cfg.validate();
  const AlgoVariant v = AlgoVariant::from_tag(cfg.train.variant);
  const fs::path out =
      resolve_output_dir(cfg) / (v.tag + "_seed" + std::to_string(cfg.train.seed));
  std::cout << "train: variant=" << v.tag << " seed=" << cfg.train.seed << " out=" << out.string()
            << '\n';
  const TrainResult r = train(v, cfg, out, [&](const IterationMetrics& m) {
    if (a.quiet) return;
    std::printf("iter %4d steps %9lld reach %.3f disc %.3f safe %.3f cover %d kl %.4f t %.1fs\n",
                m.iteration, m.env_steps, m.return_reach, m.return_discovery, m.safety_rate,
                m.coverage_proxy, m.approx_kl, m.wall_time_s);
    std::fflush(stdout);
  });
  std::cout << "checkpoint: " << r.checkpoint.string() << '\n'
            << "metrics: " << r.metrics_log.string() << '\n';
  return kExitOk;
}

struct EvalArgs {
  std::string ckpt;
  std::optional<int> rollouts, seeds;
  bool sample = false;
};

int cmd_eval(const EvalArgs& a) {
  const Checkpoint ck = Checkpoint::load(a.ckpt);
  SkillAgent agent = agent_from_checkpoint(ck);
  if (a.sample) agent.config.eval.deterministic = false;
  const EvalConfig& e = agent.config.eval;
  const int n = a.rollouts.value_or(e.n_rollouts);
  const int s = a.seeds.value_or(e.n_seeds);
  if (n < 1 || s < 1) throw CLI::ValidationError("--rollouts and --seeds must be positive");
  const EvalReport rep = eval_skills(agent, n, s, e.seed);
  nlohmann::json j = rep.to_json();
  j["checkpoint"] = a.ckpt;
  j["variant"] = agent.variant.tag;
  j["deterministic"] = e.deterministic;
  std::printf("coverage %.2f +- %.2f (union %d of %d cells)\nsafety_rate %.4f (+- %.4f per seed)\n",
              rep.coverage_mean, rep.coverage_std, rep.coverage_count,
              CoverageGrid::standard().cell_count(), rep.safety_rate, rep.safety_std);
  const fs::path dir = report_dir(a.ckpt);
  fs::create_directories(dir);
  {
    std::ofstream f(dir / "eval_report.json");
    if (!f) throw std::runtime_error("cannot write " + (dir / "eval_report.json").string());
    f << j.dump(2) << '\n';
  }
  append_jsonl(dir / "reports.jsonl", {{"kind", "eval"}, {"report", j}});
  std::cout << "report: " << (dir / "eval_report.json").string() << '\n';
  return kExitOk;
}

struct HrlArgs {
  std::string skill_ckpt;
  std::string task = "pos";
  std::string config;
  bool scratch = false;
  std::optional<std::uint64_t> seed;
};

int cmd_hrl(const HrlArgs& a) {
  const GoalKind kind = goal_kind_from_string(a.task);
  std::optional<Checkpoint> skill;
  if (!a.skill_ckpt.empty()) skill = Checkpoint::load(a.skill_ckpt);
  if (!a.scratch && !skill) throw CLI::ValidationError("--skill-ckpt is required unless --scratch");
  ExperimentConfig cfg;
  if (!a.config.empty()) {
    cfg = load_config(a.config);
  } else if (skill) {
    cfg = config_from_json(skill->config);
  }
  if (a.seed) cfg.hrl.seed = *a.seed;
  cfg.validate();
  const HrlMode mode = a.scratch ? HrlMode::scratch : HrlMode::hierarchical;
  const fs::path out = resolve_output_dir(cfg) / "hrl";
  const double thr = kind == GoalKind::position ? cfg.hrl.pos_threshold : cfg.hrl.yaw_threshold;
  std::cout << "hrl: task=" << a.task << " threshold=" << thr
            << " mode=" << (a.scratch ? "scratch" : "hierarchical") << " out=" << out.string()
            << '\n';
  const HrlResult r = hrl_train(skill ? &*skill : nullptr, a.skill_ckpt, kind, mode, cfg, out,
                                [](const CurvePoint& c) {
                                  std::printf("iter %3d steps %8lld success %.3f return %.3f\n",
                                              c.iteration, c.env_steps, c.success_rate,
                                              c.mean_return);
                                  std::fflush(stdout);
                                });
  std::cout << "checkpoint: " << r.checkpoint_path.string() << '\n'
            << "curve: " << r.curve_path.string() << '\n';
  return kExitOk;
}

struct FollowArgs {
  std::string hrl_ckpt;
  std::string plan = "1";
  std::string skill_ckpt;
  std::optional<std::uint64_t> seed;
  bool traces = false;
};

int cmd_follow(const FollowArgs& a) {
  WaypointPlan plan;
  const auto builtin = builtin_plans();
  bool is_index = !a.plan.empty() && a.plan.find_first_not_of("0123456789") == std::string::npos;
  if (is_index) {
    const int idx = std::stoi(a.plan);
    if (idx < 1 || idx > static_cast<int>(builtin.size()))
      throw CLI::ValidationError("--plan index must be in 1.." + std::to_string(builtin.size()));
    plan = builtin[static_cast<std::size_t>(idx - 1)];
  } else {
    plan = load_plan(a.plan);
  }
  const Checkpoint ck = Checkpoint::load(a.hrl_ckpt);
  std::optional<fs::path> override_path;
  if (!a.skill_ckpt.empty()) override_path = a.skill_ckpt;
  const HrlController c = load_controller(ck, override_path);
  if (c.kind != GoalKind::position)
    throw HrlError("follow: controller was trained on yaw goals; a position controller is needed");
  plan.step_budget = c.config.plan.step_budget;
  plan.threshold = c.config.plan.threshold;
  const std::uint64_t seed = a.seed.value_or(c.config.plan.seed);
  const TrajectoryReport rep = follow(plan, c.high, c.low, c.config.env, seed);

  std::printf("plan %s\n", plan.name.c_str());
  std::printf("%-16s %-14s %-15s %-12s\n", "overall_success", "max_distance", "points_success",
              "safety_rate");
  std::printf("%-16d %-14.4f %-15s %-12.4f\n", rep.overall_success ? 1 : 0, rep.max_distance,
              (std::to_string(rep.points_success) + "/" + std::to_string(plan.waypoints.size())).c_str(),
              rep.safety_rate);
  nlohmann::json j = rep.to_json(a.traces);
  j["plan"] = plan.name;
  j["seed"] = seed;
  append_jsonl(report_dir(a.hrl_ckpt) / "reports.jsonl", {{"kind", "follow"}, {"report", j}});
  return kExitOk;
}

struct ExportArgs {
  std::string ckpt;
  std::optional<int> skills;
  std::string out;
  bool sample = false;
};

int cmd_export(const ExportArgs& a) {
  const Checkpoint ck = Checkpoint::load(a.ckpt);
  SkillAgent agent = agent_from_checkpoint(ck);
  if (a.sample) agent.config.eval.deterministic = false;
  const int n = a.skills.value_or(agent.config.eval.export_skills);
  if (n < 1) throw CLI::ValidationError("--skills must be positive");
  fs::path out = a.out.empty() ? report_dir(a.ckpt) / "rollouts.jsonl" : fs::path(a.out);
  export_rollouts(agent, n, out, agent.config.eval.seed);
  std::cout << "exported " << n << " rollouts to " << out.string() << '\n';
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"slim: multi-critic skill discovery experiments"};
  app.require_subcommand(1);

  TrainArgs ta;
  auto* train_cmd = app.add_subcommand("train", "Train a skill-discovery agent");
  train_cmd->add_option("--config", ta.config, "Experiment config (JSON)")->required();
  train_cmd->add_option("--variant", ta.variant, "Algorithm variant tag");
  train_cmd->add_option("--seed", ta.seed, "Master seed");
  train_cmd->add_flag("--quiet", ta.quiet, "Suppress per-iteration output");

  EvalArgs ea;
  auto* eval_cmd = app.add_subcommand("eval", "Coverage and safety of a skill checkpoint");
  eval_cmd->add_option("--ckpt", ea.ckpt)->required();
  eval_cmd->add_option("--rollouts", ea.rollouts, "Rollouts per seed (default 100)");
  eval_cmd->add_option("--seeds", ea.seeds, "Evaluation seeds (default 4)");
  eval_cmd->add_flag("--sample", ea.sample, "Sample actions instead of using the policy mode");

  HrlArgs ha;
  auto* hrl_cmd = app.add_subcommand("hrl", "Train a high-level controller over frozen skills");
  hrl_cmd->add_option("--skill-ckpt", ha.skill_ckpt);
  hrl_cmd->add_option("--task", ha.task)->check(CLI::IsMember({"pos", "yaw"}));
  hrl_cmd->add_option("--config", ha.config);
  hrl_cmd->add_flag("--scratch", ha.scratch, "Flat primitive-action baseline");
  hrl_cmd->add_option("--seed", ha.seed);

  FollowArgs fa;
  auto* follow_cmd = app.add_subcommand("follow", "Follow a waypoint plan");
  follow_cmd->add_option("--hrl-ckpt", fa.hrl_ckpt)->required();
  follow_cmd->add_option("--plan", fa.plan, "Builtin index 1-6 or a plan file");
  follow_cmd->add_option("--skill-ckpt", fa.skill_ckpt, "Override the low-level checkpoint path");
  follow_cmd->add_option("--seed", fa.seed);
  follow_cmd->add_flag("--traces", fa.traces, "Include per-step traces in the report");

  ExportArgs xa;
  auto* export_cmd = app.add_subcommand("export", "Export rollouts as JSONL");
  export_cmd->add_option("--ckpt", xa.ckpt)->required();
  export_cmd->add_option("--skills", xa.skills, "Number of skills (default 100)");
  export_cmd->add_option("--out", xa.out);
  export_cmd->add_flag("--sample", xa.sample, "Sample actions instead of using the policy mode");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*train_cmd) return cmd_train(ta);
    if (*eval_cmd) return cmd_eval(ea);
    if (*hrl_cmd) return cmd_hrl(ha);
    if (*follow_cmd) return cmd_follow(fa);
    if (*export_cmd) return cmd_export(xa);
  } catch (const NumericalError& e) {
    std::cerr << "numerical abort: " << e.what() << '\n';
    return kExitNumerical;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  }
  return kExitUsage;
}
