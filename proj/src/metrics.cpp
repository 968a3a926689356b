#include "slim/metrics.hpp"

#include <cmath>
#include <fstream>
#include <stdexcept>

namespace slim {

CoverageGrid::CoverageGrid(const Vec3& lo, const Vec3& hi, double cell)
    : lo_(lo), hi_(hi), cell_(cell) {
  if (!(cell > 0.0)) throw std::invalid_argument("coverage: cell size must be positive");
  for (int a = 0; a < 3; ++a) {
    const double extent = hi[a] - lo[a];
    const double k = extent / cell;
    if (!(extent > 0.0) || std::abs(k - std::round(k)) > 1e-9)
      throw std::invalid_argument("coverage: cell must divide the region extent");
    n_[a] = static_cast<int>(std::round(k));
  }
}

CoverageGrid CoverageGrid::standard() {
  return CoverageGrid(Vec3(-0.25, -0.25, 0.0), Vec3(0.25, 0.25, 0.5), 0.10);
}

std::optional<int> CoverageGrid::cell_index(const Vec3& p) const {
  std::array<int, 3> idx{};
  for (int a = 0; a < 3; ++a) {
    if (!(p[a] >= lo_[a] && p[a] < hi_[a])) return std::nullopt;
    idx[a] = std::min(static_cast<int>(std::floor((p[a] - lo_[a]) / cell_)), n_[a] - 1);
  }
  return (idx[2] * n_[1] + idx[1]) * n_[0] + idx[0];
}

void CoverageGrid::visit(const Vec3& p) {
  if (auto i = cell_index(p)) occupied_.insert(*i);
}

void CoverageGrid::merge(const CoverageGrid& o) {
  occupied_.insert(o.occupied_.begin(), o.occupied_.end());
}

nlohmann::json EvalReport::to_json() const {
  nlohmann::json seeds = nlohmann::json::array();
  for (const auto& s : per_seed)
    seeds.push_back({{"seed", s.seed},
                     {"coverage", s.coverage},
                     {"safety_rate", s.safety_rate},
                     {"n_states", s.n_states}});
  return {{"coverage_count", coverage_count}, {"coverage_mean", coverage_mean},
          {"coverage_std", coverage_std},     {"safety_rate", safety_rate},
          {"safety_mean", safety_mean},       {"safety_std", safety_std},
          {"n_rollouts", n_rollouts},         {"n_seeds", n_seeds},
          {"per_seed", seeds}};
}

RolloutBatch eval_rollouts(const SkillAgent& agent, int n_rollouts, std::uint64_t eval_seed,
                           int seed_index) {
  const auto& cfg = agent.config;
  RolloutSpec spec;
  spec.env = cfg.env;
  spec.reward = cfg.reward;
  spec.deterministic = cfg.eval.deterministic;
  Rng skill_rng(derive_seed(eval_seed, kStreamEvalSkill, static_cast<std::uint64_t>(seed_index)));
  for (int r = 0; r < n_rollouts; ++r) {
    spec.reset_seeds.push_back(derive_seed(
        eval_seed, kStreamEvalReset,
        static_cast<std::uint64_t>(seed_index) * 1000003ULL + static_cast<std::uint64_t>(r)));
    spec.schedules.push_back(make_schedule(skill_rng, cfg.env.episode_len, 1, cfg.skill.prior()));
  }
  Rng act_rng(derive_seed(eval_seed, kStreamEvalAct, static_cast<std::uint64_t>(seed_index)));
  return collect_rollouts(agent.policy, agent.discovery_model(), spec, act_rng);
}

SeedEval score_batch(const RolloutBatch& b) {
  CoverageGrid grid = CoverageGrid::standard();
  long long safe = 0;
  for (Eigen::Index i = 0; i < b.size(); ++i) {
    grid.visit(b.obj_pos.col(i));
    if (b.safe[i] > 0.5) ++safe;
  }
  SeedEval s;
  s.coverage = grid.count();
  s.n_states = b.size();
  s.safety_rate = b.size() ? static_cast<double>(safe) / static_cast<double>(b.size()) : 1.0;
  return s;
}

EvalReport eval_skills(const SkillAgent& agent, int n_rollouts, int n_seeds,
                       std::uint64_t eval_seed) {
  if (n_rollouts < 1 || n_seeds < 1) throw std::invalid_argument("eval: counts must be positive");
  EvalReport rep;
  rep.n_rollouts = n_rollouts;
  rep.n_seeds = n_seeds;
  CoverageGrid all = CoverageGrid::standard();
  long long safe_states = 0, states = 0;
  for (int s = 0; s < n_seeds; ++s) {
    const RolloutBatch b = eval_rollouts(agent, n_rollouts, eval_seed, s);
    SeedEval e = score_batch(b);
    e.seed = static_cast<std::uint64_t>(s);
    for (Eigen::Index i = 0; i < b.size(); ++i) all.visit(b.obj_pos.col(i));
    safe_states += static_cast<long long>(std::llround(e.safety_rate * static_cast<double>(e.n_states)));
    states += e.n_states;
    rep.per_seed.push_back(e);
  }
  rep.coverage_count = all.count();
  rep.safety_rate = static_cast<double>(safe_states) / static_cast<double>(states);
  for (const auto& e : rep.per_seed) {
    rep.coverage_mean += e.coverage / static_cast<double>(n_seeds);
    rep.safety_mean += e.safety_rate / n_seeds;
  }
  for (const auto& e : rep.per_seed) {
    rep.coverage_std += std::pow(e.coverage - rep.coverage_mean, 2) / n_seeds;
    rep.safety_std += std::pow(e.safety_rate - rep.safety_mean, 2) / n_seeds;
  }
  rep.coverage_std = std::sqrt(rep.coverage_std);
  rep.safety_std = std::sqrt(rep.safety_std);
  return rep;
}

nlohmann::json ExportRecord::to_json() const {
  return {{"rid", rid},
          {"t", t},
          {"z", z},
          {"obj", {obj.x(), obj.y(), obj.z()}},
          {"ee", {ee.x(), ee.y(), ee.z()}},
          {"yaw", yaw},
          {"r_reach", r_reach},
          {"r_disc", r_disc},
          {"r_safe", r_safe},
          {"safe", safe}};
}

ExportRecord ExportRecord::from_json(const nlohmann::json& j) {
  ExportRecord r;
  r.rid = j.at("rid").get<int>();
  r.t = j.at("t").get<int>();
  r.z = j.at("z").get<std::vector<double>>();
  const auto obj = j.at("obj").get<std::vector<double>>();
  const auto ee = j.at("ee").get<std::vector<double>>();
  if (obj.size() != 3 || ee.size() != 3) throw std::invalid_argument("export: positions need 3 entries");
  r.obj = Vec3(obj[0], obj[1], obj[2]);
  r.ee = Vec3(ee[0], ee[1], ee[2]);
  r.yaw = j.at("yaw").get<double>();
  r.r_reach = j.at("r_reach").get<double>();
  r.r_disc = j.at("r_disc").get<double>();
  r.r_safe = j.at("r_safe").get<double>();
  r.safe = j.at("safe").get<bool>();
  return r;
}

std::vector<ExportRecord> export_records(const RolloutBatch& b) {
  std::vector<ExportRecord> out;
  out.reserve(b.size());
  for (int e = 0; e < b.n_episodes; ++e) {
    for (int t = 0; t < b.horizon; ++t) {
      const Eigen::Index i = static_cast<Eigen::Index>(e) * b.horizon + t;
      ExportRecord r;
      r.rid = e;
      r.t = t;
      r.z.assign(b.z.col(i).data(), b.z.col(i).data() + b.z.rows());
      r.obj = b.obj_pos.col(i);
      r.ee = b.ee_pos.col(i);
      r.yaw = b.obj_yaw[i];
      r.r_reach = b.rewards(0, i);
      r.r_disc = b.rewards(1, i);
      r.r_safe = b.rewards(2, i);
      r.safe = b.safe[i] > 0.5;
      out.push_back(std::move(r));
    }
  }
  return out;
}

void export_rollouts(const SkillAgent& agent, int n_skills, const std::filesystem::path& out,
                     std::uint64_t eval_seed) {
  if (n_skills < 1) throw std::invalid_argument("export: n_skills must be positive");
  std::ofstream f(out, std::ios::trunc);
  if (!f) throw std::runtime_error("export: cannot write " + out.string());
  const RolloutBatch b = eval_rollouts(agent, n_skills, eval_seed, 0);
  for (const auto& r : export_records(b)) f << r.to_json().dump() << '\n';
  if (!f) throw std::runtime_error("export: write failed for " + out.string());
}

std::vector<ExportRecord> read_export(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("export: cannot open " + path.string());
  std::vector<ExportRecord> out;
  std::string line;
  int line_no = 0;
  while (std::getline(f, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      out.push_back(ExportRecord::from_json(nlohmann::json::parse(line)));
    } catch (const std::exception& e) {
      throw std::runtime_error("export: line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace slim
