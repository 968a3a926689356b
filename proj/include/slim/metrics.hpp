#pragma once

#include "slim/env.hpp"
#include "slim/trainer.hpp"

#include <json.hpp>

#include <filesystem>
#include <optional>
#include <set>
#include <vector>

namespace slim {

// Axis-aligned box split into cubic cells. Cells are half-open [lo, hi) per
// axis; positions outside the region are ignored.
class CoverageGrid {
 public:
  CoverageGrid(const Vec3& lo, const Vec3& hi, double cell);
  // 0.5 m cube centred over the table with its base on the surface, 0.1 m cells.
  static CoverageGrid standard();

  int cells_per_axis(int axis) const { return n_[axis]; }
  int cell_count() const { return n_[0] * n_[1] * n_[2]; }
  std::optional<int> cell_index(const Vec3& p) const;

  void visit(const Vec3& p);
  int count() const { return static_cast<int>(occupied_.size()); }
  const std::set<int>& occupied() const { return occupied_; }
  void merge(const CoverageGrid& o);

 private:
  Vec3 lo_, hi_;
  double cell_;
  std::array<int, 3> n_{};
  std::set<int> occupied_;
};

struct SeedEval {
  std::uint64_t seed = 0;
  int coverage = 0;
  double safety_rate = 0.0;
  long long n_states = 0;
};

struct EvalReport {
  int coverage_count = 0;  // union over seeds
  double coverage_mean = 0.0;
  double coverage_std = 0.0;
  double safety_rate = 0.0;  // over every evaluated state
  double safety_mean = 0.0;
  double safety_std = 0.0;
  int n_rollouts = 0;
  int n_seeds = 0;
  std::vector<SeedEval> per_seed;

  nlohmann::json to_json() const;
};

// Rollouts of one evaluation seed: n_rollouts skills from the prior, one skill
// per rollout, each for a full episode. Actions are the policy mode, or samples
// when eval.deterministic is false; reproducible per eval seed.
RolloutBatch eval_rollouts(const SkillAgent& agent, int n_rollouts, std::uint64_t eval_seed,
                           int seed_index);

// Coverage and safety over post-step states of a batch.
SeedEval score_batch(const RolloutBatch& b);

// Per-seed coverage (object centre cells) and safe-state ratio; the
// defaults follow the 100 rollouts x 4 seeds protocol.
EvalReport eval_skills(const SkillAgent& agent, int n_rollouts, int n_seeds,
                       std::uint64_t eval_seed);

struct ExportRecord {
  int rid = 0;
  int t = 0;
  std::vector<double> z;
  Vec3 obj = Vec3::Zero();
  Vec3 ee = Vec3::Zero();
  double yaw = 0.0;
  double r_reach = 0.0, r_disc = 0.0, r_safe = 0.0;
  bool safe = true;

  nlohmann::json to_json() const;
  static ExportRecord from_json(const nlohmann::json& j);
};

std::vector<ExportRecord> export_records(const RolloutBatch& b);

// Writes one JSONL record per step for n_skills rollouts of evaluation seed
// index 0. Throws std::runtime_error when the path cannot be written.
void export_rollouts(const SkillAgent& agent, int n_skills, const std::filesystem::path& out,
                     std::uint64_t eval_seed);

std::vector<ExportRecord> read_export(const std::filesystem::path& path);

}  // namespace slim
