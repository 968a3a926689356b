#pragma once

#include <Eigen/Core>

#include <random>
#include <vector>

namespace slim {

using Rng = std::mt19937_64;

// Unit-norm latent skill.
using SkillVector = Eigen::VectorXd;

struct SkillPrior {
  int dim = 4;
  double kappa = 0.0;     // 0 = uniform on the sphere
  Eigen::VectorXd mu;     // mean direction; e1 when empty

  Eigen::VectorXd mean_direction() const;
};

// Draws from the von Mises-Fisher distribution on S^{d-1}. kappa = 0 is the
// uniform distribution; kappa > 0 uses Wood's rejection sampler for the
// component along mu. Throws std::invalid_argument on kappa < 0, d < 2, or a
// non-unit mu.
SkillVector sample_skill(Rng& rng, int d, double kappa, const Eigen::VectorXd& mu);
SkillVector sample_skill(Rng& rng, const SkillPrior& prior);

struct SkillSegment {
  SkillVector z;
  int start = 0;  // inclusive
  int end = 0;    // exclusive
};

struct SkillSchedule {
  std::vector<SkillSegment> segments;

  const SkillVector& skill_at(int t) const;
  int segment_index(int t) const;
  int horizon() const { return segments.empty() ? 0 : segments.back().end; }
};

// Splits [0, T) into n_segments contiguous near-equal pieces, each with an
// independent skill draw.
SkillSchedule make_schedule(Rng& rng, int T, int n_segments, const SkillPrior& prior);

}  // namespace slim
