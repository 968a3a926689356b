#include "slim/skills.hpp"

#include <cmath>
#include <stdexcept>

namespace slim {

Eigen::VectorXd SkillPrior::mean_direction() const {
  if (mu.size() == 0) return Eigen::VectorXd::Unit(dim, 0);
  return mu;
}

namespace {

Eigen::VectorXd uniform_sphere(Rng& rng, int d) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::VectorXd x(d);
  double n = 0.0;
  do {
    for (int i = 0; i < d; ++i) x[i] = normal(rng);
    n = x.norm();
  } while (n < 1e-12);
  return x / n;
}

// Wood (1994): samples w = z.mu for the vMF on S^{d-1}.
double sample_vmf_weight(Rng& rng, int d, double kappa) {
  const double m1 = d - 1.0;
  const double b = m1 / (2.0 * kappa + std::sqrt(4.0 * kappa * kappa + m1 * m1));
  const double x0 = (1.0 - b) / (1.0 + b);
  const double c = kappa * x0 + m1 * std::log(1.0 - x0 * x0);
  std::gamma_distribution<double> ga(0.5 * m1, 1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  for (;;) {
    const double g1 = ga(rng), g2 = ga(rng);
    const double beta = g1 / (g1 + g2);
    const double w = (1.0 - (1.0 + b) * beta) / (1.0 - (1.0 - b) * beta);
    const double u = unif(rng);
    if (kappa * w + m1 * std::log(1.0 - x0 * w) - c >= std::log(u)) return w;
  }
}

}  // namespace

SkillVector sample_skill(Rng& rng, int d, double kappa, const Eigen::VectorXd& mu) {
  if (d < 2) throw std::invalid_argument("skills: dimension must be >= 2");
  if (!(kappa >= 0.0)) throw std::invalid_argument("skills: kappa must be >= 0");
  if (kappa == 0.0) return uniform_sphere(rng, d);
  if (mu.size() != d || std::abs(mu.norm() - 1.0) > 1e-9)
    throw std::invalid_argument("skills: mu must be a unit vector of dimension d");

  const double w = sample_vmf_weight(rng, d, kappa);
  // Tangent direction: uniform on the great sphere orthogonal to mu.
  Eigen::VectorXd v;
  double n = 0.0;
  do {
    v = uniform_sphere(rng, d);
    v -= v.dot(mu) * mu;
    n = v.norm();
  } while (n < 1e-9);
  v /= n;
  Eigen::VectorXd z = w * mu + std::sqrt(std::max(0.0, 1.0 - w * w)) * v;
  return z / z.norm();
}

SkillVector sample_skill(Rng& rng, const SkillPrior& prior) {
  return sample_skill(rng, prior.dim, prior.kappa, prior.mean_direction());
}

int SkillSchedule::segment_index(int t) const {
  for (std::size_t i = 0; i < segments.size(); ++i)
    if (t >= segments[i].start && t < segments[i].end) return static_cast<int>(i);
  throw std::out_of_range("skills: step outside schedule");
}

const SkillVector& SkillSchedule::skill_at(int t) const {
  return segments[segment_index(t)].z;
}

SkillSchedule make_schedule(Rng& rng, int T, int n_segments, const SkillPrior& prior) {
  if (n_segments < 1 || n_segments > T)
    throw std::invalid_argument("skills: need 1 <= n_segments <= T");
  SkillSchedule s;
  s.segments.reserve(n_segments);
  for (int i = 0; i < n_segments; ++i) {
    SkillSegment seg;
    seg.start = static_cast<int>(static_cast<long>(i) * T / n_segments);
    seg.end = static_cast<int>(static_cast<long>(i + 1) * T / n_segments);
    seg.z = sample_skill(rng, prior);
    s.segments.push_back(std::move(seg));
  }
  return s;
}

}  // namespace slim
