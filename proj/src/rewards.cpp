#include "slim/rewards.hpp"

#include <stdexcept>

namespace slim {

double reach_reward(const Eigen::Vector3d& ee_pos, const Eigen::Vector3d& targ_pos,
                    double epsilon) {
  if (!(epsilon > 0.0)) throw std::invalid_argument("rewards: epsilon must be positive");
  return 1.0 / ((ee_pos - targ_pos).squaredNorm() + epsilon);
}

double discovery_reward(const Eigen::Ref<const Eigen::VectorXd>& phi_prev,
                        const Eigen::Ref<const Eigen::VectorXd>& phi_next,
                        const Eigen::Ref<const Eigen::VectorXd>& z) {
  if (phi_prev.size() != z.size() || phi_next.size() != z.size())
    throw std::invalid_argument("rewards: representation and skill dimensions differ");
  return (phi_next - phi_prev).dot(z);
}

}  // namespace slim
