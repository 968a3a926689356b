#pragma once

#include <Eigen/Core>

namespace slim {

struct RewardTriple {
  double reach = 0.0;
  double discovery = 0.0;
  double safety = 0.0;
};

struct RewardConfig {
  double epsilon = 0.02;  // m^2
};

// 1 / (|ee - target|^2 + epsilon).
double reach_reward(const Eigen::Vector3d& ee_pos, const Eigen::Vector3d& targ_pos,
                    double epsilon);

// (phi_next - phi_prev)^T z. Throws std::invalid_argument on size mismatch.
double discovery_reward(const Eigen::Ref<const Eigen::VectorXd>& phi_prev,
                        const Eigen::Ref<const Eigen::VectorXd>& phi_next,
                        const Eigen::Ref<const Eigen::VectorXd>& z);

inline double safety_reward(bool safe) { return safe ? 0.0 : -1.0; }

}  // namespace slim
