#pragma once

#include "slim/network.hpp"

#include <Eigen/Core>

#include <random>
#include <string>
#include <vector>

namespace slim {

// Observation slots read by phi and the discriminator: everything, or the
// object pose only (position and sin/cos yaw).
enum class DiscoveryInput { full, object };
DiscoveryInput discovery_input_from_string(const std::string& s);  // "full" | "object"
const char* discovery_input_name(DiscoveryInput in);
// Row indices into the observation; empty means all rows.
std::vector<int> discovery_rows(DiscoveryInput in);

// Rows of `obs` listed in `rows` (all of them when `rows` is empty).
Eigen::MatrixXd select_rows(const Eigen::MatrixXd& obs, const std::vector<int>& rows);

// State representation phi for the distance-maximising discovery reward. Every
// weight matrix is spectrally normalised and hidden units are tanh, so phi is
// 1-Lipschitz with respect to the observation.
class ReprNet {
 public:
  ReprNet() = default;
  ReprNet(int obs_dim, int skill_dim, const std::vector<int>& hidden, std::mt19937_64& rng,
          std::vector<int> rows = {});
  explicit ReprNet(Network net, std::vector<int> rows = {});

  int skill_dim() const { return net_.output_dim(); }
  const Network& net() const { return net_; }
  Network& net() { return net_; }
  const std::vector<int>& rows() const { return rows_; }

  Eigen::MatrixXd select(const Eigen::MatrixXd& obs) const { return select_rows(obs, rows_); }
  Eigen::MatrixXd embed(const Eigen::MatrixXd& obs) const { return net_.forward(select(obs)); }

 private:
  Network net_;
  std::vector<int> rows_;
};

struct PhiLoss {
  double loss = 0.0;
  GradientSet grads;
};

// loss = -mean_i (phi(next_i) - phi(obs_i))^T z_i, with exact gradients.
// Columns of obs, next_obs and z are samples.
PhiLoss phi_loss_and_grads(const ReprNet& repr, const Eigen::MatrixXd& obs,
                           const Eigen::MatrixXd& next_obs, const Eigen::MatrixXd& z);

// One optimisation step on phi: a single power iteration per weight, then an
// Adam step on the loss above. Returns the loss before the step.
double phi_update(ReprNet& repr, Adam& opt, const Eigen::MatrixXd& obs,
                  const Eigen::MatrixXd& next_obs, const Eigen::MatrixXd& z);

// Per-transition discovery rewards from phi, through rewards::discovery_reward.
Eigen::VectorXd phi_discovery_rewards(const ReprNet& repr, const Eigen::MatrixXd& obs,
                                      const Eigen::MatrixXd& next_obs, const Eigen::MatrixXd& z);

// Continuous-skill DIAYN posterior: the network predicts an unnormalised mean
// direction; log q(z|s) is kappa * mu_hat(s)^T z up to a constant.
class Discriminator {
 public:
  Discriminator() = default;
  Discriminator(int obs_dim, int skill_dim, const std::vector<int>& hidden, std::mt19937_64& rng,
                std::vector<int> rows = {});
  explicit Discriminator(Network net, std::vector<int> rows = {})
      : net_(std::move(net)), rows_(std::move(rows)) {}

  int skill_dim() const { return net_.output_dim(); }
  const Network& net() const { return net_; }
  Network& net() { return net_; }
  const std::vector<int>& rows() const { return rows_; }
  Eigen::MatrixXd select(const Eigen::MatrixXd& obs) const { return select_rows(obs, rows_); }

  // Unit mean directions, one column per observation.
  Eigen::MatrixXd mean_direction(const Eigen::MatrixXd& obs) const;

 private:
  Network net_;
  std::vector<int> rows_;
};

double diayn_reward(const Discriminator& disc, const Eigen::VectorXd& obs, const Eigen::VectorXd& z);
Eigen::VectorXd diayn_rewards(const Discriminator& disc, const Eigen::MatrixXd& obs,
                              const Eigen::MatrixXd& z);

// One ascent step on mean_i mu_hat(obs_i)^T z_i. Returns the mean alignment
// before the step.
double diayn_disc_update(Discriminator& disc, Adam& opt, const Eigen::MatrixXd& obs,
                         const Eigen::MatrixXd& z);

// Gradient of mean_i mu_hat(obs_i)^T z_i with respect to the discriminator
// parameters, plus the alignment value.
struct DiscObjective {
  double alignment = 0.0;
  GradientSet grads;
};
DiscObjective diayn_objective(const Discriminator& disc, const Eigen::MatrixXd& obs,
                              const Eigen::MatrixXd& z);

}  // namespace slim
