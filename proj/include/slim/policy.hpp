#pragma once

#include "slim/env.hpp"
#include "slim/network.hpp"

#include <Eigen/Core>

#include <random>

namespace slim {

inline constexpr double kLogStdMin = -5.0;
inline constexpr double kLogStdMax = 2.0;

struct PolicyOutput {
  Eigen::VectorXd mean;     // pre-squash
  Eigen::VectorXd log_std;  // clamped to [kLogStdMin, kLogStdMax]
  double gripper_logit = 0.0;
};

struct PolicySample {
  Action action;
  // Pre-squash continuous sample followed by the gripper bit (0/1).
  Eigen::VectorXd raw;
  double log_prob = 0.0;
};

// Samples delta = tanh(u), u ~ N(mean, std), and gripper ~ Bernoulli(sigmoid(logit)).
// log_prob includes the tanh change of variables and the Bernoulli log-mass.
PolicySample policy_sample(const PolicyOutput& out, std::mt19937_64& rng);

// log-density of a squashed-Gaussian + Bernoulli action given its raw encoding.
double squashed_log_prob(const PolicyOutput& out, const Eigen::VectorXd& raw);

// Numerically stable log(1 - tanh(u)^2).
double log1m_tanh_sq(double u);

enum class PolicyHead {
  squashed_gripper,  // low-level: tanh-Gaussian continuous part + gripper bit
  gaussian,          // high-level: plain diagonal Gaussian
};

// Stochastic policy: network for means (and the gripper logit), plus a
// state-independent log standard deviation.
class Policy {
 public:
  struct Batch {
    Network::Cache cache;
    Eigen::MatrixXd mean;      // action_dim x N
    Eigen::RowVectorXd logit;  // squashed_gripper only
  };

  Policy() = default;
  Policy(int input_dim, int action_dim, PolicyHead head, const std::vector<int>& hidden,
         double init_log_std, std::mt19937_64& rng);

  PolicyHead head() const { return head_; }
  int action_dim() const { return action_dim_; }
  int input_dim() const { return net_.input_dim(); }
  // Width of the stored raw action encoding.
  int raw_dim() const { return head_ == PolicyHead::squashed_gripper ? action_dim_ + 1 : action_dim_; }

  const Network& net() const { return net_; }
  Network& net() { return net_; }
  const Eigen::VectorXd& log_std() const { return log_std_; }
  void set_log_std(const Eigen::VectorXd& v);

  PolicyOutput output(const Eigen::VectorXd& input) const;
  Batch evaluate(const Eigen::MatrixXd& inputs) const;

  // Samples one action per column.
  std::vector<PolicySample> sample(const Eigen::MatrixXd& inputs, std::mt19937_64& rng) const;
  // Mode of the distribution: tanh(mean) and gripper = logit > 0.
  Action deterministic_action(const Eigen::VectorXd& input) const;

  // Log-probabilities of stored raw actions (one column each).
  Eigen::VectorXd log_prob(const Batch& b, const Eigen::MatrixXd& raw) const;

  // Flat gradient of sum_i w_i log pi(raw_i | input_i) + ent_weight * entropy
  // with respect to flat_params(). The entropy term is that of the pre-squash
  // Gaussian.
  Eigen::VectorXd log_prob_gradient(const Batch& b, const Eigen::MatrixXd& raw,
                                    const Eigen::VectorXd& w, double ent_weight = 0.0) const;

  std::size_t parameter_count() const { return net_.parameter_count() + log_std_.size(); }
  Eigen::VectorXd flat_params() const;
  void set_flat_params(const Eigen::Ref<const Eigen::VectorXd>& p);

  bool operator==(const Policy& o) const {
    return head_ == o.head_ && action_dim_ == o.action_dim_ && net_ == o.net_ &&
           log_std_ == o.log_std_;
  }

 private:
  PolicyHead head_ = PolicyHead::squashed_gripper;
  int action_dim_ = 0;
  Network net_;
  Eigen::VectorXd log_std_;
};

double sigmoid(double x);
// log(sigmoid(x)) without overflow.
double log_sigmoid(double x);

}  // namespace slim
