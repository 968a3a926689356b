#include "slim/policy.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace slim {

namespace {

const double kHalfLog2Pi = 0.5 * std::log(2.0 * std::numbers::pi);

double gaussian_log_density(double u, double mean, double log_std) {
  const double z = (u - mean) * std::exp(-log_std);
  return -0.5 * z * z - log_std - kHalfLog2Pi;
}

}  // namespace

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double log_sigmoid(double x) {
  if (x >= 0) return -std::log1p(std::exp(-x));
  return x - std::log1p(std::exp(x));
}

double log1m_tanh_sq(double u) {
  const double a = std::abs(u);
  return 2.0 * (std::numbers::ln2 - a - std::log1p(std::exp(-2.0 * a)));
}

double squashed_log_prob(const PolicyOutput& out, const Eigen::VectorXd& raw) {
  const Eigen::Index n = out.mean.size();
  if (raw.size() != n + 1) throw std::invalid_argument("policy: raw action size mismatch");
  double lp = 0.0;
  for (Eigen::Index j = 0; j < n; ++j)
    lp += gaussian_log_density(raw[j], out.mean[j], out.log_std[j]) - log1m_tanh_sq(raw[j]);
  const bool closed = raw[n] > 0.5;
  lp += closed ? log_sigmoid(out.gripper_logit) : log_sigmoid(-out.gripper_logit);
  return lp;
}

PolicySample policy_sample(const PolicyOutput& out, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  const Eigen::Index n = out.mean.size();
  PolicySample s;
  s.raw.resize(n + 1);
  for (Eigen::Index j = 0; j < n; ++j)
    s.raw[j] = out.mean[j] + std::exp(out.log_std[j]) * normal(rng);
  const bool closed = unif(rng) < sigmoid(out.gripper_logit);
  s.raw[n] = closed ? 1.0 : 0.0;
  s.action.delta = s.raw.head(4).array().tanh();
  s.action.gripper = closed;
  s.log_prob = squashed_log_prob(out, s.raw);
  return s;
}

Policy::Policy(int input_dim, int action_dim, PolicyHead head, const std::vector<int>& hidden,
               double init_log_std, std::mt19937_64& rng)
    : head_(head), action_dim_(action_dim) {
  if (head == PolicyHead::squashed_gripper && action_dim != 4)
    throw std::invalid_argument("policy: the squashed gripper head drives a 4-D delta");
  std::vector<int> sizes{input_dim};
  sizes.insert(sizes.end(), hidden.begin(), hidden.end());
  sizes.push_back(head == PolicyHead::squashed_gripper ? action_dim + 1 : action_dim);
  net_ = Network(sizes, Activation::tanh, false, rng, 0.01);
  log_std_ = Eigen::VectorXd::Constant(action_dim, init_log_std);
}

void Policy::set_log_std(const Eigen::VectorXd& v) {
  if (v.size() != action_dim_) throw std::invalid_argument("policy: log_std size mismatch");
  log_std_ = v.cwiseMax(kLogStdMin).cwiseMin(kLogStdMax);
}

PolicyOutput Policy::output(const Eigen::VectorXd& input) const {
  const Eigen::VectorXd y = net_.forward(input);
  PolicyOutput o;
  o.mean = y.head(action_dim_);
  o.log_std = log_std_;
  if (head_ == PolicyHead::squashed_gripper) o.gripper_logit = y[action_dim_];
  return o;
}

Policy::Batch Policy::evaluate(const Eigen::MatrixXd& inputs) const {
  Batch b;
  const Eigen::MatrixXd y = net_.forward(inputs, b.cache);
  b.mean = y.topRows(action_dim_);
  if (head_ == PolicyHead::squashed_gripper) b.logit = y.row(action_dim_);
  return b;
}

std::vector<PolicySample> Policy::sample(const Eigen::MatrixXd& inputs, std::mt19937_64& rng) const {
  const Batch b = evaluate(inputs);
  std::vector<PolicySample> out;
  out.reserve(inputs.cols());
  std::normal_distribution<double> normal(0.0, 1.0);
  for (Eigen::Index i = 0; i < inputs.cols(); ++i) {
    PolicyOutput o;
    o.mean = b.mean.col(i);
    o.log_std = log_std_;
    if (head_ == PolicyHead::squashed_gripper) {
      o.gripper_logit = b.logit[i];
      out.push_back(policy_sample(o, rng));
    } else {
      PolicySample s;
      s.raw.resize(action_dim_);
      s.log_prob = 0.0;
      for (int j = 0; j < action_dim_; ++j) {
        s.raw[j] = o.mean[j] + std::exp(log_std_[j]) * normal(rng);
        s.log_prob += gaussian_log_density(s.raw[j], o.mean[j], log_std_[j]);
      }
      out.push_back(std::move(s));
    }
  }
  return out;
}

Action Policy::deterministic_action(const Eigen::VectorXd& input) const {
  if (head_ != PolicyHead::squashed_gripper)
    throw std::logic_error("policy: deterministic_action needs the squashed gripper head");
  const PolicyOutput o = output(input);
  Action a;
  a.delta = o.mean.array().tanh();
  a.gripper = o.gripper_logit > 0.0;
  return a;
}

Eigen::VectorXd Policy::log_prob(const Batch& b, const Eigen::MatrixXd& raw) const {
  if (raw.rows() != raw_dim() || raw.cols() != b.mean.cols())
    throw std::invalid_argument("policy: raw action batch shape mismatch");
  const Eigen::Index n = raw.cols();
  Eigen::VectorXd lp = Eigen::VectorXd::Zero(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    double s = 0.0;
    for (int j = 0; j < action_dim_; ++j) {
      s += gaussian_log_density(raw(j, i), b.mean(j, i), log_std_[j]);
      if (head_ == PolicyHead::squashed_gripper) s -= log1m_tanh_sq(raw(j, i));
    }
    if (head_ == PolicyHead::squashed_gripper)
      s += raw(action_dim_, i) > 0.5 ? log_sigmoid(b.logit[i]) : log_sigmoid(-b.logit[i]);
    lp[i] = s;
  }
  return lp;
}

Eigen::VectorXd Policy::log_prob_gradient(const Batch& b, const Eigen::MatrixXd& raw,
                                          const Eigen::VectorXd& w, double ent_weight) const {
  const Eigen::Index n = raw.cols();
  if (w.size() != n || raw.rows() != raw_dim())
    throw std::invalid_argument("policy: gradient weight shape mismatch");
  const Eigen::ArrayXd inv_var = (-2.0 * log_std_).array().exp();
  Eigen::MatrixXd upstream(net_.output_dim(), n);
  Eigen::VectorXd g_log_std = Eigen::VectorXd::Constant(action_dim_, ent_weight);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (int j = 0; j < action_dim_; ++j) {
      const double diff = raw(j, i) - b.mean(j, i);
      upstream(j, i) = w[i] * diff * inv_var[j];
      g_log_std[j] += w[i] * (diff * diff * inv_var[j] - 1.0);
    }
    if (head_ == PolicyHead::squashed_gripper)
      upstream(action_dim_, i) = w[i] * (raw(action_dim_, i) - sigmoid(b.logit[i]));
  }
  const GradientSet g = net_.backward(b.cache, upstream);
  Eigen::VectorXd out(parameter_count());
  out.head(net_.parameter_count()) = g.flatten();
  out.tail(action_dim_) = g_log_std;
  return out;
}

Eigen::VectorXd Policy::flat_params() const {
  Eigen::VectorXd p(parameter_count());
  p.head(net_.parameter_count()) = net_.flat_params();
  p.tail(action_dim_) = log_std_;
  return p;
}

void Policy::set_flat_params(const Eigen::Ref<const Eigen::VectorXd>& p) {
  if (static_cast<std::size_t>(p.size()) != parameter_count())
    throw std::invalid_argument("policy: flat parameter size mismatch");
  net_.set_flat_params(p.head(net_.parameter_count()));
  set_log_std(p.tail(action_dim_));
}

}  // namespace slim
