#include "slim/network.hpp"

#include <cmath>
#include <stdexcept>

namespace slim {

namespace {

constexpr double kSigmaFloor = 1e-12;

void normalize_or_keep(Eigen::VectorXd& x) {
  const double n = x.norm();
  if (n > kSigmaFloor) x /= n;
}

void one_power_iteration(const Eigen::MatrixXd& w, PowerIterState& s) {
  Eigen::VectorXd v = w.transpose() * s.u;
  normalize_or_keep(v);
  Eigen::VectorXd u = w * v;
  normalize_or_keep(u);
  // A zero matrix leaves the previous estimate in place.
  if (v.norm() > 0.5) s.v = v;
  if (u.norm() > 0.5) s.u = u;
}

PowerIterState initial_power_state(const Eigen::MatrixXd& w) {
  std::mt19937_64 rng(0x5eedULL + static_cast<std::uint64_t>(w.rows() * 131 + w.cols()));
  std::normal_distribution<double> n(0.0, 1.0);
  PowerIterState s;
  s.u = Eigen::VectorXd(w.rows());
  s.v = Eigen::VectorXd(w.cols());
  for (Eigen::Index i = 0; i < s.u.size(); ++i) s.u[i] = n(rng);
  for (Eigen::Index i = 0; i < s.v.size(); ++i) s.v[i] = n(rng);
  s.u.normalize();
  s.v.normalize();
  return s;
}

void apply_activation(Eigen::MatrixXd& a, Activation act) {
  if (act == Activation::tanh) a = a.array().tanh();
}

}  // namespace

GradientSet& GradientSet::operator+=(const GradientSet& o) {
  if (o.weight.size() != weight.size()) throw std::invalid_argument("gradient: shape mismatch");
  for (std::size_t i = 0; i < weight.size(); ++i) {
    weight[i] += o.weight[i];
    bias[i] += o.bias[i];
  }
  return *this;
}

GradientSet& GradientSet::operator*=(double s) {
  for (std::size_t i = 0; i < weight.size(); ++i) {
    weight[i] *= s;
    bias[i] *= s;
  }
  return *this;
}

Eigen::VectorXd GradientSet::flatten() const {
  std::size_t n = 0;
  for (std::size_t i = 0; i < weight.size(); ++i) n += weight[i].size() + bias[i].size();
  Eigen::VectorXd out(n);
  Eigen::Index k = 0;
  for (std::size_t i = 0; i < weight.size(); ++i) {
    out.segment(k, weight[i].size()) = weight[i].reshaped<Eigen::RowMajor>();
    k += weight[i].size();
    out.segment(k, bias[i].size()) = bias[i];
    k += bias[i].size();
  }
  return out;
}

double sigma_estimate(const Eigen::MatrixXd& weight, const PowerIterState& state) {
  const double s = state.u.dot(weight * state.v);
  return std::max(s, kSigmaFloor);
}

Eigen::MatrixXd spectral_normalize(const Eigen::MatrixXd& weight, int n_power_iters,
                                   PowerIterState& state) {
  if (n_power_iters < 1) throw std::invalid_argument("spectral_normalize: need >= 1 iteration");
  if (state.u.size() != weight.rows() || state.v.size() != weight.cols())
    state = initial_power_state(weight);
  for (int i = 0; i < n_power_iters; ++i) one_power_iteration(weight, state);
  return weight / sigma_estimate(weight, state);
}

Network::Network(const std::vector<int>& sizes, Activation hidden, bool spectral,
                 std::mt19937_64& rng, double out_gain) {
  if (sizes.size() < 2) throw std::invalid_argument("network: need at least input and output sizes");
  std::normal_distribution<double> normal(0.0, 1.0);
  for (std::size_t i = 0; i + 1 < sizes.size(); ++i) {
    Layer l;
    const int in = sizes[i], out = sizes[i + 1];
    const bool last = i + 2 == sizes.size();
    // LeCun-normal initialisation.
    const double scale = (last ? out_gain : 1.0) / std::sqrt(static_cast<double>(in));
    l.weight.resize(out, in);
    for (Eigen::Index r = 0; r < l.weight.rows(); ++r)
      for (Eigen::Index c = 0; c < l.weight.cols(); ++c) l.weight(r, c) = scale * normal(rng);
    l.bias = Eigen::VectorXd::Zero(out);
    l.act = last ? Activation::identity : hidden;
    layers_.push_back(std::move(l));
  }
  if (spectral) enable_spectral();
}

Network Network::from_layers(std::vector<Layer> layers) {
  for (std::size_t i = 0; i < layers.size(); ++i) {
    if (layers[i].bias.size() != layers[i].weight.rows())
      throw std::invalid_argument("network: bias size does not match weight rows");
    if (i > 0 && layers[i].weight.cols() != layers[i - 1].weight.rows())
      throw std::invalid_argument("network: layer dimensions do not chain");
  }
  Network n;
  n.layers_ = std::move(layers);
  return n;
}

void Network::enable_spectral() {
  spectral_ = true;
  power_.clear();
  for (const auto& l : layers_) {
    PowerIterState s = initial_power_state(l.weight);
    for (int k = 0; k < 50; ++k) one_power_iteration(l.weight, s);
    power_.push_back(std::move(s));
  }
}

Eigen::MatrixXd Network::effective_weight(std::size_t i) const {
  const auto& w = layers_.at(i).weight;
  if (!spectral_) return w;
  return w / sigma_estimate(w, power_[i]);
}

Eigen::VectorXd Network::forward(const Eigen::VectorXd& x) const {
  return forward(Eigen::MatrixXd(x)).col(0);
}

Eigen::MatrixXd Network::forward(const Eigen::MatrixXd& x) const {
  Cache c;
  return forward(x, c);
}

Eigen::MatrixXd Network::forward(const Eigen::MatrixXd& x, Cache& cache) const {
  if (x.rows() != input_dim()) throw std::invalid_argument("network: input dimension mismatch");
  cache.activations.resize(layers_.size() + 1);
  cache.weights.clear();
  cache.activations[0] = x;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const auto& l = layers_[i];
    Eigen::MatrixXd a;
    if (spectral_) {
      cache.weights.push_back(effective_weight(i));
      a.noalias() = cache.weights.back() * cache.activations[i];
    } else {
      a.noalias() = l.weight * cache.activations[i];
    }
    a.colwise() += l.bias;
    apply_activation(a, l.act);
    cache.activations[i + 1] = std::move(a);
  }
  return cache.activations.back();
}

GradientSet Network::backward(const Cache& cache, const Eigen::MatrixXd& upstream) const {
  if (cache.activations.size() != layers_.size() + 1)
    throw std::invalid_argument("network: cache does not belong to this network");
  if (upstream.rows() != output_dim() || upstream.cols() != cache.activations.back().cols())
    throw std::invalid_argument("network: upstream shape mismatch");
  GradientSet g;
  g.weight.resize(layers_.size());
  g.bias.resize(layers_.size());
  Eigen::MatrixXd delta = upstream;
  for (std::size_t k = layers_.size(); k-- > 0;) {
    const auto& l = layers_[k];
    if (l.act == Activation::tanh)
      delta.array() *= 1.0 - cache.activations[k + 1].array().square();
    g.weight[k].noalias() = delta * cache.activations[k].transpose();
    g.bias[k] = delta.rowwise().sum();
    if (k > 0) {
      const Eigen::MatrixXd& w = spectral_ ? cache.weights[k] : l.weight;
      Eigen::MatrixXd next;
      next.noalias() = w.transpose() * delta;
      delta = std::move(next);
    }
    if (spectral_) {
      // d(W / u^T W v)/dW applied to the effective-weight gradient.
      const double sigma = sigma_estimate(l.weight, power_[k]);
      const double inner = (g.weight[k].array() * cache.weights[k].array()).sum();
      g.weight[k] = (g.weight[k] - inner * power_[k].u * power_[k].v.transpose()) / sigma;
    }
  }
  return g;
}

GradientSet Network::backward(const Eigen::MatrixXd& x, const Eigen::MatrixXd& upstream) const {
  Cache c;
  forward(x, c);
  return backward(c, upstream);
}

void Network::power_iterate(int n_iters) {
  if (!spectral_) return;
  for (std::size_t i = 0; i < layers_.size(); ++i)
    for (int k = 0; k < n_iters; ++k) one_power_iteration(layers_[i].weight, power_[i]);
}

GradientSet Network::zero_gradient() const {
  GradientSet g;
  for (const auto& l : layers_) {
    g.weight.push_back(Eigen::MatrixXd::Zero(l.weight.rows(), l.weight.cols()));
    g.bias.push_back(Eigen::VectorXd::Zero(l.bias.size()));
  }
  return g;
}

std::size_t Network::parameter_count() const {
  std::size_t n = 0;
  for (const auto& l : layers_) n += l.weight.size() + l.bias.size();
  return n;
}

Eigen::VectorXd Network::flat_params() const {
  Eigen::VectorXd out(parameter_count());
  Eigen::Index k = 0;
  for (const auto& l : layers_) {
    out.segment(k, l.weight.size()) = l.weight.reshaped<Eigen::RowMajor>();
    k += l.weight.size();
    out.segment(k, l.bias.size()) = l.bias;
    k += l.bias.size();
  }
  return out;
}

void Network::set_flat_params(const Eigen::Ref<const Eigen::VectorXd>& p) {
  if (static_cast<std::size_t>(p.size()) != parameter_count())
    throw std::invalid_argument("network: flat parameter size mismatch");
  Eigen::Index k = 0;
  for (auto& l : layers_) {
    l.weight.reshaped<Eigen::RowMajor>() = p.segment(k, l.weight.size());
    k += l.weight.size();
    l.bias = p.segment(k, l.bias.size());
    k += l.bias.size();
  }
}

bool Network::operator==(const Network& o) const {
  if (layers_.size() != o.layers_.size() || spectral_ != o.spectral_) return false;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const auto &a = layers_[i], &b = o.layers_[i];
    if (a.act != b.act || a.weight.rows() != b.weight.rows() || a.weight.cols() != b.weight.cols())
      return false;
    if (a.weight != b.weight || a.bias != b.bias) return false;
  }
  return true;
}

Adam::Adam(std::size_t n, double lr, double beta1, double beta2, double eps)
    : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps),
      m_(Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n))),
      v_(Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n))) {}

void Adam::step(Eigen::Ref<Eigen::VectorXd> params, const Eigen::VectorXd& grad) {
  if (grad.size() != params.size() || grad.size() != m_.size())
    throw std::invalid_argument("adam: size mismatch");
  ++t_;
  m_ = beta1_ * m_ + (1.0 - beta1_) * grad;
  v_ = beta2_ * v_ + (1.0 - beta2_) * grad.cwiseAbs2();
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  params.array() -= lr_ * (m_.array() / c1) / ((v_.array() / c2).sqrt() + eps_);
}

double clip_grad_norm(Eigen::VectorXd& grad, double max_norm) {
  const double n = grad.norm();
  if (n > max_norm && n > 0.0) grad *= max_norm / n;
  return n;
}

}  // namespace slim
