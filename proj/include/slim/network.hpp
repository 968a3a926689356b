#pragma once

#include <Eigen/Core>

#include <random>
#include <vector>

namespace slim {

enum class Activation { identity, tanh };

struct Layer {
  Eigen::MatrixXd weight;  // out x in
  Eigen::VectorXd bias;
  Activation act = Activation::identity;
};

// Persistent singular-vector estimate for one weight matrix.
struct PowerIterState {
  Eigen::VectorXd u;  // left, size out
  Eigen::VectorXd v;  // right, size in
};

// Per-parameter partial derivatives, congruent with Network::layers.
struct GradientSet {
  std::vector<Eigen::MatrixXd> weight;
  std::vector<Eigen::VectorXd> bias;

  GradientSet& operator+=(const GradientSet& o);
  GradientSet& operator*=(double s);
  Eigen::VectorXd flatten() const;
};

// Returns weight / sigma where sigma is the power-iteration estimate of the
// largest singular value, floored at 1e-12. `state` is advanced in place by
// n_power_iters iterations and reused across calls.
Eigen::MatrixXd spectral_normalize(const Eigen::MatrixXd& weight, int n_power_iters,
                                   PowerIterState& state);

// Rayleigh estimate u^T W v of the top singular value, floored at 1e-12.
double sigma_estimate(const Eigen::MatrixXd& weight, const PowerIterState& state);

// Fully connected feed-forward stack. Batched calls take one sample per column.
class Network {
 public:
  struct Cache {
    std::vector<Eigen::MatrixXd> activations;  // inputs to each layer, then output
    std::vector<Eigen::MatrixXd> weights;      // effective weights (spectral nets only)
  };

  Network() = default;
  // sizes = {in, h1, ..., out}; hidden layers use `hidden`, the last layer is
  // identity. The last layer's initial weights are scaled by `out_gain`.
  Network(const std::vector<int>& sizes, Activation hidden, bool spectral, std::mt19937_64& rng,
          double out_gain = 1.0);

  int input_dim() const { return layers_.empty() ? 0 : static_cast<int>(layers_.front().weight.cols()); }
  int output_dim() const { return layers_.empty() ? 0 : static_cast<int>(layers_.back().weight.rows()); }
  bool spectral() const { return spectral_; }

  const std::vector<Layer>& layers() const { return layers_; }
  std::vector<Layer>& layers() { return layers_; }
  const std::vector<PowerIterState>& power_state() const { return power_; }
  std::vector<PowerIterState>& power_state() { return power_; }

  // Builds a network from explicit layers (no spectral normalization unless
  // enable_spectral is called).
  static Network from_layers(std::vector<Layer> layers);
  // Turns on spectral normalization with a deterministic initial estimate.
  void enable_spectral();

  // Weight actually applied in forward: W / sigma_hat for spectral nets.
  Eigen::MatrixXd effective_weight(std::size_t i) const;

  Eigen::VectorXd forward(const Eigen::VectorXd& x) const;
  Eigen::MatrixXd forward(const Eigen::MatrixXd& x) const;
  Eigen::MatrixXd forward(const Eigen::MatrixXd& x, Cache& cache) const;

  // Gradients of sum_columns(upstream^T forward(x)) with respect to every
  // parameter, using the activations recorded in `cache`.
  GradientSet backward(const Cache& cache, const Eigen::MatrixXd& upstream) const;
  GradientSet backward(const Eigen::MatrixXd& x, const Eigen::MatrixXd& upstream) const;

  // Advances every layer's singular-vector estimate (spectral nets only).
  void power_iterate(int n_iters);

  GradientSet zero_gradient() const;
  std::size_t parameter_count() const;
  Eigen::VectorXd flat_params() const;
  void set_flat_params(const Eigen::Ref<const Eigen::VectorXd>& p);

  bool operator==(const Network& o) const;

 private:
  std::vector<Layer> layers_;
  bool spectral_ = false;
  std::vector<PowerIterState> power_;
};

// Adam over a flat parameter vector.
class Adam {
 public:
  Adam() = default;
  Adam(std::size_t n, double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);

  // Descends along `grad`.
  void step(Eigen::Ref<Eigen::VectorXd> params, const Eigen::VectorXd& grad);
  double lr() const { return lr_; }
  void set_lr(double lr) { lr_ = lr; }

 private:
  double lr_ = 3e-4, beta1_ = 0.9, beta2_ = 0.999, eps_ = 1e-8;
  long t_ = 0;
  Eigen::VectorXd m_, v_;
};

// Rescales grad to at most max_norm in Euclidean norm; returns the original norm.
double clip_grad_norm(Eigen::VectorXd& grad, double max_norm);

}  // namespace slim
