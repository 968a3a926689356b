#include "slim/network.hpp"

#include "test_util.hpp"

#include <Eigen/SVD>
#include <doctest.h>

#include <cmath>
#include <random>

using namespace slim;

namespace {

// Independent re-evaluation: plain loops, no Eigen products.
Eigen::VectorXd oracle_forward(const Network& net, const Eigen::VectorXd& x) {
  Eigen::VectorXd h = x;
  for (std::size_t l = 0; l < net.layers().size(); ++l) {
    const Eigen::MatrixXd W = net.effective_weight(l);
    const Eigen::VectorXd& b = net.layers()[l].bias;
    Eigen::VectorXd y(W.rows());
    for (Eigen::Index i = 0; i < W.rows(); ++i) {
      double acc = b[i];
      for (Eigen::Index j = 0; j < W.cols(); ++j) acc += W(i, j) * h[j];
      y[i] = net.layers()[l].act == Activation::tanh ? std::tanh(acc) : acc;
    }
    h = y;
  }
  return h;
}

double top_singular(const Eigen::MatrixXd& m) {
  return Eigen::JacobiSVD<Eigen::MatrixXd>(m).singularValues()[0];
}

}  // namespace

TEST_CASE("zero weights pass the last bias through") {
  std::mt19937_64 rng(0);
  Network net({3, 5, 2}, Activation::tanh, false, rng);
  for (auto& l : net.layers()) l.weight.setZero();
  net.layers().back().bias << 0.25, -1.5;
  const Eigen::VectorXd y = net.forward(Eigen::VectorXd(Eigen::VectorXd::Random(3)));
  CHECK(y[0] == 0.25);
  CHECK(y[1] == -1.5);
}

TEST_CASE("identity single layer") {
  Layer l{Eigen::MatrixXd::Identity(3, 3), Eigen::VectorXd::Zero(3), Activation::identity};
  const Network net = Network::from_layers({l});
  Eigen::VectorXd x(3);
  x << 1.0, -2.0, 3.5;
  CHECK(net.forward(x) == x);
}

TEST_CASE("forward matches a hand-rolled oracle") {
  std::mt19937_64 rng(1);
  for (bool spectral : {false, true}) {
    Network net({6, 7, 5}, Activation::tanh, spectral, rng);
    for (auto& l : net.layers()) l.bias.setRandom();
    const Eigen::MatrixXd X = Eigen::MatrixXd::Random(6, 9);
    const Eigen::MatrixXd Y = net.forward(X);
    for (int c = 0; c < 9; ++c) {
      const Eigen::VectorXd o = oracle_forward(net, X.col(c));
      CHECK((Y.col(c) - o).cwiseAbs().maxCoeff() < 1e-12);
      CHECK((net.forward(Eigen::VectorXd(X.col(c))) - o).cwiseAbs().maxCoeff() < 1e-12);
    }
  }
}

TEST_CASE("linear 1x1 gradient is the input") {
  Layer l{Eigen::MatrixXd::Constant(1, 1, 0.7), Eigen::VectorXd::Zero(1), Activation::identity};
  const Network net = Network::from_layers({l});
  Eigen::MatrixXd x(1, 1);
  x << 2.5;
  const GradientSet g = net.backward(x, Eigen::MatrixXd::Ones(1, 1));
  CHECK(g.weight[0](0, 0) == doctest::Approx(2.5));
  CHECK(g.bias[0][0] == doctest::Approx(1.0));
}

TEST_CASE("zero upstream gives zero gradients") {
  std::mt19937_64 rng(2);
  Network net({4, 8, 3}, Activation::tanh, true, rng);
  const GradientSet g = net.backward(Eigen::MatrixXd::Random(4, 5), Eigen::MatrixXd::Zero(3, 5));
  CHECK(g.flatten().cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("backward matches central finite differences") {
  for (bool spectral : {false, true}) {
    std::mt19937_64 rng(spectral ? 4 : 3);
    Network net({5, 6, 6, 3}, Activation::tanh, spectral, rng);
    for (auto& l : net.layers()) l.bias.setRandom() *= 0.1;
    const Eigen::MatrixXd X = Eigen::MatrixXd::Random(5, 10);
    const Eigen::MatrixXd U = Eigen::MatrixXd::Random(3, 10);
    const Eigen::VectorXd analytic = net.backward(X, U).flatten();
    Network probe = net;
    auto f = [&](const Eigen::VectorXd& p) {
      probe.set_flat_params(p);
      return (U.array() * probe.forward(X).array()).sum();
    };
    const Eigen::VectorXd numeric = test::numeric_gradient(f, net.flat_params());
    CHECK(analytic.size() == static_cast<Eigen::Index>(net.parameter_count()));
    CHECK(test::max_rel_error(analytic, numeric) < 1e-4);
  }
}

TEST_CASE("forward and backward are bit-reproducible") {
  std::mt19937_64 a(9), b(9);
  Network n1({4, 16, 2}, Activation::tanh, true, a), n2({4, 16, 2}, Activation::tanh, true, b);
  CHECK(n1 == n2);
  const Eigen::MatrixXd X = Eigen::MatrixXd::Random(4, 7), U = Eigen::MatrixXd::Random(2, 7);
  CHECK(n1.forward(X) == n2.forward(X));
  CHECK(n1.backward(X, U).flatten() == n2.backward(X, U).flatten());
}

TEST_CASE("spectral normalization of diag(3, 1)") {
  Eigen::MatrixXd W = Eigen::MatrixXd::Zero(2, 2);
  W(0, 0) = 3.0;
  W(1, 1) = 1.0;
  PowerIterState st;
  st.u = Eigen::VectorXd::Ones(2).normalized();
  st.v = Eigen::VectorXd::Ones(2).normalized();
  const Eigen::MatrixXd N = spectral_normalize(W, 20, st);
  CHECK(std::abs(N(0, 0) - 1.0) < 1e-6);
  CHECK(std::abs(N(1, 1) - 1.0 / 3.0) < 1e-6);
  CHECK(std::abs(N(0, 1)) < 1e-12);

  // Already unit spectral norm: unchanged.
  Eigen::MatrixXd R(2, 2);
  R << std::cos(0.3), -std::sin(0.3), std::sin(0.3), std::cos(0.3);
  PowerIterState s2{Eigen::VectorXd::Ones(2).normalized(), Eigen::VectorXd::Ones(2).normalized()};
  CHECK((spectral_normalize(R, 20, s2) - R).cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("spectral normalization bounds random matrices under dense SVD") {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> n(0.0, 2.0);
  for (int trial = 0; trial < 20; ++trial) {
    Eigen::MatrixXd W(7 + trial % 5, 4 + trial % 3);
    for (Eigen::Index i = 0; i < W.size(); ++i) W.data()[i] = n(rng);
    PowerIterState st;
    st.u = Eigen::VectorXd::Ones(W.rows()).normalized();
    st.v = Eigen::VectorXd::Ones(W.cols()).normalized();
    const Eigen::MatrixXd N = spectral_normalize(W, 50, st);
    CHECK(top_singular(N) <= 1.0 + 1e-3);
    CHECK(sigma_estimate(W, st) == doctest::Approx(top_singular(W)).epsilon(1e-3));
  }
}

TEST_CASE("spectral tanh network is 1-Lipschitz") {
  std::mt19937_64 rng(6);
  Network net({18, 64, 64, 4}, Activation::tanh, true, rng);
  for (std::size_t l = 0; l < net.layers().size(); ++l)
    CHECK(top_singular(net.effective_weight(l)) <= 1.0 + 1e-3);
  std::normal_distribution<double> n;
  for (int i = 0; i < 2000; ++i) {
    Eigen::VectorXd a(18), b(18);
    for (int k = 0; k < 18; ++k) {
      a[k] = n(rng);
      b[k] = a[k] + 0.1 * n(rng);
    }
    CHECK((net.forward(a) - net.forward(b)).norm() <= (a - b).norm() * (1.0 + 1e-2));
  }
}

TEST_CASE("flat parameter round trip") {
  std::mt19937_64 rng(7);
  Network net({3, 4, 2}, Activation::tanh, false, rng);
  const Eigen::VectorXd p = net.flat_params();
  Network other({3, 4, 2}, Activation::tanh, false, rng);
  other.set_flat_params(p);
  CHECK(other.flat_params() == p);
  CHECK(other.forward(Eigen::VectorXd(Eigen::VectorXd::Ones(3))) == net.forward(Eigen::VectorXd(Eigen::VectorXd::Ones(3))));
  // Order: layer 0 weight (row-major) then bias.
  CHECK(p[1] == net.layers()[0].weight(0, 1));
  CHECK(p[12] == net.layers()[0].bias[0]);
}

TEST_CASE("adam descends a quadratic and clipping caps the norm") {
  Eigen::VectorXd x = Eigen::VectorXd::Constant(3, 5.0);
  Adam opt(3, 0.1);
  for (int i = 0; i < 500; ++i) opt.step(x, 2.0 * x);
  CHECK(x.norm() < 0.1);

  Eigen::VectorXd g(2);
  g << 3.0, 4.0;
  CHECK(clip_grad_norm(g, 1.0) == doctest::Approx(5.0));
  CHECK(g.norm() == doctest::Approx(1.0));

  Eigen::VectorXd y = Eigen::VectorXd::Ones(4);
  Adam frozen(4, 0.0);
  frozen.step(y, Eigen::VectorXd::Ones(4));
  CHECK(y == Eigen::VectorXd::Ones(4));
}
