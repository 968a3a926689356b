#include "slim/discovery.hpp"
#include "slim/env.hpp"
#include "slim/rewards.hpp"
#include "slim/skills.hpp"

#include "test_util.hpp"

#include <Eigen/SVD>
#include <doctest.h>

#include <cmath>
#include <random>

using namespace slim;

namespace {

Eigen::MatrixXd random_skills(std::mt19937_64& rng, int d, int n) {
  Eigen::MatrixXd z(d, n);
  for (int i = 0; i < n; ++i) z.col(i) = sample_skill(rng, d, 0.0, Eigen::VectorXd::Unit(d, 0));
  return z;
}

ReprNet linear_phi(int d) {
  Layer l{Eigen::MatrixXd::Identity(d, d), Eigen::VectorXd::Zero(d), Activation::identity};
  return ReprNet(Network::from_layers({l}));
}

}  // namespace

TEST_CASE("phi loss on degenerate batches") {
  std::mt19937_64 rng(1);
  ReprNet phi(kObsDim, 4, {16, 16}, rng);
  const Eigen::MatrixXd obs = Eigen::MatrixXd::Random(kObsDim, 8);
  const PhiLoss same = phi_loss_and_grads(phi, obs, obs, random_skills(rng, 4, 8));
  CHECK(same.loss == 0.0);
  CHECK(same.grads.flatten().cwiseAbs().maxCoeff() < 1e-15);

  const ReprNet id = linear_phi(4);
  Eigen::MatrixXd z(4, 1);
  z << 0.5, 0.5, -0.5, 0.5;
  const PhiLoss one = phi_loss_and_grads(id, Eigen::MatrixXd::Zero(4, 1), z, z);
  CHECK(one.loss == doctest::Approx(-1.0));
}

TEST_CASE("phi gradient matches finite differences") {
  std::mt19937_64 rng(2);
  ReprNet phi(kObsDim, 4, {16, 16}, rng);
  const Eigen::MatrixXd obs = Eigen::MatrixXd::Random(kObsDim, 10);
  const Eigen::MatrixXd next = obs + 0.3 * Eigen::MatrixXd::Random(kObsDim, 10);
  const Eigen::MatrixXd z = random_skills(rng, 4, 10);
  const Eigen::VectorXd analytic = phi_loss_and_grads(phi, obs, next, z).grads.flatten();
  ReprNet probe = phi;
  auto f = [&](const Eigen::VectorXd& p) {
    probe.net().set_flat_params(p);
    return phi_loss_and_grads(probe, obs, next, z).loss;
  };
  CHECK(test::max_rel_error(analytic, test::numeric_gradient(f, phi.net().flat_params())) < 1e-4);
}

TEST_CASE("phi rewards go through the shared reward function") {
  std::mt19937_64 rng(3);
  ReprNet phi(kObsDim, 4, {16}, rng);
  const Eigen::MatrixXd obs = Eigen::MatrixXd::Random(kObsDim, 5);
  const Eigen::MatrixXd next = Eigen::MatrixXd::Random(kObsDim, 5);
  const Eigen::MatrixXd z = random_skills(rng, 4, 5);
  const Eigen::VectorXd r = phi_discovery_rewards(phi, obs, next, z);
  const Eigen::MatrixXd a = phi.embed(obs), b = phi.embed(next);
  for (int i = 0; i < 5; ++i) CHECK(r[i] == discovery_reward(a.col(i), b.col(i), z.col(i)));
}

TEST_CASE("phi training lowers the loss and keeps the Lipschitz bound") {
  std::mt19937_64 rng(4);
  ReprNet phi(kObsDim, 4, {32, 32}, rng);
  Adam opt(phi.net().parameter_count(), 5e-4);
  const int n = 256;
  const Eigen::MatrixXd obs = Eigen::MatrixXd::Random(kObsDim, n);
  const Eigen::MatrixXd z = random_skills(rng, 4, n);
  Eigen::MatrixXd next = obs;
  next.topRows(4) += 0.5 * z;  // displacement aligned with the skill
  double first = 0.0, last = 0.0;
  int violations = 0;
  double prev = 1e9;
  for (int i = 0; i < 100; ++i) {
    const double loss = phi_update(phi, opt, obs, next, z);
    if (i == 0) first = loss;
    if (loss > prev) ++violations;
    prev = last = loss;
  }
  CHECK(last < first);
  CHECK(violations <= 5);
  // Verification-time refresh of the singular-vector estimates.
  phi.net().power_iterate(50);
  for (std::size_t l = 0; l < phi.net().layers().size(); ++l)
    CHECK(Eigen::JacobiSVD<Eigen::MatrixXd>(phi.net().effective_weight(l)).singularValues()[0] <=
          1.0 + 1e-3);
  std::normal_distribution<double> g;
  for (int i = 0; i < 1000; ++i) {
    Eigen::VectorXd a(kObsDim), b(kObsDim);
    for (int k = 0; k < kObsDim; ++k) {
      a[k] = g(rng);
      b[k] = g(rng);
    }
    CHECK((phi.net().forward(a) - phi.net().forward(b)).norm() <= (a - b).norm() * 1.01);
  }
}

TEST_CASE("diayn reward extremes and vMF ordering") {
  const int d = 4;
  Layer l{Eigen::MatrixXd::Identity(d, d), Eigen::VectorXd::Zero(d), Activation::identity};
  const Discriminator disc(Network::from_layers({l}));
  Eigen::VectorXd z(d), perp(d);
  z << 0.5, 0.5, 0.5, 0.5;
  perp << 0.5, -0.5, 0.5, -0.5;
  CHECK(diayn_reward(disc, 3.0 * z, z) == doctest::Approx(1.0));
  CHECK(diayn_reward(disc, perp, z) == doctest::Approx(0.0));

  // Reward ordering equals vMF log-density ordering for fixed kappa.
  std::mt19937_64 rng(5);
  const double kappa = 4.0;
  const double log_c = std::log(kappa) - 2.0 * std::log(2.0 * M_PI) - std::log(std::cyl_bessel_i(1.0, kappa));
  for (int i = 0; i < 200; ++i) {
    const Eigen::VectorXd s1 = Eigen::VectorXd::Random(d), s2 = Eigen::VectorXd::Random(d);
    const double r1 = diayn_reward(disc, s1, z), r2 = diayn_reward(disc, s2, z);
    const double l1 = log_c + kappa * s1.normalized().dot(z);
    const double l2 = log_c + kappa * s2.normalized().dot(z);
    CHECK((r1 < r2) == (l1 < l2));
  }
}

TEST_CASE("discriminator gradient matches finite differences") {
  std::mt19937_64 rng(6);
  Discriminator disc(kObsDim, 4, {16, 16}, rng);
  Eigen::VectorXd p = disc.net().flat_params();
  std::normal_distribution<double> g(0.0, 0.2);
  for (Eigen::Index i = 0; i < p.size(); ++i) p[i] += g(rng);
  disc.net().set_flat_params(p);
  const Eigen::MatrixXd obs = Eigen::MatrixXd::Random(kObsDim, 10);
  const Eigen::MatrixXd z = random_skills(rng, 4, 10);
  const DiscObjective obj = diayn_objective(disc, obs, z);
  Discriminator probe = disc;
  auto f = [&](const Eigen::VectorXd& q) {
    probe.net().set_flat_params(q);
    return diayn_rewards(probe, obs, z).mean();
  };
  CHECK(obj.alignment == doctest::Approx(diayn_rewards(disc, obs, z).mean()));
  CHECK(test::max_rel_error(obj.grads.flatten(), test::numeric_gradient(f, p)) < 1e-4);
}

TEST_CASE("discriminator overfits a deterministic obs-to-skill batch") {
  std::mt19937_64 rng(7);
  const int n = 128;
  const Eigen::MatrixXd z = random_skills(rng, 4, n);
  Eigen::MatrixXd obs = 0.05 * Eigen::MatrixXd::Random(kObsDim, n);
  obs.middleRows(6, 4) += 0.1 * z;  // obs carries the skill in the object-position slots
  Discriminator disc(kObsDim, 4, {32, 32}, rng);
  Adam opt(disc.net().parameter_count(), 3e-3);
  std::vector<double> trace;
  for (int i = 0; i < 400; ++i) trace.push_back(diayn_disc_update(disc, opt, obs, z));
  CHECK(diayn_rewards(disc, obs, z).mean() > 0.9);
  int drops = 0;
  for (int i = 1; i < 100; ++i) drops += trace[i] < trace[i - 1] ? 1 : 0;
  CHECK(drops <= 5);

  Adam frozen(disc.net().parameter_count(), 0.0);
  const Eigen::VectorXd before = disc.net().flat_params();
  diayn_disc_update(disc, frozen, obs, z);
  CHECK(disc.net().flat_params() == before);
}

TEST_CASE("object-only input ignores the robot slots") {
  std::mt19937_64 rng(8);
  const std::vector<int> rows = discovery_rows(DiscoveryInput::object);
  CHECK(rows == std::vector<int>{6, 7, 8, 9, 10});
  CHECK(discovery_rows(DiscoveryInput::full).empty());
  CHECK(discovery_input_from_string("object") == DiscoveryInput::object);
  CHECK_THROWS_AS(discovery_input_from_string("robot"), std::invalid_argument);

  ReprNet phi(kObsDim, 4, {16}, rng, rows);
  Discriminator disc(kObsDim, 4, {16}, rng, rows);
  CHECK(phi.net().input_dim() == 5);
  const Eigen::MatrixXd obs = Eigen::MatrixXd::Random(kObsDim, 6);
  Eigen::MatrixXd moved = obs;
  moved.topRows(6) = Eigen::MatrixXd::Random(6, 6);  // ee pose and gripper
  moved.bottomRows(7) = Eigen::MatrixXd::Random(7, 6);  // velocities and grasp flag
  CHECK(phi.embed(obs) == phi.embed(moved));
  CHECK(disc.mean_direction(obs) == disc.mean_direction(moved));
  CHECK(phi.embed(obs) == phi.net().forward(Eigen::MatrixXd(obs.middleRows(6, 5))));

  // Gradients still match finite differences through the selection.
  const Eigen::MatrixXd next = obs + 0.2 * Eigen::MatrixXd::Random(kObsDim, 6);
  const Eigen::MatrixXd z = random_skills(rng, 4, 6);
  ReprNet probe = phi;
  auto f = [&](const Eigen::VectorXd& p) {
    probe.net().set_flat_params(p);
    return phi_loss_and_grads(probe, obs, next, z).loss;
  };
  CHECK(test::max_rel_error(phi_loss_and_grads(phi, obs, next, z).grads.flatten(),
                            test::numeric_gradient(f, phi.net().flat_params())) < 1e-4);
}
