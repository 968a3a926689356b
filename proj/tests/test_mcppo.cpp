#include "slim/mcppo.hpp"
#include "slim/trainer.hpp"

#include "test_util.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

using namespace slim;

namespace {

Eigen::VectorXd vec(std::initializer_list<double> v) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out[i++] = x;
  return out;
}

Eigen::VectorXd mc_oracle(const Eigen::VectorXd& r, double gamma) {
  Eigen::VectorXd g = Eigen::VectorXd::Zero(r.size());
  for (Eigen::Index t = 0; t < r.size(); ++t)
    for (Eigen::Index j = t; j < r.size(); ++j) g[t] += std::pow(gamma, double(j - t)) * r[j];
  return g;
}

Eigen::VectorXd gae_oracle(const Eigen::VectorXd& r, const Eigen::VectorXd& v, double gamma,
                           double lam) {
  const Eigen::Index T = r.size();
  Eigen::VectorXd delta(T), a = Eigen::VectorXd::Zero(T);
  for (Eigen::Index t = 0; t < T; ++t) delta[t] = r[t] + gamma * v[t + 1] - v[t];
  for (Eigen::Index t = 0; t < T; ++t)
    for (Eigen::Index k = 0; t + k < T; ++k) a[t] += std::pow(gamma * lam, double(k)) * delta[t + k];
  return a;
}

RolloutSpec small_spec(int n_episodes, int T, std::uint64_t seed) {
  RolloutSpec spec;
  spec.env.episode_len = T;
  Rng rng(seed);
  SkillPrior prior;
  for (int e = 0; e < n_episodes; ++e) {
    spec.reset_seeds.push_back(seed * 100 + static_cast<std::uint64_t>(e));
    spec.schedules.push_back(make_schedule(rng, T, 2, prior));
  }
  return spec;
}

}  // namespace

TEST_CASE("mc returns") {
  CHECK(mc_returns(vec({1, 1, 1}), 1.0) == vec({3, 2, 1}));
  CHECK(mc_returns(vec({1, 0, 0}), 0.5) == vec({1, 0, 0}));
  std::mt19937_64 rng(1);
  std::normal_distribution<double> n;
  Eigen::VectorXd r(200);
  for (auto& x : r) x = n(rng);
  CHECK((mc_returns(r, 0.99) - mc_oracle(r, 0.99)).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("gae identities and direct-sum oracle") {
  std::mt19937_64 rng(2);
  std::normal_distribution<double> n;
  Eigen::VectorXd r(200), v(201);
  for (auto& x : r) x = n(rng);
  for (auto& x : v) x = n(rng);
  v[200] = 0.0;
  CHECK((gae(r, v, 0.99, 1.0) - (mc_returns(r, 0.99) - v.head(200))).cwiseAbs().maxCoeff() < 1e-10);
  Eigen::VectorXd td(200);
  for (int t = 0; t < 200; ++t) td[t] = r[t] + 0.99 * v[t + 1] - v[t];
  CHECK((gae(r, v, 0.99, 0.0) - td).cwiseAbs().maxCoeff() < 1e-12);
  v[200] = 0.7;  // non-terminal bootstrap
  CHECK((gae(r, v, 0.97, 0.9) - gae_oracle(r, v, 0.97, 0.9)).cwiseAbs().maxCoeff() < 1e-10);
  CHECK_THROWS(gae(r, Eigen::VectorXd::Zero(200), 0.99, 0.95));
}

TEST_CASE("advantage normalization") {
  const Eigen::VectorXd a = normalize_advantages(vec({1, 2, 3}));
  CHECK(a[0] == doctest::Approx(-1.2247).epsilon(1e-4));
  CHECK(a[1] == doctest::Approx(0.0));
  CHECK(a[2] == doctest::Approx(1.2247).epsilon(1e-4));
  CHECK(normalize_advantages(Eigen::VectorXd::Constant(5, 3.3)) == Eigen::VectorXd::Zero(5));

  std::mt19937_64 rng(3);
  std::normal_distribution<double> n(2.0, 5.0);
  Eigen::VectorXd x(1000);
  for (auto& v : x) v = n(rng);
  const Eigen::VectorXd nx = normalize_advantages(x);
  const double mean = nx.mean();
  const double sd = std::sqrt((nx.array() - mean).square().mean());
  CHECK(std::abs(mean) < 1e-6);
  CHECK(std::abs(sd - 1.0) < 1e-6);
  CHECK((normalize_advantages(4.0 * x) - nx).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((normalize_advantages(x.array() + 17.0) - nx).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("advantage combination") {
  std::map<Channel, Eigen::VectorXd> adv{{Channel::reach, vec({1})},
                                         {Channel::discovery, vec({-1})},
                                         {Channel::safety, vec({0})}};
  CombinationWeights w;
  CHECK(combine_advantages(adv, w)[0] == 0.0);

  std::map<Channel, Eigen::VectorXd> adv3{{Channel::reach, vec({1, 2})},
                                          {Channel::discovery, vec({3, -4})},
                                          {Channel::safety, vec({5, 6})}};
  w.omega[Channel::discovery] = 0.0;
  auto without = adv3;
  without.erase(Channel::discovery);
  CHECK(combine_advantages(adv3, w) == combine_advantages(without, CombinationWeights{}));
  w.omega[Channel::safety] = -1.0;
  CHECK_THROWS(w.validate());
}

TEST_CASE("scaling one channel never changes the preferred action (3-state tabular)") {
  // One-step decisions: 3 states x 2 actions visited uniformly. Values are the
  // exact uniform-policy fit V_c(s) = mean_a r_c(s, a).
  std::mt19937_64 rng(4);
  std::normal_distribution<double> n;
  std::uniform_real_distribution<double> scale(0.01, 100.0);
  auto preferred = [](const std::array<Eigen::VectorXd, 3>& r) {
    std::map<Channel, Eigen::VectorXd> adv;
    for (int c = 0; c < 3; ++c) {
      Eigen::VectorXd a(6);
      for (int s = 0; s < 3; ++s) {
        const double v = 0.5 * (r[c][2 * s] + r[c][2 * s + 1]);
        a[2 * s] = r[c][2 * s] - v;
        a[2 * s + 1] = r[c][2 * s + 1] - v;
      }
      adv[kAllChannels[c]] = normalize_advantages(a);
    }
    const Eigen::VectorXd comb = combine_advantages(adv, CombinationWeights{});
    std::array<int, 3> best{};
    for (int s = 0; s < 3; ++s) best[s] = comb[2 * s + 1] > comb[2 * s] ? 1 : 0;
    return best;
  };
  for (int trial = 0; trial < 500; ++trial) {
    std::array<Eigen::VectorXd, 3> r;
    for (auto& x : r) {
      x.resize(6);
      for (auto& v : x) v = n(rng);
    }
    const auto base = preferred(r);
    auto scaled = r;
    scaled[trial % 3] *= scale(rng);
    CHECK(preferred(scaled) == base);
  }
}

TEST_CASE("variants") {
  CHECK(AlgoVariant::from_tag("slim").critic_count() == 3);
  const AlgoVariant ur = AlgoVariant::from_tag("slim_ur");
  CHECK(ur.critic_mode == CriticMode::single_sum);
  CHECK(ur.reward_norm == RewardNorm::none);
  CHECK(ur.channels.size() == 3);
  const AlgoVariant nr = AlgoVariant::from_tag("slim_nr");
  CHECK(nr.reward_norm == RewardNorm::standardize);
  CHECK(nr.critic_count() == 1);
  const AlgoVariant nd = AlgoVariant::from_tag("no_discovery");
  CHECK(nd.critic_count() == 2);
  CHECK(nd.uses(Channel::reach));
  CHECK(nd.uses(Channel::safety));
  CHECK_FALSE(nd.uses(Channel::discovery));
  const AlgoVariant di = AlgoVariant::from_tag("diayn");
  CHECK(di.discovery == DiscoverySource::diayn);
  CHECK(di.channels == std::vector<Channel>{Channel::discovery});
  CHECK_THROWS_AS(AlgoVariant::from_tag("slim_xx"), std::invalid_argument);
  CHECK(AlgoVariant::tags().size() == 8);
}

TEST_CASE("critic reward routing") {
  RolloutBatch b;
  b.n_episodes = 1;
  b.horizon = 3;
  b.rewards.resize(3, 3);
  b.rewards << 1, 2, 3, 10, 20, 30, 0, -1, 0;
  b.obs.resize(kObsDim, 3);
  const auto slim = critic_rewards(AlgoVariant::from_tag("slim"), b);
  CHECK(slim.size() == 3);
  CHECK(slim.at("reach") == vec({1, 2, 3}));
  const auto ur = critic_rewards(AlgoVariant::from_tag("slim_ur"), b);
  CHECK(ur.at("sum") == vec({11, 21, 33}));
  const auto nr = critic_rewards(AlgoVariant::from_tag("slim_nr"), b);
  const Eigen::VectorXd expect = standardize_rewards(vec({1, 2, 3})) +
                                 standardize_rewards(vec({10, 20, 30})) +
                                 standardize_rewards(vec({0, -1, 0}));
  CHECK((nr.at("sum") - expect).cwiseAbs().maxCoeff() < 1e-12);
  CHECK(critic_rewards(AlgoVariant::from_tag("no_safety"), b).count("safety") == 0);
}

TEST_CASE("critic gradient matches finite differences") {
  std::mt19937_64 rng(5);
  Critic c(22, {16, 16}, 1e-3, rng);
  c.set_output_map(0.3, 2.0);
  const Eigen::MatrixXd X = Eigen::MatrixXd::Random(22, 10);
  const Eigen::VectorXd y = Eigen::VectorXd::Random(10);
  const Eigen::VectorXd analytic = c.loss_gradient(X, y).flatten();
  Critic probe = c;
  auto f = [&](const Eigen::VectorXd& p) {
    probe.net().set_flat_params(p);
    double loss = 0.0;
    probe.loss_gradient(X, y, &loss);
    return loss;
  };
  const Eigen::VectorXd numeric = test::numeric_gradient(f, c.net().flat_params());
  CHECK(test::max_rel_error(analytic, numeric) < 1e-4);
}

TEST_CASE("target statistics refit preserves the value function") {
  std::mt19937_64 rng(6);
  Critic c(5, {8}, 1e-3, rng);
  const Eigen::MatrixXd X = Eigen::MatrixXd::Random(5, 20);
  const Eigen::RowVectorXd before = c.value(X);
  c.update_target_stats(vec({100, 250, 400, -30}));
  CHECK((c.value(X) - before).cwiseAbs().maxCoeff() < 1e-9);
  CHECK(c.scale() > 1.0);
}

TEST_CASE("critics fit their targets and stay independent") {
  std::mt19937_64 rng(7);
  const Eigen::MatrixXd X = Eigen::MatrixXd::Random(22, 64);
  std::map<std::string, Eigen::VectorXd> targets{
      {"reach", (X.row(0).array() * 40.0 + 20.0).matrix().transpose()},
      {"discovery", X.row(1).transpose() * 0.1},
      {"safety", Eigen::VectorXd::Zero(64)}};
  CriticEnsemble ens;
  for (const auto& [k, _] : targets) ens.critics.emplace(k, Critic(22, {32, 32}, 1e-3, rng));
  for (auto& [k, c] : ens.critics) c.update_target_stats(targets.at(k));

  CriticEnsemble alone = ens;
  std::map<std::string, double> first, last;
  for (int i = 0; i < 50; ++i) {
    const auto losses = critic_update(ens, X, targets);
    if (i == 0) first = losses;
    last = losses;
  }
  for (const auto& [k, l] : first)
    if (l > 1e-12) CHECK(last.at(k) < l);
  // Updating one critic on its own gives the same parameters.
  for (auto& [k, c] : alone.critics) {
    CriticEnsemble single;
    single.critics.emplace(k, c);
    for (int i = 0; i < 50; ++i) critic_update(single, X, {{k, targets.at(k)}});
    CHECK(single.critics.at(k).net().flat_params() == ens.critics.at(k).net().flat_params());
  }
  CHECK(ens.critics.at("safety").value(X).cwiseAbs().maxCoeff() < 0.05);
}

TEST_CASE("rollout collection") {
  std::mt19937_64 init(8);
  Policy pi(kObsDim + 4, 4, PolicyHead::squashed_gripper, {16}, -0.5, init);
  ReprNet phi(kObsDim, 4, {16}, init);
  DiscoveryModel model{DiscoverySource::lsd, &phi, nullptr};

  RolloutSpec one = small_spec(1, 200, 1);
  std::mt19937_64 r1(9);
  const RolloutBatch b = collect_rollouts(pi, model, one, r1);
  CHECK(b.size() == 200);
  CHECK(b.done[199] == 1.0);
  CHECK(b.done.sum() == 1.0);
  CHECK(b.segment[99] == 0);
  CHECK(b.segment[100] == 1);

  RolloutSpec two = small_spec(3, 50, 2);
  std::mt19937_64 a(10), c(10);
  const RolloutBatch x = collect_rollouts(pi, model, two, a);
  const RolloutBatch y = collect_rollouts(pi, model, two, c);
  CHECK(x.obs == y.obs);
  CHECK(x.raw == y.raw);
  CHECK(x.rewards == y.rewards);
  CHECK(x.log_prob == y.log_prob);

  // Zero policy acting with its mode hovers at home: no safety penalty.
  Policy still = pi;
  still.set_flat_params(Eigen::VectorXd::Zero(static_cast<Eigen::Index>(pi.parameter_count())));
  RolloutSpec det = small_spec(2, 200, 3);
  det.deterministic = true;
  std::mt19937_64 d(11);
  const RolloutBatch h = collect_rollouts(still, model, det, d);
  CHECK(h.rewards.row(2).cwiseAbs().maxCoeff() == 0.0);
  CHECK(h.ee_pos.col(199) == EnvConfig{}.ee_home);

  // Discovery rewards telescope per segment.
  for (int e = 0; e < 2; ++e)
    for (const auto& seg : det.schedules[static_cast<std::size_t>(e)].segments) {
      const int i0 = e * 200 + seg.start, i1 = e * 200 + seg.end - 1;
      const double sum = h.rewards.row(1).segment(i0, seg.end - seg.start).sum();
      const Eigen::VectorXd dphi = phi.net().forward(Eigen::VectorXd(h.next_obs.col(i1))) -
                                   phi.net().forward(Eigen::VectorXd(h.obs.col(i0)));
      CHECK(std::abs(sum - dphi.dot(seg.z)) < 1e-6);
    }
}

TEST_CASE("surrogate gradient at ratio one is the policy gradient") {
  std::mt19937_64 rng(12);
  Policy pi(6, 2, PolicyHead::gaussian, {8}, -0.3, rng);
  Eigen::VectorXd p = pi.flat_params();
  std::normal_distribution<double> g(0.0, 0.3);
  for (Eigen::Index i = 0; i < p.size(); ++i) p[i] += g(rng);
  pi.set_flat_params(p);
  const int N = 16;
  const Eigen::MatrixXd X = Eigen::MatrixXd::Random(6, N);
  const auto samples = pi.sample(X, rng);
  Eigen::MatrixXd raw(2, N);
  for (int i = 0; i < N; ++i) raw.col(i) = samples[i].raw;
  const Policy::Batch batch = pi.evaluate(X);
  const Eigen::VectorXd lp = pi.log_prob(batch, raw);
  const Eigen::VectorXd A = Eigen::VectorXd::Random(N);

  const SurrogateGrad sg = surrogate_gradient(pi, X, raw, lp, A, 0.2, 0.0);
  const Eigen::VectorXd pg = pi.log_prob_gradient(batch, raw, A / N);
  CHECK((sg.grad + pg).cwiseAbs().maxCoeff() < 1e-12);
  CHECK(sg.clip_fraction == 0.0);

  // Positive advantage with the ratio already above 1 + eps contributes nothing.
  Eigen::VectorXd old = lp;
  old[0] -= 0.5;
  Eigen::VectorXd A0 = Eigen::VectorXd::Zero(N);
  A0[0] = 1.0;
  const SurrogateGrad clipped = surrogate_gradient(pi, X, raw, old, A0, 0.2, 0.0);
  CHECK(clipped.grad.cwiseAbs().maxCoeff() == 0.0);
  CHECK(clipped.clip_fraction > 0.0);
}

TEST_CASE("ppo improves a one-step bandit") {
  std::mt19937_64 rng(13);
  Policy pi(1, 1, PolicyHead::gaussian, {8}, -0.5, rng);
  Adam opt(pi.parameter_count(), 3e-3);
  PpoConfig cfg;
  const Eigen::MatrixXd X = Eigen::MatrixXd::Ones(1, 64);
  const double optimum = 0.8;
  const double start = pi.evaluate(X).mean(0, 0);
  for (int it = 0; it < 200; ++it) {
    const auto samples = pi.sample(X, rng);
    Eigen::MatrixXd raw(1, 64);
    Eigen::VectorXd lp(64), r(64);
    for (int i = 0; i < 64; ++i) {
      raw(0, i) = samples[i].raw[0];
      lp[i] = samples[i].log_prob;
      r[i] = -std::pow(raw(0, i) - optimum, 2);
    }
    ppo_update(pi, opt, X, raw, lp, normalize_advantages(r), cfg, rng);
  }
  const double end = pi.evaluate(X).mean(0, 0);
  CHECK(std::abs(end - optimum) < std::abs(start - optimum));
  CHECK(std::abs(end - optimum) < 0.1);
}

TEST_CASE("ppo rejects non-finite ratios") {
  std::mt19937_64 rng(14);
  Policy pi(1, 1, PolicyHead::gaussian, {4}, 0.0, rng);
  Adam opt(pi.parameter_count(), 1e-3);
  Eigen::VectorXd bad = Eigen::VectorXd::Constant(4, std::nan(""));
  CHECK_THROWS_AS(ppo_update(pi, opt, Eigen::MatrixXd::Ones(1, 4), Eigen::MatrixXd::Zero(1, 4), bad,
                             Eigen::VectorXd::Ones(4), PpoConfig{}, rng),
                  NumericalError);
}

TEST_CASE("training iterations are reproducible and normalize advantages") {
  ExperimentConfig cfg;
  cfg.train.n_envs = 4;
  cfg.train.n_iterations = 2;
  cfg.train.phi_steps = 2;
  cfg.train.phi_batch = 64;
  cfg.train.policy_hidden = {16};
  cfg.train.critic_hidden = {16};
  cfg.train.phi_hidden = {16};
  cfg.env.episode_len = 40;
  for (const std::string tag : {"slim", "slim_nr", "diayn", "no_safety"}) {
    SkillAgent a = make_agent(cfg, AlgoVariant::from_tag(tag));
    SkillAgent b = make_agent(cfg, AlgoVariant::from_tag(tag));
    for (int it = 0; it < 2; ++it) {
      const IterationMetrics ma = train_iteration(a, it);
      const IterationMetrics mb = train_iteration(b, it);
      CHECK(ma.to_json() == mb.to_json());
      CHECK(ma.env_steps == (it + 1) * 4 * 40);
    }
    CHECK(a.policy == b.policy);
    CHECK(a.critics.critics.size() == static_cast<std::size_t>(a.variant.critic_count()));
  }
}
