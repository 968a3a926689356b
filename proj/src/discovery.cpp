#include "slim/discovery.hpp"

#include "slim/rewards.hpp"

#include <stdexcept>

namespace slim {

namespace {

std::vector<int> layer_sizes(int in, const std::vector<int>& hidden, int out) {
  std::vector<int> s{in};
  s.insert(s.end(), hidden.begin(), hidden.end());
  s.push_back(out);
  return s;
}

void check_batch(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, const Eigen::MatrixXd& z,
                 int skill_dim) {
  if (a.cols() == 0) throw std::invalid_argument("discovery: empty batch");
  if (a.rows() != b.rows() || a.cols() != b.cols() || z.cols() != a.cols())
    throw std::invalid_argument("discovery: batch shape mismatch");
  if (z.rows() != skill_dim) throw std::invalid_argument("discovery: skill dimension mismatch");
}

int input_width(int obs_dim, const std::vector<int>& rows) {
  for (int r : rows)
    if (r < 0 || r >= obs_dim) throw std::invalid_argument("discovery: input row out of range");
  return rows.empty() ? obs_dim : static_cast<int>(rows.size());
}

}  // namespace

DiscoveryInput discovery_input_from_string(const std::string& s) {
  if (s == "full") return DiscoveryInput::full;
  if (s == "object") return DiscoveryInput::object;
  throw std::invalid_argument("unknown discovery input '" + s + "' (expected full or object)");
}

const char* discovery_input_name(DiscoveryInput in) {
  return in == DiscoveryInput::full ? "full" : "object";
}

std::vector<int> discovery_rows(DiscoveryInput in) {
  if (in == DiscoveryInput::full) return {};
  return {6, 7, 8, 9, 10};  // obj_pos, sin/cos obj_yaw
}

Eigen::MatrixXd select_rows(const Eigen::MatrixXd& obs, const std::vector<int>& rows) {
  if (rows.empty()) return obs;
  Eigen::MatrixXd out(static_cast<Eigen::Index>(rows.size()), obs.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = obs.row(rows[i]);
  return out;
}

ReprNet::ReprNet(int obs_dim, int skill_dim, const std::vector<int>& hidden, std::mt19937_64& rng,
                 std::vector<int> rows)
    : net_(layer_sizes(input_width(obs_dim, rows), hidden, skill_dim), Activation::tanh, true, rng),
      rows_(std::move(rows)) {}

ReprNet::ReprNet(Network net, std::vector<int> rows) : net_(std::move(net)), rows_(std::move(rows)) {
  if (!net_.spectral()) net_.enable_spectral();
}

PhiLoss phi_loss_and_grads(const ReprNet& repr, const Eigen::MatrixXd& obs,
                           const Eigen::MatrixXd& next_obs, const Eigen::MatrixXd& z) {
  check_batch(obs, next_obs, z, repr.skill_dim());
  const double n = static_cast<double>(obs.cols());
  Network::Cache c0, c1;
  const Eigen::MatrixXd p0 = repr.net().forward(repr.select(obs), c0);
  const Eigen::MatrixXd p1 = repr.net().forward(repr.select(next_obs), c1);
  PhiLoss out;
  out.loss = -((p1 - p0).cwiseProduct(z)).sum() / n;
  out.grads = repr.net().backward(c1, -z / n);
  out.grads += repr.net().backward(c0, z / n);
  return out;
}

double phi_update(ReprNet& repr, Adam& opt, const Eigen::MatrixXd& obs,
                  const Eigen::MatrixXd& next_obs, const Eigen::MatrixXd& z) {
  repr.net().power_iterate(1);
  const PhiLoss l = phi_loss_and_grads(repr, obs, next_obs, z);
  Eigen::VectorXd p = repr.net().flat_params();
  opt.step(p, l.grads.flatten());
  repr.net().set_flat_params(p);
  return l.loss;
}

Eigen::VectorXd phi_discovery_rewards(const ReprNet& repr, const Eigen::MatrixXd& obs,
                                      const Eigen::MatrixXd& next_obs, const Eigen::MatrixXd& z) {
  check_batch(obs, next_obs, z, repr.skill_dim());
  const Eigen::MatrixXd p0 = repr.embed(obs);
  const Eigen::MatrixXd p1 = repr.embed(next_obs);
  Eigen::VectorXd r(obs.cols());
  for (Eigen::Index i = 0; i < obs.cols(); ++i)
    r[i] = discovery_reward(p0.col(i), p1.col(i), z.col(i));
  return r;
}

Discriminator::Discriminator(int obs_dim, int skill_dim, const std::vector<int>& hidden,
                             std::mt19937_64& rng, std::vector<int> rows)
    : net_(layer_sizes(input_width(obs_dim, rows), hidden, skill_dim), Activation::tanh, false, rng),
      rows_(std::move(rows)) {}

Eigen::MatrixXd Discriminator::mean_direction(const Eigen::MatrixXd& obs) const {
  Eigen::MatrixXd y = net_.forward(select(obs));
  for (Eigen::Index i = 0; i < y.cols(); ++i) {
    const double n = y.col(i).norm();
    y.col(i) /= std::max(n, 1e-12);
  }
  return y;
}

double diayn_reward(const Discriminator& disc, const Eigen::VectorXd& obs, const Eigen::VectorXd& z) {
  return diayn_rewards(disc, Eigen::MatrixXd(obs), Eigen::MatrixXd(z))[0];
}

Eigen::VectorXd diayn_rewards(const Discriminator& disc, const Eigen::MatrixXd& obs,
                              const Eigen::MatrixXd& z) {
  if (z.rows() != disc.skill_dim() || z.cols() != obs.cols())
    throw std::invalid_argument("discovery: skill batch shape mismatch");
  const Eigen::MatrixXd mu = disc.mean_direction(obs);
  return mu.cwiseProduct(z).colwise().sum().transpose();
}

DiscObjective diayn_objective(const Discriminator& disc, const Eigen::MatrixXd& obs,
                              const Eigen::MatrixXd& z) {
  if (obs.cols() == 0) throw std::invalid_argument("discovery: empty batch");
  if (z.rows() != disc.skill_dim() || z.cols() != obs.cols())
    throw std::invalid_argument("discovery: skill batch shape mismatch");
  const double n = static_cast<double>(obs.cols());
  Network::Cache cache;
  const Eigen::MatrixXd y = disc.net().forward(disc.select(obs), cache);
  Eigen::MatrixXd upstream(y.rows(), y.cols());
  DiscObjective out;
  for (Eigen::Index i = 0; i < y.cols(); ++i) {
    const double norm = std::max(y.col(i).norm(), 1e-12);
    const Eigen::VectorXd mu = y.col(i) / norm;
    const double a = mu.dot(z.col(i));
    out.alignment += a / n;
    // d(mu^T z)/dy = (z - mu (mu^T z)) / |y|
    upstream.col(i) = (z.col(i) - a * mu) / (norm * n);
  }
  out.grads = disc.net().backward(cache, upstream);
  return out;
}

double diayn_disc_update(Discriminator& disc, Adam& opt, const Eigen::MatrixXd& obs,
                         const Eigen::MatrixXd& z) {
  DiscObjective obj = diayn_objective(disc, obs, z);
  obj.grads *= -1.0;  // ascent
  Eigen::VectorXd p = disc.net().flat_params();
  opt.step(p, obj.grads.flatten());
  disc.net().set_flat_params(p);
  return obj.alignment;
}

}  // namespace slim
