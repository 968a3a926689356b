#include "slim/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

namespace slim {

static_assert(std::endian::native == std::endian::little,
              "checkpoint payloads are written in host order and assume little-endian");

namespace {

std::int64_t element_count(const std::vector<std::int64_t>& shape) {
  std::int64_t n = 1;
  for (auto s : shape) {
    if (s < 0) throw CheckpointError("checkpoint: negative tensor extent");
    n *= s;
  }
  return n;
}

}  // namespace

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

void Checkpoint::put(const std::string& name, const Eigen::MatrixXd& m) {
  Tensor t;
  t.shape = {m.rows(), m.cols()};
  t.data.resize(m.size());
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c)
      t.data[r * m.cols() + c] = static_cast<float>(m(r, c));
  for (auto& [n, existing] : tensors_)
    if (n == name) {
      existing = std::move(t);
      return;
    }
  tensors_.emplace_back(name, std::move(t));
}

void Checkpoint::put_vector(const std::string& name, const Eigen::VectorXd& v) {
  put(name, Eigen::MatrixXd(v));
  for (auto& [n, t] : tensors_)
    if (n == name) t.shape = {v.size()};
}

bool Checkpoint::has(const std::string& name) const {
  for (const auto& [n, t] : tensors_)
    if (n == name) return true;
  return false;
}

const Tensor& Checkpoint::tensor(const std::string& name) const {
  for (const auto& [n, t] : tensors_)
    if (n == name) return t;
  throw CheckpointError("checkpoint: missing tensor '" + name + "'");
}

Eigen::MatrixXd Checkpoint::matrix(const std::string& name) const {
  const Tensor& t = tensor(name);
  const std::int64_t rows = t.shape.empty() ? 1 : t.shape[0];
  const std::int64_t cols = t.shape.size() < 2 ? 1 : t.shape[1];
  if (t.shape.size() > 2) throw CheckpointError("checkpoint: tensor '" + name + "' is not a matrix");
  Eigen::MatrixXd m(rows, cols);
  for (std::int64_t r = 0; r < rows; ++r)
    for (std::int64_t c = 0; c < cols; ++c) m(r, c) = t.data[r * cols + c];
  return m;
}

Eigen::VectorXd Checkpoint::vector(const std::string& name) const {
  const Eigen::MatrixXd m = matrix(name);
  return m.reshaped<Eigen::RowMajor>();
}

std::string Checkpoint::serialize() const {
  nlohmann::json meta;
  meta["kind"] = kind;
  meta["step"] = step;
  meta["config"] = config;
  meta["attrs"] = attrs;
  nlohmann::json dir = nlohmann::json::array();
  for (const auto& [name, t] : tensors_) dir.push_back({{"name", name}, {"shape", t.shape}});
  meta["tensors"] = dir;
  const std::string meta_text = meta.dump();

  std::string out(kCheckpointMagic);
  const std::uint64_t len = meta_text.size();
  char len_bytes[8];
  std::memcpy(len_bytes, &len, 8);
  out.append(len_bytes, 8);
  out += meta_text;
  for (const auto& [name, t] : tensors_)
    out.append(reinterpret_cast<const char*>(t.data.data()), t.data.size() * sizeof(float));
  return out;
}

Checkpoint Checkpoint::parse(std::string_view bytes) {
  if (bytes.size() < kCheckpointMagic.size() + 8 ||
      bytes.substr(0, kCheckpointMagic.size()) != kCheckpointMagic)
    throw CheckpointError("checkpoint: bad magic");
  std::size_t pos = kCheckpointMagic.size();
  std::uint64_t len = 0;
  std::memcpy(&len, bytes.data() + pos, 8);
  pos += 8;
  if (len > bytes.size() - pos) throw CheckpointError("checkpoint: truncated metadata");
  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(bytes.substr(pos, len));
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(std::string("checkpoint: bad metadata: ") + e.what());
  }
  pos += len;

  Checkpoint ck;
  try {
    ck.kind = meta.at("kind").get<std::string>();
    ck.step = meta.at("step").get<std::int64_t>();
    ck.config = meta.at("config");
    ck.attrs = meta.at("attrs");
    for (const auto& entry : meta.at("tensors")) {
      Tensor t;
      t.shape = entry.at("shape").get<std::vector<std::int64_t>>();
      const auto n = static_cast<std::size_t>(element_count(t.shape));
      if (n * sizeof(float) > bytes.size() - pos) throw CheckpointError("checkpoint: truncated payload");
      t.data.resize(n);
      std::memcpy(t.data.data(), bytes.data() + pos, n * sizeof(float));
      pos += n * sizeof(float);
      ck.tensors_.emplace_back(entry.at("name").get<std::string>(), std::move(t));
    }
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(std::string("checkpoint: bad metadata: ") + e.what());
  }
  if (pos != bytes.size()) throw CheckpointError("checkpoint: trailing bytes after payload");
  return ck;
}

void Checkpoint::save(const std::filesystem::path& path) const {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw CheckpointError("checkpoint: cannot write " + path.string());
  const std::string bytes = serialize();
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw CheckpointError("checkpoint: write failed for " + path.string());
}

Checkpoint Checkpoint::load(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw CheckpointError("checkpoint: cannot open " + path.string());
  std::ostringstream ss;
  ss << f.rdbuf();
  return parse(ss.str());
}

std::uint64_t Checkpoint::content_hash() const { return fnv1a64(serialize()); }

void put_network(Checkpoint& ck, const std::string& prefix, const Network& net) {
  nlohmann::json acts = nlohmann::json::array();
  for (std::size_t i = 0; i < net.layers().size(); ++i) {
    const auto& l = net.layers()[i];
    const std::string base = prefix + "/" + std::to_string(i);
    ck.put(base + "/weight", l.weight);
    ck.put_vector(base + "/bias", l.bias);
    if (net.spectral()) {
      ck.put_vector(base + "/sn_u", net.power_state()[i].u);
      ck.put_vector(base + "/sn_v", net.power_state()[i].v);
    }
    acts.push_back(l.act == Activation::tanh ? "tanh" : "identity");
  }
  ck.attrs[prefix] = {{"activations", acts}, {"spectral", net.spectral()}};
}

Network get_network(const Checkpoint& ck, const std::string& prefix) {
  if (!ck.attrs.contains(prefix)) throw CheckpointError("checkpoint: missing network '" + prefix + "'");
  const auto& info = ck.attrs.at(prefix);
  std::vector<Layer> layers;
  const auto& acts = info.at("activations");
  for (std::size_t i = 0; i < acts.size(); ++i) {
    const std::string base = prefix + "/" + std::to_string(i);
    Layer l;
    l.weight = ck.matrix(base + "/weight");
    l.bias = ck.vector(base + "/bias");
    l.act = acts[i].get<std::string>() == "tanh" ? Activation::tanh : Activation::identity;
    layers.push_back(std::move(l));
  }
  Network net;
  try {
    net = Network::from_layers(std::move(layers));
  } catch (const std::invalid_argument& e) {
    throw CheckpointError(std::string("checkpoint: ") + e.what());
  }
  if (info.at("spectral").get<bool>()) {
    net.enable_spectral();
    for (std::size_t i = 0; i < net.layers().size(); ++i) {
      const std::string base = prefix + "/" + std::to_string(i);
      net.power_state()[i].u = ck.vector(base + "/sn_u");
      net.power_state()[i].v = ck.vector(base + "/sn_v");
    }
  }
  return net;
}

void put_policy(Checkpoint& ck, const std::string& prefix, const Policy& policy) {
  put_network(ck, prefix + "/net", policy.net());
  ck.put_vector(prefix + "/log_std", policy.log_std());
  ck.attrs[prefix] = {{"head", policy.head() == PolicyHead::gaussian ? "gaussian" : "squashed_gripper"},
                      {"action_dim", policy.action_dim()}};
}

Policy get_policy(const Checkpoint& ck, const std::string& prefix) {
  if (!ck.attrs.contains(prefix)) throw CheckpointError("checkpoint: missing policy '" + prefix + "'");
  const auto& info = ck.attrs.at(prefix);
  const PolicyHead head = info.at("head").get<std::string>() == "gaussian"
                              ? PolicyHead::gaussian
                              : PolicyHead::squashed_gripper;
  const int action_dim = info.at("action_dim").get<int>();
  std::mt19937_64 unused(0);
  const Network net = get_network(ck, prefix + "/net");
  std::vector<int> hidden;
  for (std::size_t i = 0; i + 1 < net.layers().size(); ++i)
    hidden.push_back(static_cast<int>(net.layers()[i].weight.rows()));
  Policy p(net.input_dim(), action_dim, head, hidden, 0.0, unused);
  p.net() = net;
  p.set_log_std(ck.vector(prefix + "/log_std"));
  return p;
}

}  // namespace slim
