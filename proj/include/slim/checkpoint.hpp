#pragma once

#include "slim/network.hpp"
#include "slim/policy.hpp"

#include <json.hpp>

#include <Eigen/Core>

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace slim {

// On-disk layout:
//   "SLIMCKPT1"                 9-byte magic
//   uint64 little-endian        length of the metadata block in bytes
//   metadata                    UTF-8 JSON: kind, step, config, attrs, and the
//                               tensor directory [{name, shape}] in payload order
//   payload                     float32 little-endian, row-major, per tensor
inline constexpr std::string_view kCheckpointMagic = "SLIMCKPT1";

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Tensor {
  std::vector<std::int64_t> shape;
  std::vector<float> data;
};

class Checkpoint {
 public:
  std::string kind;
  std::int64_t step = 0;
  nlohmann::json config = nlohmann::json::object();
  nlohmann::json attrs = nlohmann::json::object();

  void put(const std::string& name, const Eigen::MatrixXd& m);
  void put_vector(const std::string& name, const Eigen::VectorXd& v);
  bool has(const std::string& name) const;
  const Tensor& tensor(const std::string& name) const;
  Eigen::MatrixXd matrix(const std::string& name) const;
  Eigen::VectorXd vector(const std::string& name) const;
  const std::vector<std::pair<std::string, Tensor>>& tensors() const { return tensors_; }

  std::string serialize() const;
  static Checkpoint parse(std::string_view bytes);

  void save(const std::filesystem::path& path) const;
  static Checkpoint load(const std::filesystem::path& path);

  // FNV-1a over the serialized bytes.
  std::uint64_t content_hash() const;

 private:
  std::vector<std::pair<std::string, Tensor>> tensors_;
};

std::uint64_t fnv1a64(std::string_view bytes);

void put_network(Checkpoint& ck, const std::string& prefix, const Network& net);
Network get_network(const Checkpoint& ck, const std::string& prefix);

void put_policy(Checkpoint& ck, const std::string& prefix, const Policy& policy);
Policy get_policy(const Checkpoint& ck, const std::string& prefix);

}  // namespace slim
