#pragma once

#include <filesystem>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "restorer/nn/tensor.hpp"

namespace restorer::nn {

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Binary layout (little endian):
//   "RSTRCKPT" u32 version, u64 header length, header JSON,
//   u64 tensor count, then per tensor: u32 name length, name, u8 dtype
//   (0 = f32, 1 = f64), u32 rank, u64 dims[rank], raw values.
struct Checkpoint {
  using Entry = std::variant<Tensor<float>, Tensor<double>>;

  nlohmann::json header = nlohmann::json::object();
  std::vector<std::pair<std::string, Entry>> tensors;

  void add(std::string name, Entry t) { tensors.emplace_back(std::move(name), std::move(t)); }
  const Entry* find(const std::string& name) const;
  /// Throws CheckpointError if missing or of another dtype.
  template <typename T>
  const Tensor<T>& get(const std::string& name) const;
};

/// Writes to a temporary file and renames it into place.
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace restorer::nn
