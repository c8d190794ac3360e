#pragma once

#include "pfd/tensor.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace pfd::nn {

// Binary layout (little-endian):
//   magic "PFDCKPT\0" | u32 version | u32 len + config digest bytes |
//   u32 tensor count | per tensor: u32 len + name, u64 rows, u64 cols,
//   rows*cols f64 in row-major order.
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct NamedTensor {
  std::string name;
  Mat value;
};

struct Checkpoint {
  std::uint32_t version = kCheckpointVersion;
  std::string config_digest;
  std::vector<NamedTensor> tensors;

  const Mat* find(const std::string& name) const;
  // Throws ContractError when absent or shaped differently from dst.
  void copy_into(const std::string& name, Mat& dst) const;
};

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace pfd::nn
