#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace multifuse {

struct NamedTensorData {
  std::string name;
  std::vector<std::uint32_t> dims;
  std::vector<float> data;
};

// Binary container: magic "ADMM", u32 version=1, u32 tensor count, then per
// tensor {u32 name length, name bytes, u8 rank, u32 dims..., f32 data}.
// All integers and floats little-endian.
void save_checkpoint(const std::string& path, const std::vector<NamedTensorData>& tensors);
std::vector<NamedTensorData> load_checkpoint(const std::string& path);

}  // namespace multifuse
