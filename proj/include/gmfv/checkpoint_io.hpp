#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "gmfv/errors.hpp"

namespace gmfv {

// Container of named float32 tensors, one GMFV-style record per entry:
//   magic "GMFC", u32 version (= 1), u32 entry count, then per entry
//   u32 name length, name bytes, u8 rank (1..3), 3 zero bytes,
//   rank x u32 dims, row-major float32 payload. Little-endian throughout.
struct NamedTensor {
  std::string name;
  std::uint8_t rank = 1;
  std::array<std::uint32_t, 3> dims{0, 0, 0};
  std::vector<float> data;
};

void write_tensor_container(const std::vector<NamedTensor>& tensors,
                            const std::filesystem::path& path);
std::vector<NamedTensor> read_tensor_container(const std::filesystem::path& path);

}  // namespace gmfv
