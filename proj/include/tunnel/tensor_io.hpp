#pragma once

// Flat tensor container, little-endian:
//   "TTNS" | u32 version | u32 count
//   per entry: u32 name_len | name | u8 dtype (0 = f32) | u32 rank | u64 extents[rank] | f32 payload
// Payloads are row-major.

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "tunnel/tensor.hpp"

namespace tunnel {

inline constexpr std::uint32_t kTensorFileVersion = 1;

using NamedTensors = std::vector<std::pair<std::string, Tensor>>;

std::string encode_tensors(const NamedTensors& entries);
NamedTensors decode_tensors(const std::string& bytes);

}  // namespace tunnel
