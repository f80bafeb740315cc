#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "marscost/net.hpp"

namespace marscost {

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Binary layout, all integers and floats little-endian:
///   "MARSCKPT" | u32 version | u32 max_points_per_pillar | u32 tensor_count
///   per tensor: u32 name_len | name bytes | u32 ndim | u64 dims[ndim] | f64 data[prod(dims)]
std::string encode_checkpoint(const ModelParams& params);
ModelParams decode_checkpoint(const std::string& bytes);

void save_checkpoint(const ModelParams& params, const std::filesystem::path& path);
ModelParams load_checkpoint(const std::filesystem::path& path);

}  // namespace marscost
