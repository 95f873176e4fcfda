// SPDX-License-Identifier: Apache-2.0
//
// Binary checkpoint format, little-endian throughout:
//
//   "WYNR"  u32 version  u32 array_count
//   per array:
//     u16 name_length  name (UTF-8)  u8 dtype  u8 rank  u64 dims[rank]
//     payload  u32 crc32(name .. payload)
//
// dtype 0 is 64-bit float, dtype 1 is raw bytes (rank 1). Parameter arrays use
// the model's parameter names; metadata arrays start with "__": the model
// spec and the experiment config as JSON bytes, and the marginal-encoder
// readiness flags.
#pragma once

#include <cstdint>
#include <string>

#include "wyner/models.hpp"

namespace wyner {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  Model model;
  std::string config_json;
};

void save_checkpoint(const Model& model, const std::string& config_json, const std::string& path);
/// Throws VersionMismatch for a foreign magic or version and CorruptCheckpoint
/// for truncation, checksum failures or arrays that do not fit the model.
Checkpoint load_checkpoint(const std::string& path);

}  // namespace wyner
