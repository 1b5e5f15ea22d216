#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "aeanet/config.hpp"
#include "aeanet/model.hpp"

namespace aeanet {

// Everything needed to resume a run: parameters (refs included), Adam moments,
// the step counter and the configuration that produced them.
struct Checkpoint {
  ModelConfig model;
  ParameterSet<float> params;
  ParameterSet<float> adam_m;
  ParameterSet<float> adam_v;
  std::uint64_t step = 0;
  // Full run configuration as key-value text; its FNV-1a hash is stored too.
  std::string config_text;

  std::uint64_t config_hash() const { return fnv1a64(config_text); }
};

// Binary container: "AEAN", u32 version, u32 entry count, then entries sorted
// by name. Each entry: u32 name length, UTF-8 name, u8 dtype (0 f32, 1 f64,
// 2 u64, 3 bytes), u32 rank, u64 extents, raw little-endian values.
std::string encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(const std::string& bytes, const std::string& origin = "<memory>");

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace aeanet
