#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "panet/tensor.hpp"

namespace panet {

/// On-disk layout, all integers little-endian:
///
///   "PANETCKP" | u32 version | u64 config digest | u32 len + config text
///   u32 meta count   | { u32 len + key | u64 value } ...
///   u32 tensor count | { u32 len + path | u32 rank | u64 dims[rank] | f32 values[] } ...
///   u32 crc32 of every preceding byte
struct Checkpoint {
  static constexpr std::uint32_t kVersion = 1;

  std::uint64_t config_digest = 0;
  std::string config_text;
  std::map<std::string, std::uint64_t> meta;
  std::vector<std::pair<std::string, Tensor<float>>> tensors;

  const Tensor<float>* find(std::string_view path) const noexcept;
  std::uint64_t meta_or(std::string_view key, std::uint64_t fallback) const;
};

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt);
/// Throws CheckpointError on bad magic, unknown version, truncation or a
/// checksum mismatch.
Checkpoint decode_checkpoint(const std::vector<std::uint8_t>& bytes);

/// Writes atomically via a temporary file in the same directory.
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace panet
