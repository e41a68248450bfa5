#pragma once

#include <filesystem>
#include <optional>
#include <string>

#include "htl/model.hpp"

namespace htl {

/// Binary layout, little-endian throughout:
///   "HTLCKPT1"
///   config: n_layers, n_heads, d_model, d_ff, vocab_size, max_seq_len (u32), seed (u64)
///   u32 parameter count, then per parameter:
///     u32 name length, name bytes, u32 rank, u64 extents[rank], f64 values
///   u8 value-head flag; when 1: the value weight and bias as above
///   u32 CRC-32 of every preceding byte
std::string serialize_checkpoint(const Model& model, bool include_value_head = true);

/// Throws CheckpointError on bad magic, checksum mismatch, truncation,
/// unknown or misshapen parameters, or a config differing from `expected`.
Model deserialize_checkpoint(std::string_view bytes, const std::optional<ModelConfig>& expected = std::nullopt);

void save_checkpoint(const Model& model, const std::filesystem::path& path, bool include_value_head = true);
Model load_checkpoint(const std::filesystem::path& path, const std::optional<ModelConfig>& expected = std::nullopt);

}  // namespace htl
