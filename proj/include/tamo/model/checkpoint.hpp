#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "tamo/core/tensor.hpp"
#include "tamo/model/model.hpp"

namespace tamo::model {

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Binary layout (little-endian): "TAMO", u32 version, u64 metadata length,
/// metadata JSON, u32 tensor count, then per tensor u32 name length, name,
/// u8 dtype, u32 rank, u64 dims, payload; finally a SHA-256 of all preceding bytes.
struct Checkpoint {
  ModelConfig config;
  nlohmann::json metadata = nlohmann::json::object();  // stored next to the model config
  std::vector<std::pair<std::string, core::TensorF>> tensors;

  const core::TensorF* find(const std::string& name) const;
};

std::vector<unsigned char> encode_checkpoint(const Checkpoint& ckpt);
/// Throws FormatError on bad magic, version, truncation or checksum mismatch.
Checkpoint decode_checkpoint(std::span<const unsigned char> bytes);

/// Writes through a temporary file and renames, so an interrupted save leaves
/// the previous file intact.
void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Snapshot of the model parameters (tensor names "param/<name>").
Checkpoint make_checkpoint(const Model& model, nlohmann::json metadata = nlohmann::json::object());
/// Rebuilds the model, checking every parameter against the shapes implied by
/// the stored config; errors name the offending tensor.
Model model_from_checkpoint(const Checkpoint& ckpt);

void save_model(const Model& model, const std::filesystem::path& path);
Model load_model(const std::filesystem::path& path);

}  // namespace tamo::model
