#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include <json.hpp>

#include "tamo/core/rng.hpp"

namespace tamo::model {

enum class Activation { relu, gelu };

std::string activation_name(Activation a);
Activation activation_from_name(const std::string& name);

struct ModelConfig {
  std::size_t d_e = 64;
  std::size_t embed_layers = 4;    // L, per-observation transformer layers
  std::size_t encoder_layers = 4;  // B1
  std::size_t decoder_layers = 4;  // B2
  std::size_t heads = 4;
  std::size_t ff_width = 256;
  std::size_t components = 20;  // K
  std::size_t head_layers = 3;  // hidden layers of each head MLP
  std::size_t pool_x = 4;
  std::size_t pool_y = 3;
  double scale_floor = 1e-4;
  bool with_replacement = false;  // reuse positional tokens when a dimension count exceeds its pool
  Activation mlp_activation = Activation::relu;  // embedder, time and head MLPs
  Activation ff_activation = Activation::gelu;   // transformer feed-forward blocks

  /// Throws ConfigError on an unusable configuration.
  void validate() const;
};

nlohmann::json to_json(const ModelConfig& cfg);
/// Missing keys keep their defaults; unknown keys are rejected.
ModelConfig model_config_from_json(const nlohmann::json& j);

/// Pool indices of the positional tokens used for each input and output dimension.
struct PosAssignment {
  std::vector<std::size_t> x;
  std::vector<std::size_t> y;
};

PosAssignment sample_assignment(const ModelConfig& cfg, std::size_t d_x, std::size_t d_y, core::RngStream& rng);
/// Throws IndexError when an index is out of range or repeats without permission.
void check_assignment(const ModelConfig& cfg, const PosAssignment& a);

}  // namespace tamo::model
