#include "tamo/model/config.hpp"

#include <set>
#include <string>

#include "tamo/core/error.hpp"

namespace tamo::model {

std::string activation_name(Activation a) { return a == Activation::relu ? "relu" : "gelu"; }

Activation activation_from_name(const std::string& name) {
  if (name == "relu") return Activation::relu;
  if (name == "gelu") return Activation::gelu;
  throw ConfigError("unknown activation '" + name + "'");
}

void ModelConfig::validate() const {
  auto positive = [](std::size_t v, const char* name) {
    if (v == 0) throw ConfigError(std::string("model config: ") + name + " must be at least 1");
  };
  positive(d_e, "d_e");
  positive(embed_layers, "embed_layers");
  positive(encoder_layers, "encoder_layers");
  positive(decoder_layers, "decoder_layers");
  positive(heads, "heads");
  positive(ff_width, "ff_width");
  positive(components, "components");
  positive(pool_x, "pool_x");
  positive(pool_y, "pool_y");
  if (d_e % heads != 0) throw ConfigError("model config: d_e must be divisible by heads");
  if (!(scale_floor > 0.0)) throw ConfigError("model config: scale_floor must be positive");
}

nlohmann::json to_json(const ModelConfig& c) {
  return {{"d_e", c.d_e},
          {"embed_layers", c.embed_layers},
          {"encoder_layers", c.encoder_layers},
          {"decoder_layers", c.decoder_layers},
          {"heads", c.heads},
          {"ff_width", c.ff_width},
          {"components", c.components},
          {"head_layers", c.head_layers},
          {"pool_x", c.pool_x},
          {"pool_y", c.pool_y},
          {"scale_floor", c.scale_floor},
          {"with_replacement", c.with_replacement},
          {"mlp_activation", activation_name(c.mlp_activation)},
          {"ff_activation", activation_name(c.ff_activation)}};
}

ModelConfig model_config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("model config must be a JSON object");
  ModelConfig c;
  const nlohmann::json defaults = to_json(c);
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (!defaults.contains(it.key())) throw ConfigError("unknown model config key '" + it.key() + "'");
  }
  try {
    c.d_e = j.value("d_e", c.d_e);
    c.embed_layers = j.value("embed_layers", c.embed_layers);
    c.encoder_layers = j.value("encoder_layers", c.encoder_layers);
    c.decoder_layers = j.value("decoder_layers", c.decoder_layers);
    c.heads = j.value("heads", c.heads);
    c.ff_width = j.value("ff_width", c.ff_width);
    c.components = j.value("components", c.components);
    c.head_layers = j.value("head_layers", c.head_layers);
    c.pool_x = j.value("pool_x", c.pool_x);
    c.pool_y = j.value("pool_y", c.pool_y);
    c.scale_floor = j.value("scale_floor", c.scale_floor);
    c.with_replacement = j.value("with_replacement", c.with_replacement);
    c.mlp_activation = activation_from_name(j.value("mlp_activation", activation_name(c.mlp_activation)));
    c.ff_activation = activation_from_name(j.value("ff_activation", activation_name(c.ff_activation)));
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("model config: ") + e.what());
  }
  c.validate();
  return c;
}

namespace {
std::vector<std::size_t> draw(std::size_t pool, std::size_t n, bool with_replacement, core::RngStream& rng,
                              const char* what) {
  if (n <= pool) return rng.sample_without_replacement(pool, n);
  if (!with_replacement) {
    throw SizeError(std::string("need ") + std::to_string(n) + " " + what + " positional tokens but the pool holds " +
                    std::to_string(pool) + "; enable with_replacement");
  }
  std::vector<std::size_t> out = rng.sample_without_replacement(pool, pool);
  while (out.size() < n) out.push_back(rng.index(pool));
  return out;
}
}  // namespace

PosAssignment sample_assignment(const ModelConfig& cfg, std::size_t d_x, std::size_t d_y, core::RngStream& rng) {
  PosAssignment a;
  a.x = draw(cfg.pool_x, d_x, cfg.with_replacement, rng, "input");
  a.y = draw(cfg.pool_y, d_y, cfg.with_replacement, rng, "output");
  return a;
}

void check_assignment(const ModelConfig& cfg, const PosAssignment& a) {
  auto check = [&](const std::vector<std::size_t>& idx, std::size_t pool, const char* what) {
    std::set<std::size_t> seen;
    for (std::size_t i : idx) {
      if (i >= pool) throw IndexError(std::string(what) + " positional index " + std::to_string(i) + " out of range");
      if (!seen.insert(i).second && !cfg.with_replacement) {
        throw IndexError(std::string(what) + " positional index " + std::to_string(i) + " repeats");
      }
    }
  };
  check(a.x, cfg.pool_x, "input");
  check(a.y, cfg.pool_y, "output");
}

}  // namespace tamo::model
