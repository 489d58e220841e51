#include "tamo/model/checkpoint.hpp"

#include <cstring>

#include "tamo/core/bytes.hpp"
#include "tamo/core/error.hpp"

namespace tamo::model {

namespace {
constexpr char kMagic[4] = {'T', 'A', 'M', 'O'};
constexpr std::uint8_t kFloat32 = 0;
constexpr const char* kParamPrefix = "param/";
}  // namespace

const core::TensorF* Checkpoint::find(const std::string& name) const {
  for (const auto& [n, t] : tensors) {
    if (n == name) return &t;
  }
  return nullptr;
}

std::vector<unsigned char> encode_checkpoint(const Checkpoint& ckpt) {
  nlohmann::json meta = ckpt.metadata.is_null() ? nlohmann::json::object() : ckpt.metadata;
  if (!meta.is_object()) throw ConfigError("checkpoint metadata must be a JSON object");
  meta["schema_version"] = kCheckpointVersion;
  meta["model"] = to_json(ckpt.config);
  const std::string header = meta.dump();

  std::vector<unsigned char> out;
  core::put_bytes(out, std::string_view(kMagic, 4));
  core::put_u32(out, kCheckpointVersion);
  core::put_u64(out, header.size());
  core::put_bytes(out, header);
  core::put_u32(out, static_cast<std::uint32_t>(ckpt.tensors.size()));
  for (const auto& [name, t] : ckpt.tensors) {
    core::put_u32(out, static_cast<std::uint32_t>(name.size()));
    core::put_bytes(out, name);
    core::put_u8(out, kFloat32);
    core::put_u32(out, static_cast<std::uint32_t>(t.rank()));
    for (std::size_t d : t.shape()) core::put_u64(out, d);
    for (float v : t.values()) core::put_f32(out, v);
  }
  const core::Digest digest = core::sha256(out);
  out.insert(out.end(), digest.begin(), digest.end());
  return out;
}

Checkpoint decode_checkpoint(std::span<const unsigned char> bytes) {
  const std::size_t digest_size = std::tuple_size_v<core::Digest>;
  if (bytes.size() < 4 + 4 + 8 + digest_size) throw FormatError("checkpoint truncated");
  if (std::memcmp(bytes.data(), kMagic, 4) != 0) throw FormatError("not a checkpoint (bad magic)");
  const auto body = bytes.first(bytes.size() - digest_size);
  core::ByteReader r(body, "checkpoint");
  r.bytes(4);
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion) throw FormatError("unsupported checkpoint version " + std::to_string(version));
  const core::Digest digest = core::sha256(body);
  if (std::memcmp(digest.data(), bytes.data() + body.size(), digest_size) != 0) {
    throw FormatError("checkpoint checksum mismatch (file corrupted or truncated)");
  }

  Checkpoint ckpt;
  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(r.bytes(r.u64()));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("checkpoint metadata is not valid JSON: ") + e.what());
  }
  if (!meta.is_object() || !meta.contains("model")) throw FormatError("checkpoint metadata lacks the model config");
  ckpt.config = model_config_from_json(meta.at("model"));
  meta.erase("model");
  meta.erase("schema_version");
  ckpt.metadata = std::move(meta);

  const std::uint32_t count = r.u32();
  for (std::uint32_t i = 0; i < count; ++i) {
    std::string name = r.bytes(r.u32());
    const std::uint8_t dtype = r.u8();
    if (dtype != kFloat32) throw FormatError("tensor '" + name + "' has unsupported dtype code " + std::to_string(dtype));
    const std::uint32_t rank = r.u32();
    core::Shape shape(rank);
    for (auto& d : shape) d = r.u64();
    const std::size_t n = core::shape_size(shape);
    if (n > r.remaining() / 4) throw FormatError("tensor '" + name + "' payload truncated");
    std::vector<float> data(n);
    for (auto& v : data) v = r.f32();
    ckpt.tensors.emplace_back(std::move(name), core::TensorF(std::move(shape), std::move(data)));
  }
  if (!r.done()) throw FormatError("trailing bytes after checkpoint tensors");
  return ckpt;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  core::write_file_atomic(path, encode_checkpoint(ckpt));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) { return decode_checkpoint(core::read_file(path)); }

Checkpoint make_checkpoint(const Model& model, nlohmann::json metadata) {
  Checkpoint c;
  c.config = model.config;
  c.metadata = std::move(metadata);
  for (const auto& p : model.params) c.tensors.emplace_back(kParamPrefix + p.name, p.value);
  return c;
}

Model model_from_checkpoint(const Checkpoint& ckpt) {
  core::RngStream rng(0);
  Model m{ckpt.config, init_params(ckpt.config, rng)};
  std::size_t stored = 0;
  for (const auto& [name, t] : ckpt.tensors) stored += name.rfind(kParamPrefix, 0) == 0;
  for (auto& p : m.params) {
    const std::string name = kParamPrefix + p.name;
    const core::TensorF* t = ckpt.find(name);
    if (!t) throw FormatError("checkpoint lacks tensor '" + name + "'");
    if (t->shape() != p.value.shape()) {
      throw DimensionError("tensor '" + name + "' has shape " + core::shape_string(t->shape()) + " but the config expects " +
                           core::shape_string(p.value.shape()));
    }
    p.value = *t;
  }
  if (stored != m.params.size()) throw FormatError("checkpoint holds parameters the config does not define");
  return m;
}

void save_model(const Model& model, const std::filesystem::path& path) { save_checkpoint(make_checkpoint(model), path); }

Model load_model(const std::filesystem::path& path) { return model_from_checkpoint(load_checkpoint(path)); }

}  // namespace tamo::model
