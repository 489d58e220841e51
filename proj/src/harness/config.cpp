#include "tamo/harness/config.hpp"

#include <fstream>

#include "tamo/core/error.hpp"

namespace tamo::harness {

nlohmann::json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

void check_schema(const nlohmann::json& j, const std::string& what) {
  if (!j.is_object() || !j.contains("schema_version")) throw ConfigError(what + ": missing schema_version");
  const auto& v = j.at("schema_version");
  if (!v.is_number_integer() || v.get<int>() != kSchemaVersion) {
    throw ConfigError(what + ": unsupported schema_version " + v.dump());
  }
}

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
  const std::filesystem::path path(p);
  return path.is_absolute() ? path : base / path;
}

std::uint64_t effective_seed(const nlohmann::json& j, std::optional<std::uint64_t> cli_seed) {
  if (cli_seed) return *cli_seed;
  if (!j.contains("seed")) return 0;
  try {
    return j.at("seed").get<std::uint64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("seed: ") + e.what());
  }
}

}  // namespace tamo::harness
