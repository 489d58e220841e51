#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include <json.hpp>

namespace tamo::harness {

inline constexpr int kSchemaVersion = 1;

/// Parses a JSON file; ConfigError on syntax errors.
nlohmann::json read_json(const std::filesystem::path& path);

/// Throws ConfigError unless j["schema_version"] equals kSchemaVersion.
void check_schema(const nlohmann::json& j, const std::string& what);

/// Paths inside a config resolve against the config file's directory.
std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p);

/// The seed in effect: the command-line value when given, else the config's.
std::uint64_t effective_seed(const nlohmann::json& j, std::optional<std::uint64_t> cli_seed);

}  // namespace tamo::harness
