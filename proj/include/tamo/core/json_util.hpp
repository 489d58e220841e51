#pragma once

#include <initializer_list>
#include <string>
#include <string_view>

#include <json.hpp>

#include "tamo/core/error.hpp"

namespace tamo::core {

/// Throws ConfigError unless `j` is an object whose keys all appear in `allowed`.
inline void require_keys(const nlohmann::json& j, std::initializer_list<std::string_view> allowed,
                         const std::string& context) {
  if (!j.is_object()) throw ConfigError(context + " must be a JSON object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool known = false;
    for (auto a : allowed) known = known || a == it.key();
    if (!known) throw ConfigError("unknown " + context + " key '" + it.key() + "'");
  }
}

/// j[key] converted to T, or `fallback` when absent; type errors become ConfigError.
template <typename T>
T get_or(const nlohmann::json& j, const char* key, const T& fallback, const std::string& context) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(context + "." + key + ": " + e.what());
  }
}

}  // namespace tamo::core
