#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "tamo/taskgen/taskgen.hpp"

namespace tamo::taskgen {

inline constexpr int kTaskFormatVersion = 1;

nlohmann::json spec_to_json(const TaskSpec& spec);
TaskSpec spec_from_json(const nlohmann::json& j);

/// Container: "TAMOTASK", u32 version, u64 header length, JSON header, then
/// pool_X and pool_Y as little-endian float32 row-major blocks.
nlohmann::json to_json(const DimsConfig& dims);
DimsConfig dims_from_json(const nlohmann::json& j);
nlohmann::json to_json(const PriorConfig& prior);
PriorConfig prior_from_json(const nlohmann::json& j);

std::vector<unsigned char> encode_task(const SampledTask& task);
SampledTask decode_task(const std::vector<unsigned char>& bytes);

void save_task(const SampledTask& task, const std::string& path);
SampledTask load_task(const std::string& path);

/// Checks column ranges, reference point and hv_star; throws FormatError.
void validate_task(const SampledTask& task, double tol = 1e-9);

}  // namespace tamo::taskgen
