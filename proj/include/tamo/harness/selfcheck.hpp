#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "tamo/model/model.hpp"

namespace tamo::harness {

struct SelfcheckCommand {
  int op_seeds = 20;
  std::vector<std::uint64_t> miniature_seeds{0, 1, 2};
  std::size_t hv_fronts = 10;  // per output dimension
  std::size_t hv_samples = 1000000;
  std::size_t permutation_cases = 20;
  bool sign_flip = false;  // appends the known-bad gradient fixture
  std::uint64_t seed = 0;
};

SelfcheckCommand selfcheck_from_json(const nlohmann::json& j, std::optional<std::uint64_t> seed = {});

struct CheckLine {
  std::string name;
  bool pass = false;
  std::string detail;
};

/// Grad checks, HV oracle, permutation and checkpoint round trip.
/// Lines are streamed to `report` as they finish.
std::vector<CheckLine> run_selfcheck(const SelfcheckCommand& cmd, std::ostream* report = nullptr);

/// Worst entrywise relative change of policy probabilities when the history
/// rows are shuffled.
double history_permutation_error(const model::Model& model, std::uint64_t seed, std::size_t d_x, std::size_t d_y);
/// Worst entrywise relative mismatch between probabilities of permuted
/// queries and the permuted probabilities.
double query_permutation_error(const model::Model& model, std::uint64_t seed, std::size_t d_x, std::size_t d_y);

}  // namespace tamo::harness
