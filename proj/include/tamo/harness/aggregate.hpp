#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

namespace tamo::harness {

enum class CiMethod { normal, bootstrap };

struct AggregateOptions {
  bool pooled = true;  // adds task "all" rows pooling every (task, seed) run
  CiMethod ci = CiMethod::normal;
  std::size_t bootstrap_resamples = 2000;
  std::uint64_t seed = 0;  // bootstrap only
};

struct AggregateRow {
  std::string method, task;
  std::size_t step = 0;
  std::size_t n = 0;  // runs reaching this step
  double mean_regret = 0.0;
  double sd = 0.0;
  std::optional<double> ci95;  // empty below two runs
  double mean_cum_time_ms = 0.0;
};

/// Step records from results JSONL files. FormatError on mixed or unknown
/// schema versions, missing fields or a run present twice.
std::vector<nlohmann::json> read_results(const std::vector<std::filesystem::path>& files);

/// Rows sorted by (method, task, step); pooled rows follow each method's tasks.
std::vector<AggregateRow> aggregate(const std::vector<nlohmann::json>& records, const AggregateOptions& opts = {});

inline constexpr const char* kAggregateHeader = "method,task,step,mean_regret,ci95,mean_cum_time_ms";
std::string to_csv(const std::vector<AggregateRow>& rows);

struct AggregateCommand {
  std::vector<std::filesystem::path> inputs;
  std::filesystem::path out;
  AggregateOptions options;
};

AggregateCommand aggregate_from_json(const nlohmann::json& j, const std::filesystem::path& base,
                                     std::optional<std::uint64_t> seed = {});
std::vector<AggregateRow> run_aggregate(const AggregateCommand& cmd);

}  // namespace tamo::harness
