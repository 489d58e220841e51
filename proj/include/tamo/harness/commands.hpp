#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "tamo/opt/optimize.hpp"
#include "tamo/taskgen/taskgen.hpp"
#include "tamo/train/train.hpp"

namespace tamo::harness {

// gen-tasks ---------------------------------------------------------------------

struct GenTasksCommand {
  std::filesystem::path out_dir;
  std::size_t count = 200;
  std::size_t pool_size = 2048;
  taskgen::DimsConfig dims{{1}, {2}};
  taskgen::PriorConfig prior;
  std::string id_prefix = "task";
  std::uint64_t seed = 0;
};

GenTasksCommand gen_tasks_from_json(const nlohmann::json& j, const std::filesystem::path& base,
                                    std::optional<std::uint64_t> seed = {});
/// Writes <id>.task files and manifest.json; returns the manifest.
nlohmann::json run_gen_tasks(const GenTasksCommand& cmd);

struct TaskEntry {
  std::string id;
  std::filesystem::path path;
  std::string sha256;
};
/// Reads a manifest and checks every listed file's hash.
std::vector<TaskEntry> read_manifest(const std::filesystem::path& manifest);

// pretrain ----------------------------------------------------------------------

struct PretrainCommand {
  std::filesystem::path out_dir;
  bool resume = true;
  std::size_t progress_every = 100;  // 0 silences progress lines
  bool timing = true;
  train::TrainConfig train;
};

PretrainCommand pretrain_from_json(const nlohmann::json& j, const std::filesystem::path& base,
                                   std::optional<std::uint64_t> seed = {});
void run_pretrain(const PretrainCommand& cmd, std::ostream* progress = nullptr);

// evaluate ----------------------------------------------------------------------

struct EvaluateCommand {
  std::filesystem::path checkpoint;  // required when "tamo" is among the methods
  std::filesystem::path manifest;    // optional task manifest
  std::vector<std::string> benchmarks;  // optional analytic pairs
  std::size_t benchmark_grid = 64;
  std::filesystem::path out;         // results JSONL
  std::vector<std::string> methods{"tamo", "random"};
  std::size_t seeds = 30;
  std::size_t task_limit = 0;  // 0 keeps every task
  std::uint64_t seed = 0;      // run r uses seed + r
  opt::RunConfig run;
};

EvaluateCommand evaluate_from_json(const nlohmann::json& j, const std::filesystem::path& base,
                                   std::optional<std::uint64_t> seed = {});
/// Runs every (task, seed, method) in that nesting order and writes one line per step.
/// Returns the number of runs.
std::size_t run_evaluate(const EvaluateCommand& cmd, std::ostream* progress = nullptr);

/// Tasks named by a manifest and benchmark list, in that order.
std::vector<taskgen::SampledTask> load_tasks(const EvaluateCommand& cmd);

}  // namespace tamo::harness
