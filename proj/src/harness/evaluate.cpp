#include <fstream>
#include <memory>
#include <ostream>

#include "tamo/bench/benchmarks.hpp"
#include "tamo/core/bytes.hpp"
#include "tamo/core/error.hpp"
#include "tamo/core/json_util.hpp"
#include "tamo/harness/commands.hpp"
#include "tamo/harness/config.hpp"
#include "tamo/model/checkpoint.hpp"
#include "tamo/taskgen/task_io.hpp"

namespace tamo::harness {

EvaluateCommand evaluate_from_json(const nlohmann::json& j, const std::filesystem::path& base,
                                   std::optional<std::uint64_t> seed) {
  check_schema(j, "evaluate");
  const std::string ctx = "evaluate";
  core::require_keys(j,
                     {"schema_version", "checkpoint", "manifest", "benchmarks", "benchmark_grid", "out", "methods",
                      "seeds", "task_limit", "seed", "run"},
                     ctx);
  EvaluateCommand c;
  if (!j.contains("out")) throw ConfigError("evaluate: out is required");
  c.out = resolve(base, core::get_or<std::string>(j, "out", "", ctx));
  if (j.contains("checkpoint")) c.checkpoint = resolve(base, core::get_or<std::string>(j, "checkpoint", "", ctx));
  if (j.contains("manifest")) c.manifest = resolve(base, core::get_or<std::string>(j, "manifest", "", ctx));
  c.benchmarks = core::get_or(j, "benchmarks", c.benchmarks, ctx);
  c.benchmark_grid = core::get_or(j, "benchmark_grid", c.benchmark_grid, ctx);
  c.methods = core::get_or(j, "methods", c.methods, ctx);
  c.seeds = core::get_or(j, "seeds", c.seeds, ctx);
  c.task_limit = core::get_or(j, "task_limit", c.task_limit, ctx);
  c.seed = effective_seed(j, seed);
  if (j.contains("run")) {
    nlohmann::json r = j.at("run");
    if (r.is_object() && r.contains("seed")) throw ConfigError("evaluate.run: seed is set per run from evaluate.seed");
    c.run = opt::run_config_from_json(r);
  }

  if (c.methods.empty()) throw ConfigError("evaluate: methods must not be empty");
  for (const auto& m : c.methods) {
    if (m != "tamo" && m != "random") throw ConfigError("evaluate: unknown method '" + m + "'");
  }
  if (c.seeds == 0) throw ConfigError("evaluate: seeds must be positive");
  if (c.manifest.empty() && c.benchmarks.empty()) throw ConfigError("evaluate: needs a manifest or benchmarks");
  const auto known = bench::pair_names();
  for (const auto& b : c.benchmarks) {
    if (std::find(known.begin(), known.end(), b) == known.end()) {
      throw ConfigError("evaluate: unknown benchmark '" + b + "'");
    }
  }
  const bool needs_model = std::find(c.methods.begin(), c.methods.end(), "tamo") != c.methods.end();
  if (needs_model && c.checkpoint.empty()) throw ConfigError("evaluate: method tamo needs a checkpoint");
  return c;
}

std::vector<taskgen::SampledTask> load_tasks(const EvaluateCommand& c) {
  std::vector<taskgen::SampledTask> tasks;
  if (!c.manifest.empty()) {
    for (const auto& e : read_manifest(c.manifest)) tasks.push_back(taskgen::decode_task(core::read_file(e.path)));
  }
  for (const auto& b : c.benchmarks) tasks.push_back(bench::make_pair_task(b, c.benchmark_grid).to_task());
  if (c.task_limit && tasks.size() > c.task_limit) tasks.resize(c.task_limit);
  return tasks;
}

std::size_t run_evaluate(const EvaluateCommand& c, std::ostream* progress) {
  std::unique_ptr<model::Model> model;
  if (std::find(c.methods.begin(), c.methods.end(), "tamo") != c.methods.end()) {
    if (!std::filesystem::is_regular_file(c.checkpoint)) {
      throw ConfigError("evaluate: checkpoint not found: " + c.checkpoint.string());
    }
    model = std::make_unique<model::Model>(model::load_model(c.checkpoint));
  }
  const auto tasks = load_tasks(c);

  std::string text;
  std::size_t runs = 0;
  for (const auto& task : tasks) {
    for (std::size_t r = 0; r < c.seeds; ++r) {
      opt::RunConfig rc = c.run;
      rc.seed = c.seed + r;
      for (const auto& m : c.methods) {
        const auto result = m == "tamo" ? opt::run_tamo(*model, task, rc) : opt::run_random(task, rc);
        for (const auto& line : result.to_jsonl()) text += line.dump() + "\n";
        ++runs;
        if (progress) {
          const auto& last = result.steps.empty() ? opt::StepRecord{} : result.steps.back();
          *progress << task.id << " seed " << rc.seed << " " << m << " final regret " << last.regret << "\n";
        }
      }
    }
  }
  if (!c.out.parent_path().empty()) std::filesystem::create_directories(c.out.parent_path());
  core::write_text_atomic(c.out, text);
  return runs;
}

}  // namespace tamo::harness
