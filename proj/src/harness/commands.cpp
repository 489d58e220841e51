#include "tamo/harness/commands.hpp"

#include <cstdio>
#include <ostream>

#include "tamo/core/bytes.hpp"
#include "tamo/core/error.hpp"
#include "tamo/core/json_util.hpp"
#include "tamo/harness/config.hpp"
#include "tamo/taskgen/task_io.hpp"

namespace tamo::harness {

namespace {
constexpr std::uint64_t kTaskStream = 0x7461736bULL;
}

GenTasksCommand gen_tasks_from_json(const nlohmann::json& j, const std::filesystem::path& base,
                                    std::optional<std::uint64_t> seed) {
  check_schema(j, "gen-tasks");
  core::require_keys(j, {"schema_version", "out_dir", "count", "pool_size", "dims", "prior", "id_prefix", "seed"},
                     "gen-tasks");
  GenTasksCommand c;
  const std::string ctx = "gen-tasks";
  if (!j.contains("out_dir")) throw ConfigError("gen-tasks: out_dir is required");
  c.out_dir = resolve(base, core::get_or<std::string>(j, "out_dir", "", ctx));
  c.count = core::get_or(j, "count", c.count, ctx);
  c.pool_size = core::get_or(j, "pool_size", c.pool_size, ctx);
  c.id_prefix = core::get_or(j, "id_prefix", c.id_prefix, ctx);
  if (j.contains("dims")) c.dims = taskgen::dims_from_json(j.at("dims"));
  if (j.contains("prior")) c.prior = taskgen::prior_from_json(j.at("prior"));
  c.seed = effective_seed(j, seed);
  if (c.count == 0) throw ConfigError("gen-tasks: count must be positive");
  if (c.pool_size < 2) throw ConfigError("gen-tasks: pool_size must be at least 2");
  return c;
}

nlohmann::json run_gen_tasks(const GenTasksCommand& c) {
  std::filesystem::create_directories(c.out_dir);
  nlohmann::json tasks = nlohmann::json::array();
  const core::RngStream root(c.seed, kTaskStream);
  for (std::size_t i = 0; i < c.count; ++i) {
    char id[64];
    std::snprintf(id, sizeof id, "%s-%05zu", c.id_prefix.c_str(), i);
    core::RngStream rng = root.child(i);
    const auto task = taskgen::sample_task(rng, c.dims, c.prior, c.pool_size, id);
    const auto bytes = taskgen::encode_task(task);
    const std::string file = std::string(id) + ".task";
    core::write_file_atomic(c.out_dir / file, bytes);
    tasks.push_back({{"id", id},
                     {"file", file},
                     {"child", i},
                     {"d_x", task.d_x()},
                     {"d_y", task.d_y()},
                     {"sha256", core::sha256_hex(bytes)}});
  }
  nlohmann::json manifest{{"schema_version", kSchemaVersion},
                          {"seed", c.seed},
                          {"stream", kTaskStream},
                          {"count", c.count},
                          {"pool_size", c.pool_size},
                          {"dims", taskgen::to_json(c.dims)},
                          {"prior", taskgen::to_json(c.prior)},
                          {"tasks", std::move(tasks)}};
  core::write_text_atomic(c.out_dir / "manifest.json", manifest.dump(2) + "\n");
  return manifest;
}

std::vector<TaskEntry> read_manifest(const std::filesystem::path& path) {
  const auto m = read_json(path);
  check_schema(m, path.string());
  std::vector<TaskEntry> out;
  try {
    for (const auto& t : m.at("tasks")) {
      TaskEntry e{t.at("id").get<std::string>(), path.parent_path() / t.at("file").get<std::string>(),
                  t.at("sha256").get<std::string>()};
      if (core::sha256_hex(core::read_file(e.path)) != e.sha256) {
        throw FormatError("task file " + e.path.string() + " does not match its manifest hash");
      }
      out.push_back(std::move(e));
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
  return out;
}

PretrainCommand pretrain_from_json(const nlohmann::json& j, const std::filesystem::path& base,
                                   std::optional<std::uint64_t> seed) {
  check_schema(j, "pretrain");
  core::require_keys(j, {"schema_version", "out_dir", "resume", "progress_every", "timing", "train"}, "pretrain");
  PretrainCommand c;
  const std::string ctx = "pretrain";
  if (!j.contains("out_dir")) throw ConfigError("pretrain: out_dir is required");
  c.out_dir = resolve(base, core::get_or<std::string>(j, "out_dir", "", ctx));
  c.resume = core::get_or(j, "resume", c.resume, ctx);
  c.progress_every = core::get_or(j, "progress_every", c.progress_every, ctx);
  c.timing = core::get_or(j, "timing", c.timing, ctx);
  nlohmann::json t = j.contains("train") ? j.at("train") : nlohmann::json::object();
  if (seed && t.is_object()) t["seed"] = *seed;
  c.train = train::train_config_from_json(t);
  return c;
}

void run_pretrain(const PretrainCommand& c, std::ostream* progress) {
  train::PretrainOptions opts;
  opts.resume = c.resume;
  opts.timing = c.timing;
  if (progress && c.progress_every > 0) {
    const std::size_t every = c.progress_every;
    opts.progress = [progress, every](const train::IterationLog& e) {
      if ((e.iter + 1) % every != 0) return;
      *progress << "iter " << e.iter + 1 << " " << e.phase << " loss_p " << e.loss_p;
      if (e.loss_rl) *progress << " loss_rl " << *e.loss_rl;
      if (e.mean_final_reward) *progress << " reward " << *e.mean_final_reward;
      *progress << " lr " << e.lr << " ms " << e.wall_ms << std::endl;
    };
  }
  train::pretrain(c.train, c.out_dir, opts);
}

}  // namespace tamo::harness
