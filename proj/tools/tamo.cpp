#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "tamo/core/error.hpp"
#include "tamo/harness/aggregate.hpp"
#include "tamo/harness/commands.hpp"
#include "tamo/harness/config.hpp"
#include "tamo/harness/selfcheck.hpp"

using namespace tamo;

int main(int argc, char** argv) {
  CLI::App app{"Amortized multi-objective optimization toolkit"};
  app.require_subcommand(1);
  std::string config;
  std::optional<std::uint64_t> seed;
  auto add = [&](const std::string& name, const std::string& help) {
    auto* sub = app.add_subcommand(name, help);
    sub->add_option("--config", config, "JSON configuration file")->required()->check(CLI::ExistingFile);
    sub->add_option("--seed", seed, "Seed overriding the configuration");
    return sub;
  };
  auto* gen = add("gen-tasks", "Generate task files and a manifest");
  auto* pre = add("pretrain", "Pretrain a model (resumable)");
  auto* eval = add("evaluate", "Run optimization campaigns and write results JSONL");
  auto* agg = add("aggregate", "Summarize results JSONL into a CSV");
  auto* self = add("selfcheck", "Gradient, hypervolume, permutation and checkpoint checks");
  bool quiet = false;
  eval->add_flag("--quiet", quiet, "Suppress per-run lines");
  CLI11_PARSE(app, argc, argv);

  try {
    const auto j = harness::read_json(config);
    const auto base = std::filesystem::path(config).parent_path();
    if (gen->parsed()) {
      const auto m = harness::run_gen_tasks(harness::gen_tasks_from_json(j, base, seed));
      std::cout << "wrote " << m.at("count").get<std::size_t>() << " tasks\n";
    } else if (pre->parsed()) {
      harness::run_pretrain(harness::pretrain_from_json(j, base, seed), &std::cerr);
    } else if (eval->parsed()) {
      const auto cmd = harness::evaluate_from_json(j, base, seed);
      const auto runs = harness::run_evaluate(cmd, quiet ? nullptr : &std::cerr);
      std::cout << "wrote " << runs << " runs to " << cmd.out.string() << "\n";
    } else if (agg->parsed()) {
      const auto cmd = harness::aggregate_from_json(j, base, seed);
      const auto rows = harness::run_aggregate(cmd);
      std::cout << "wrote " << rows.size() << " rows to " << cmd.out.string() << "\n";
    } else if (self->parsed()) {
      const auto lines = harness::run_selfcheck(harness::selfcheck_from_json(j, seed), &std::cout);
      const auto failed = std::count_if(lines.begin(), lines.end(), [](const auto& l) { return !l.pass; });
      std::cout << (failed ? "selfcheck FAILED: " : "selfcheck passed: ") << lines.size() - failed << "/"
                << lines.size() << " checks\n";
      return failed ? 2 : 0;
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
