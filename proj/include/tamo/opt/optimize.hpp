#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "tamo/core/rng.hpp"
#include "tamo/model/model.hpp"
#include "tamo/pareto/pareto.hpp"
#include "tamo/taskgen/taskgen.hpp"

namespace tamo::opt {

enum class Mode { coupled, decoupled };
enum class FantasyRule { mixture_mean, sample };

struct RunConfig {
  std::size_t budget = 30;      // evaluations, or cost units when objective_costs
  std::size_t n_query = 2048;
  std::size_t batch = 1;        // proposals per round (coupled only)
  Mode mode = Mode::coupled;
  FantasyRule fantasy = FantasyRule::mixture_mean;
  std::size_t initial = 1;      // free random observations before the first proposal
  bool objective_costs = false;  // a full evaluation costs d_y; implied by decoupled mode
  bool pessimistic_fill = false;  // missing outputs count at the reference value for HV
  bool timing = true;           // false records proposal_ms = 0
  std::uint64_t seed = 0;

  void validate() const;
};

nlohmann::json to_json(const RunConfig& cfg);
RunConfig run_config_from_json(const nlohmann::json& j);

struct StepRecord {
  std::size_t step = 0;  // 1-based evaluation count
  double cost = 0.0;     // cumulative
  std::size_t index = 0;  // pool index
  int objective = -1;     // probed output, or -1 for a full evaluation
  std::vector<double> x, y;
  std::vector<std::uint8_t> y_mask;
  double hv_level = 0.0;
  double regret = 1.0;
  double proposal_ms = 0.0;
};

struct RunResult {
  std::string method;
  std::string task_id;
  std::uint64_t seed = 0;
  std::vector<StepRecord> steps;
  std::vector<pareto::Point> front;
  std::size_t policy_passes = 0;
  std::size_t prediction_passes = 0;

  /// One JSON object per step, in order.
  std::vector<nlohmann::json> to_jsonl() const;
};

/// Query set and seeding observations shared by every method for one (task, seed).
struct RunSetup {
  std::vector<std::size_t> query;    // pool indices, ascending
  std::vector<std::size_t> initial;  // positions within `query`
};
RunSetup make_setup(const taskgen::SampledTask& task, const RunConfig& cfg);

/// Greedy pick over available queries, one policy pass.
std::size_t propose_next(const model::Model& model, const model::History& history, const core::Matrix& queries,
                         const std::vector<std::uint8_t>& available, std::size_t t, std::size_t T,
                         const model::PosAssignment& assign, model::PolicyOutput* out = nullptr);

/// q distinct picks built with provisional outcomes that are removed again.
std::vector<std::size_t> propose_batch(const model::Model& model, model::History& history, const core::Matrix& queries,
                                       const std::vector<std::uint8_t>& available, std::size_t t, std::size_t T,
                                       std::size_t q, const model::PosAssignment& assign, FantasyRule rule,
                                       core::RngStream& rng, std::size_t* prediction_passes = nullptr);

/// Proposal strategy for coupled and decoupled runs.
class Proposer {
 public:
  virtual ~Proposer() = default;
  virtual std::string name() const = 0;
  virtual std::vector<std::size_t> propose(model::History& history, const core::Matrix& queries,
                                           const std::vector<std::uint8_t>& available, std::size_t t, std::size_t T,
                                           std::size_t q) = 0;
  /// (query position, output) among pairs with open[i * d_y + k] != 0.
  virtual std::pair<std::size_t, std::size_t> propose_probe(const model::History& history,
                                                            const core::Matrix& queries,
                                                            const std::vector<std::uint8_t>& open, std::size_t t,
                                                            std::size_t T) = 0;
  std::size_t policy_passes = 0;
  std::size_t prediction_passes = 0;
};

class TamoProposer : public Proposer {
 public:
  TamoProposer(const model::Model& model, model::PosAssignment assign, FantasyRule rule, core::RngStream rng)
      : model_(model), assign_(std::move(assign)), rule_(rule), rng_(rng) {}
  std::string name() const override { return "tamo"; }
  std::vector<std::size_t> propose(model::History& history, const core::Matrix& queries,
                                   const std::vector<std::uint8_t>& available, std::size_t t, std::size_t T,
                                   std::size_t q) override;
  std::pair<std::size_t, std::size_t> propose_probe(const model::History& history, const core::Matrix& queries,
                                                    const std::vector<std::uint8_t>& open, std::size_t t,
                                                    std::size_t T) override;
  /// Output of the latest single-pick policy pass.
  const model::PolicyOutput& last() const { return last_; }

 private:
  const model::Model& model_;
  model::PosAssignment assign_;
  FantasyRule rule_;
  core::RngStream rng_;
  model::PolicyOutput last_;
};

/// Uniform choice without replacement among available candidates.
class RandomProposer : public Proposer {
 public:
  explicit RandomProposer(core::RngStream rng) : rng_(rng) {}
  std::string name() const override { return "random"; }
  std::vector<std::size_t> propose(model::History& history, const core::Matrix& queries,
                                   const std::vector<std::uint8_t>& available, std::size_t t, std::size_t T,
                                   std::size_t q) override;
  std::pair<std::size_t, std::size_t> propose_probe(const model::History& history, const core::Matrix& queries,
                                                    const std::vector<std::uint8_t>& open, std::size_t t,
                                                    std::size_t T) override;

 private:
  core::RngStream rng_;
};

/// Normalized HV level of the points in `history` (complete rows only unless
/// pessimistic_fill), measured on the task's noiseless values.
double history_level(const taskgen::SampledTask& task, const std::vector<std::size_t>& rows_pool_index,
                     const model::History& history, bool pessimistic_fill);

RunResult run_optimization(Proposer& proposer, const taskgen::SampledTask& task, const RunConfig& cfg);
RunResult run_decoupled(Proposer& proposer, const taskgen::SampledTask& task, const RunConfig& cfg);
/// Dispatches on cfg.mode.
RunResult run(Proposer& proposer, const taskgen::SampledTask& task, const RunConfig& cfg);

/// Per-run streams: 1 setup, 2 proposer, 3 observation noise, 4 positional assignment.
core::RngStream run_stream(const RunConfig& cfg, const std::string& task_id, std::uint64_t key);

RunResult run_tamo(const model::Model& model, const taskgen::SampledTask& task, const RunConfig& cfg);
RunResult run_random(const taskgen::SampledTask& task, const RunConfig& cfg);

}  // namespace tamo::opt
