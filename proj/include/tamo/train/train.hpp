#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "tamo/core/adam.hpp"
#include "tamo/core/rng.hpp"
#include "tamo/model/checkpoint.hpp"
#include "tamo/model/model.hpp"
#include "tamo/model/network.hpp"
#include "tamo/taskgen/taskgen.hpp"

namespace tamo::train {

struct TrainConfig {
  std::size_t iterations = 12000;
  std::size_t burn_in = 9000;  // warm-up iterations before the joint phase
  double lambda_p = 1.0;
  double gamma = 1.0;
  std::size_t budget = 30;  // episode length T
  std::size_t prediction_batch = 32;
  std::size_t policy_batch = 16;
  std::size_t prediction_points = taskgen::kPredictionPoints;
  std::size_t n_query = 256;
  double lr_warmup = 1e-4;
  double lr_joint = 4e-5;
  double warm_frac = 0.05;
  double grad_clip = 0.0;  // global gradient-norm limit; 0 disables
  bool return_to_go = false;
  std::size_t checkpoint_every = 500;
  taskgen::DimsConfig dims{{1}, {1, 2}};
  taskgen::PriorConfig prior;
  model::ModelConfig model;
  std::uint64_t seed = 0;

  void validate() const;
};

nlohmann::json to_json(const TrainConfig& cfg);
/// Missing keys keep their defaults; unknown keys are rejected at every level.
TrainConfig train_config_from_json(const nlohmann::json& j);

// Prediction task ---------------------------------------------------------------

struct PredictionExample {
  taskgen::PredictionBatch data;
  model::PosAssignment assign;
};

std::vector<PredictionExample> sample_prediction_examples(const TrainConfig& cfg, core::RngStream& rng,
                                                          std::size_t count);

/// Mean over examples of the per-example mean NLL over targets and outputs.
template <typename T>
core::Var<T> prediction_loss(model::Network<T>& net, std::span<const PredictionExample> examples);

// Policy task ---------------------------------------------------------------------

struct PolicyExample {
  taskgen::SampledTask task;
  taskgen::PolicyBatch batch;
  model::PosAssignment assign;
};

PolicyExample make_policy_example(taskgen::SampledTask task, const model::ModelConfig& mcfg, std::size_t n_query,
                                  core::RngStream& rng);
std::vector<PolicyExample> sample_policy_examples(const TrainConfig& cfg, core::RngStream& rng, std::size_t count);

struct TrajectoryRecord {
  std::string task_id;
  std::size_t initial = 0;              // pool index of the seeding observation
  std::vector<std::size_t> chosen;      // pool index per step t = 1..T
  std::vector<double> log_probs;        // log pi(x_t | s_t)
  std::vector<double> rewards;          // normalized hypervolume level after step t
  std::vector<double> proposal_ms;
  model::History history{1, 1};         // final history, initial observation first
};

template <typename T>
struct Rollouts {
  std::vector<TrajectoryRecord> records;
  std::vector<std::vector<core::Var<T>>> log_probs;  // [episode][step]
};

/// Runs all episodes in lockstep within one graph. Actions are sampled from
/// the policy unless `greedy`; evaluated candidates are excluded.
template <typename T>
Rollouts<T> rollout(model::Network<T>& net, std::span<const PolicyExample> examples, std::size_t T_budget,
                    core::RngStream& rng, bool greedy = false, bool timing = true);

/// Single sampled episode without gradients.
TrajectoryRecord rollout_episode(const model::Model& model, const taskgen::SampledTask& task, std::size_t T_budget,
                                 core::RngStream& rng, std::size_t n_query);

/// Per-step weights of log pi: gamma^(t-1) r_t, or the discounted reward-to-go.
std::vector<double> reward_weights(std::span<const double> rewards, double gamma, bool return_to_go);
/// -mean over trajectories of sum_t log pi_t * weight_t, from recorded values.
double rl_loss(std::span<const TrajectoryRecord> trajectories, double gamma, bool return_to_go = false);
/// Differentiable form over rollout log-probabilities.
template <typename T>
core::Var<T> rl_loss(const Rollouts<T>& rollouts, double gamma, bool return_to_go = false);

// Steps -----------------------------------------------------------------------------

struct StepResult {
  double loss_p = 0.0;
  double loss_rl = 0.0;
  double mean_final_reward = 0.0;
  bool applied = false;  // false when a non-finite loss or gradient skipped the update
};

/// Global L2 norm of all gradients, rescaling them to `max_norm` when larger (> 0).
double clip_gradients(core::ParamStore<float>& params, double max_norm);

StepResult warmup_step(model::Model& model, core::Adam<float>& opt, std::span<const PredictionExample> examples,
                       double lr, double grad_clip = 0.0);
StepResult joint_step(model::Model& model, core::Adam<float>& opt, std::span<const PredictionExample> prediction,
                      std::span<const PolicyExample> policy, const TrainConfig& cfg, double lr, core::RngStream& rng);

// Pretraining loop ------------------------------------------------------------------

struct IterationLog {
  std::size_t iter = 0;
  std::string phase;  // "warmup" | "joint"
  double loss_p = 0.0;
  std::optional<double> loss_rl;
  double lr = 0.0;
  std::optional<double> mean_final_reward;
  double wall_ms = 0.0;
  bool skipped = false;

  nlohmann::json to_json() const;
};

/// Learning rate used at `iter`: lr_warmup ramp+cosine over the burn-in, then
/// a fresh lr_joint ramp+cosine over the remaining iterations.
double learning_rate(const TrainConfig& cfg, std::size_t iter);

class Trainer {
 public:
  explicit Trainer(TrainConfig cfg);
  /// Continues from a checkpoint written by checkpoint().
  Trainer(TrainConfig cfg, const model::Checkpoint& resume);

  IterationLog step(bool timing = true);
  bool done() const { return iter_ >= cfg_.iterations; }
  std::size_t iteration() const { return iter_; }
  const model::Model& model() const { return model_; }
  const TrainConfig& config() const { return cfg_; }
  const core::Adam<float>& optimizer() const { return opt_; }
  model::Checkpoint checkpoint() const;

 private:
  TrainConfig cfg_;
  model::Model model_;
  core::Adam<float> opt_;
  std::size_t iter_ = 0;
};

struct PretrainOptions {
  bool resume = false;       // continue from out_dir/checkpoint.tamo when present
  bool timing = true;        // false writes wall_ms = 0 for byte-stable logs
  std::optional<std::size_t> stop_at;  // stop before this iteration (used to test resumption)
  std::function<void(const IterationLog&)> progress;
};

/// Writes out_dir/train_log.jsonl, out_dir/checkpoint.tamo at the cadence and
/// at the end, and out_dir/model.tamo when training completes.
model::Model pretrain(const TrainConfig& cfg, const std::filesystem::path& out_dir, const PretrainOptions& options = {});

}  // namespace tamo::train
