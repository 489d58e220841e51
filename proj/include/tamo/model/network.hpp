#pragma once

#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "tamo/core/graph.hpp"
#include "tamo/core/ops.hpp"
#include "tamo/core/rng.hpp"
#include "tamo/model/config.hpp"

namespace tamo::model {

using Offsets = std::vector<std::size_t>;

/// A block of observations sharing one dimensionality and one positional
/// assignment. Arrays are row-major; `y` is null for input-only points and
/// `mask` (count x d_y, nonzero = observed) may be null when every entry is observed.
struct ObservationSet {
  std::size_t count = 0;
  std::size_t d_x = 0;
  std::size_t d_y = 0;
  const double* x = nullptr;
  const double* y = nullptr;
  const std::uint8_t* mask = nullptr;
  const PosAssignment* assign = nullptr;
};

/// Task tokens for one decoding group of the optimization task. `output` adds
/// the output-index token for per-objective decoding.
struct OptimizationTask {
  double time_fraction = 1.0;  // (T - t) / T
  const PosAssignment* assign = nullptr;
  std::optional<std::size_t> output;
};

/// Task tokens for one decoding group of the prediction task.
struct PredictionTask {
  std::size_t output = 0;
  const PosAssignment* assign = nullptr;
};

template <typename T>
struct MixtureVars {
  core::Var<T> log_weights;  // n x K
  core::Var<T> means;
  core::Var<T> scales;
};

/// Fresh parameters: variance-scaled uniform linear weights, zero biases,
/// unit layer-norm gains, 0.02-scaled normal task tokens and unit-normal
/// positional pools.
core::ParamStore<float> init_params(const ModelConfig& cfg, core::RngStream& rng);

/// Forward-pass building blocks over one graph. Parameters are read from
/// `params`; when `trainable` is given and the graph tracks gradients, they
/// accumulate into it instead.
template <typename T>
class Network {
 public:
  using V = core::Var<T>;

  Network(const ModelConfig& cfg, const core::ParamStore<T>& params, core::Graph<T>& graph,
          core::ParamStore<T>* trainable = nullptr);

  const ModelConfig& config() const { return cfg_; }
  core::Graph<T>& graph() { return g_; }
  V param(const std::string& name);

  /// One row of width d_e per observation, in set order.
  V embed(std::span<const ObservationSet> sets);

  /// B1 layers over [history; queries]. Group g owns history rows
  /// [h_off[g], h_off[g+1]) and query rows [q_off[g], q_off[g+1]); every row
  /// attends to its group's history only. Returns the query rows.
  V encode(V history, V queries, const Offsets& h_off, const Offsets& q_off);

  /// B2 layers over [queries; task tokens]; every row attends to its group's
  /// task tokens only. Returns the query rows after the final layer norm.
  V decode(V queries, V task_tokens, const Offsets& q_off, const Offsets& t_off);

  /// Stacked task tokens, with offsets appended to `t_off` (which starts at {0}).
  V optimization_tokens(std::span<const OptimizationTask> tasks, Offsets& t_off);
  V prediction_tokens(std::span<const PredictionTask> tasks, Offsets& t_off);

  /// Policy head: one utility per row.
  V utilities(V decoded);
  /// Mixture head: normalized log-weights, means and floored scales.
  MixtureVars<T> mixture(V decoded);

 private:
  V constant_column(const std::vector<double>& values);
  V mlp(const std::string& prefix, V x, std::size_t linears);
  V transformer(const std::string& prefix, V x, std::size_t key_begin, std::size_t key_end,
                const core::AttentionMask& mask);

  const ModelConfig& cfg_;
  const core::ParamStore<T>& params_;
  core::Graph<T>& g_;
  core::ParamStore<T>* trainable_;
  std::unordered_map<std::string, V> cache_;
};

extern template class Network<float>;
extern template class Network<double>;

}  // namespace tamo::model
