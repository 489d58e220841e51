#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "tamo/core/params.hpp"
#include "tamo/core/tensor.hpp"
#include "tamo/model/config.hpp"
#include "tamo/model/network.hpp"

namespace tamo::model {

struct Model {
  ModelConfig config;
  core::ParamStore<float> params;
};

Model make_model(const ModelConfig& cfg, std::uint64_t seed);

/// Observations of one task. Each row stores x, y and per-output observed
/// flags; unobserved y entries are stored but never read.
class History {
 public:
  History(std::size_t d_x, std::size_t d_y) : d_x_(d_x), d_y_(d_y) {}

  void add(std::span<const double> x, std::span<const double> y, std::span<const std::uint8_t> observed = {});
  void pop_back();
  /// Records output k of row i as observed with `value`.
  void set_output(std::size_t i, std::size_t k, double value);

  std::size_t size() const { return d_x_ ? x_.size() / d_x_ : 0; }
  bool empty() const { return x_.empty(); }
  std::size_t d_x() const { return d_x_; }
  std::size_t d_y() const { return d_y_; }
  std::span<const double> x(std::size_t i) const { return {x_.data() + i * d_x_, d_x_}; }
  std::span<const double> y(std::size_t i) const { return {y_.data() + i * d_y_, d_y_}; }
  std::span<const std::uint8_t> observed(std::size_t i) const { return {mask_.data() + i * d_y_, d_y_}; }
  bool complete(std::size_t i) const;

  ObservationSet as_set(const PosAssignment& assign) const;

 private:
  std::size_t d_x_, d_y_;
  std::vector<double> x_, y_;
  std::vector<std::uint8_t> mask_;
};

/// Input-only points (rows of an n x d_x matrix).
ObservationSet input_set(const core::Matrix& x, const PosAssignment& assign);
/// Fully observed points.
ObservationSet observation_set(const core::Matrix& x, const core::Matrix& y, const PosAssignment& assign);

struct PolicyOutput {
  std::vector<double> utilities;
  std::vector<double> probs;  // zero for unavailable queries
  std::size_t argmax = 0;     // lowest index among maximal probabilities
};

/// Full optimization pass at step t of T. `available` (nonzero = may be
/// chosen) restricts the softmax; null means every query is available.
PolicyOutput policy_forward(const Model& model, const History& history, const core::Matrix& queries, std::size_t t,
                            std::size_t T, const PosAssignment& assign,
                            const std::vector<std::uint8_t>* available = nullptr);

/// Utilities per output index k (outer) and query (inner), decoding each
/// query once per output-index token.
std::vector<std::vector<double>> policy_utilities_per_output(const Model& model, const History& history,
                                                             const core::Matrix& queries, std::size_t t,
                                                             std::size_t T, const PosAssignment& assign);

struct PredictionOutput {
  std::size_t targets = 0;
  std::size_t components = 0;
  std::vector<double> weights;  // targets x components, row-major
  std::vector<double> means;
  std::vector<double> scales;

  double weight(std::size_t i, std::size_t l) const { return weights[i * components + l]; }
  double mean(std::size_t i, std::size_t l) const { return means[i * components + l]; }
  double scale(std::size_t i, std::size_t l) const { return scales[i * components + l]; }
  double mixture_mean(std::size_t i) const;
  double log_density(std::size_t i, double y) const;
};

/// Mixture parameters of output k for each target.
PredictionOutput predict_forward(const Model& model, const ObservationSet& context, const core::Matrix& targets,
                                 std::size_t k, const PosAssignment& assign);
/// Same, for several outputs with one shared encoding.
std::vector<PredictionOutput> predict_forward(const Model& model, const ObservationSet& context,
                                              const core::Matrix& targets, std::span<const std::size_t> ks,
                                              const PosAssignment& assign);

/// Greedy choice over available probabilities; lowest index wins ties.
std::size_t argmax_available(std::span<const double> values, const std::vector<std::uint8_t>* available);

}  // namespace tamo::model
