#pragma once

#include <cstdint>
#include <vector>

#include "tamo/core/params.hpp"

namespace tamo::core {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Adaptive-moment optimizer with bias correction. Moments are indexed by the
/// position of each parameter in its store.
template <typename T>
class Adam {
 public:
  explicit Adam(AdamConfig config = {}) : config_(config) {}

  /// One update at `rate`; gradients are zeroed afterwards. Returns false when
  /// a non-finite gradient was found, in which case parameters and moments
  /// are left untouched but the step counter still advances.
  bool step(ParamStore<T>& params, double rate);

  /// Records a skipped step without reading gradients; they are zeroed.
  void skip(ParamStore<T>& params);

  std::uint64_t step_count() const noexcept { return steps_; }
  std::uint64_t skipped_steps() const noexcept { return skipped_; }
  const AdamConfig& config() const noexcept { return config_; }

  const std::vector<Tensor<T>>& first_moments() const noexcept { return m_; }
  const std::vector<Tensor<T>>& second_moments() const noexcept { return v_; }
  void restore(std::uint64_t steps, std::uint64_t skipped, std::vector<Tensor<T>> m, std::vector<Tensor<T>> v);

 private:
  void ensure_state(const ParamStore<T>& params);

  AdamConfig config_;
  std::uint64_t steps_ = 0;
  std::uint64_t skipped_ = 0;
  std::uint64_t applied_ = 0;
  std::vector<Tensor<T>> m_, v_;
};

}  // namespace tamo::core
