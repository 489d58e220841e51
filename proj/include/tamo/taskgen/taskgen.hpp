#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tamo/core/rng.hpp"
#include "tamo/core/tensor.hpp"
#include "tamo/pareto/pareto.hpp"

namespace tamo::taskgen {

using core::Matrix;

inline constexpr double kDomainLo = -5.0;
inline constexpr double kDomainHi = 5.0;

enum class KernelFamily { rbf, matern32, matern52 };

std::string kernel_name(KernelFamily k);
KernelFamily kernel_from_name(const std::string& name);

/// Output correlation structure: independent, or task covariance B B^T + diag(v).
struct Coregion {
  bool independent = true;
  std::size_t rank = 0;
  std::vector<double> B;  // d_y x rank, row-major
  std::vector<double> v;  // d_y
};

/// Optional quadratic term sign * coef * ||x - x*_m||^2 added to output m.
struct Bowl {
  bool enabled = false;
  double sign = -1.0;
  double coef = 0.02;
  std::vector<std::vector<double>> optima;  // d_y points in the domain
};

struct TaskSpec {
  std::size_t d_x = 1;
  std::size_t d_y = 1;
  std::vector<KernelFamily> kernels;  // per output
  std::vector<double> sigma;          // per output signal stddev
  std::vector<double> lengthscale;    // per output
  Coregion coregion;
  double noise_std = 0.0;
  bool small_lengthscale = false;
  Bowl bowl;
  std::uint64_t seed = 0;
};

struct DimsConfig {
  std::vector<std::size_t> d_x{1, 2};
  std::vector<std::size_t> d_y{1, 2, 3};
};

/// Prior-composition switches.
struct PriorConfig {
  bool small_lengthscale = false;
  bool quadratic_bowl = false;
  double bowl_sign = -1.0;
  double bowl_coef = 0.02;
  double noise_std = 0.0;
};

inline constexpr double kLengthscaleMean = 2.0 / 3.0;
inline constexpr double kLengthscaleStd = 0.5;
inline constexpr double kLengthscaleLo = 0.1;
inline constexpr double kLengthscaleHi = 2.0;
inline constexpr double kSmallLengthscaleHi = 0.5;

TaskSpec sample_task_spec(core::RngStream& rng, const DimsConfig& dims, const PriorConfig& prior = {});

/// Stationary covariance between the rows of X1 and X2.
Matrix kernel_matrix(const Matrix& X1, const Matrix& X2, KernelFamily family, double lengthscale, double sigma);
inline Matrix kernel_matrix(const Matrix& X, KernelFamily family, double lengthscale, double sigma) {
  return kernel_matrix(X, X, family, lengthscale, sigma);
}

/// Lower Cholesky factor of K + jitter*I, escalating jitter 1e-8 -> 1e-4 by
/// factors of 10. Throws DegenerateTaskError when every attempt fails.
Matrix jittered_cholesky(const Matrix& K, double* used_jitter = nullptr);

/// Zero-mean GP draw at the rows of X, N x d_y.
Matrix sample_gp_values(const TaskSpec& spec, const Matrix& X, core::RngStream& rng);

/// Per-column affine map onto exactly [-1, 1].
Matrix normalize_outputs(const Matrix& raw);

Matrix apply_quadratic_bowl(const Matrix& raw, const Matrix& X, const TaskSpec& spec);

/// N uniform points in [-5, 5]^d.
Matrix uniform_pool(core::RngStream& rng, std::size_t n, std::size_t d);

/// A finite multi-objective problem: evaluation is lookup by pool index.
struct SampledTask {
  std::string id;
  TaskSpec spec;
  Matrix pool_X;  // N x d_x
  Matrix pool_Y;  // N x d_y, each column spanning [-1, 1]
  pareto::Point ref;
  double hv_star = 0.0;
  std::size_t resamples = 0;  // degenerate draws discarded before this one

  std::size_t size() const { return pool_X.rows(); }
  std::size_t d_x() const { return pool_X.cols(); }
  std::size_t d_y() const { return pool_Y.cols(); }
  pareto::Point x(std::size_t i) const;
  pareto::Point y(std::size_t i) const;
};

/// Reference point (column minima) and optimal hypervolume over the pool.
void finalize_task(SampledTask& task);

/// Draw spec, pool and values; degenerate draws are discarded and redrawn.
/// Pool values are rounded to float32 so task files round-trip exactly.
SampledTask sample_task(core::RngStream& rng, const DimsConfig& dims, const PriorConfig& prior, std::size_t pool_size,
                        const std::string& id = "");

/// Same, for a fixed spec.
SampledTask sample_task_from_spec(const TaskSpec& spec, core::RngStream& rng, std::size_t pool_size,
                                  const std::string& id = "");

inline constexpr std::size_t kPredictionPoints = 300;

/// Context/target split of one fresh function draw.
struct PredictionBatch {
  Matrix context_x, context_y;  // N_c x d_x, N_c x d_y (noisy when noise_std > 0)
  Matrix target_x, target_y;    // N_p x d_x, N_p x d_y
};

/// Query subset of a task pool plus the seeded history.
struct PolicyBatch {
  std::vector<std::size_t> query;  // pool indices
  std::size_t initial = 0;         // position within `query` of the first observation
};

PredictionBatch make_prediction_batch(const TaskSpec& spec, core::RngStream& rng,
                                      std::size_t total = kPredictionPoints);
PolicyBatch make_policy_batch(const SampledTask& task, core::RngStream& rng, std::size_t n_query = 256);

/// y with i.i.d. Gaussian noise of the task's noise stddev (identity when zero).
std::vector<double> observe(const SampledTask& task, std::size_t index, core::RngStream& rng);

}  // namespace tamo::taskgen
