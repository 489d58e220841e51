#include "tamo/core/mixture.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <vector>

#include "tamo/core/error.hpp"

namespace tamo::core {

double gmm_log_prob(double y, std::span<const double> weights, std::span<const double> means,
                    std::span<const double> scales) {
  const std::size_t k = weights.size();
  if (k == 0 || means.size() != k || scales.size() != k) throw DimensionError("gmm_log_prob: component count mismatch");
  double total = 0.0;
  for (std::size_t l = 0; l < k; ++l) {
    if (!(weights[l] >= 0.0)) throw DomainError("gmm_log_prob: negative weight");
    if (!(scales[l] > 0.0)) throw DomainError("gmm_log_prob: scales must be strictly positive");
    total += weights[l];
  }
  if (std::abs(total - 1.0) > 1e-6) throw DomainError("gmm_log_prob: weights must sum to 1");
  const double half_log_2pi = 0.5 * std::log(2.0 * std::numbers::pi);
  std::vector<double> a(k);
  double mx = -std::numeric_limits<double>::infinity();
  for (std::size_t l = 0; l < k; ++l) {
    const double z = (y - means[l]) / scales[l];
    a[l] = std::log(weights[l]) - 0.5 * z * z - std::log(scales[l]) - half_log_2pi;
    mx = std::max(mx, a[l]);
  }
  if (!std::isfinite(mx)) return mx;
  double s = 0.0;
  for (double v : a) s += std::exp(v - mx);
  return mx + std::log(s);
}

}  // namespace tamo::core
