#include "tamo/core/schedule.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "tamo/core/error.hpp"

namespace tamo::core {

double lr_at(std::int64_t iteration, std::int64_t total, double base_rate, double warm_frac) {
  if (total <= 0) throw DomainError("lr_at: total must be positive");
  if (!(warm_frac > 0.0 && warm_frac < 1.0)) throw DomainError("lr_at: warm_frac must lie in (0, 1)");
  const double it = static_cast<double>(std::clamp<std::int64_t>(iteration, 0, total));
  const double n = static_cast<double>(total);
  const double warm = warm_frac * n;
  if (it <= warm) return base_rate * it / warm;
  const double progress = (it - warm) / (n - warm);
  return base_rate * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

}  // namespace tamo::core
