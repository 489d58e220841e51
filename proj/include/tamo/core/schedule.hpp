#pragma once

#include <cstdint>

namespace tamo::core {

/// Linear ramp from 0 to `base_rate` over the first warm_frac * total
/// iterations, then cosine decay to 0 at `total`.
double lr_at(std::int64_t iteration, std::int64_t total, double base_rate, double warm_frac);

}  // namespace tamo::core
