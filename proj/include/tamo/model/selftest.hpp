#pragma once

#include <cstdint>

#include "tamo/core/gradcheck.hpp"
#include "tamo/model/config.hpp"

namespace tamo::model {

/// d_e 8, one layer per stage, two heads, two mixture components.
ModelConfig miniature_config(Activation mlp = Activation::relu);

/// Double-precision gradient check of a policy log-probability plus a
/// prediction NLL through the whole miniature network. Initialization and
/// data are drawn from `seed`. With ReLU MLPs a few coordinates sit on a kink
/// or on a dead unit, where central differences only see rounding noise.
core::GradCheckResult miniature_grad_check(std::uint64_t seed, Activation mlp = Activation::relu, double step = 1e-5);

}  // namespace tamo::model
