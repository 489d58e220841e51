#pragma once

#include <functional>
#include <string>
#include <vector>

#include "tamo/core/gradcheck.hpp"

namespace tamo::core {

/// One gradient check: random inputs for a seed and a scalar function of them.
struct OpCase {
  std::string name;
  std::function<std::vector<TensorD>(RngStream&)> make;
  ScalarFn fn;
};

/// Every differentiable op, alone or in small composites. With `sign_flip`, a
/// GELU variant whose backward pass is negated is appended as a known-bad case.
std::vector<OpCase> op_suite(bool sign_flip = false);

struct OpResult {
  std::string name;
  double max_rel_error = 0.0;  // worst over seeds
  std::string where;
  int seeds = 0;
};

std::vector<OpResult> run_op_suite(const std::vector<OpCase>& cases, int seeds, double step = 1e-5);

}  // namespace tamo::core
