#pragma once

#include <functional>
#include <string>
#include <vector>

#include "tamo/core/graph.hpp"
#include "tamo/core/rng.hpp"

namespace tamo::core {

struct GradCheckResult {
  double max_rel_error = 0.0;
  double analytic = 0.0;  // at the worst coordinate
  double numeric = 0.0;
  std::string where;      // input or parameter name and flat index of the worst coordinate
  std::size_t coordinates = 0;
  std::vector<double> errors;  // per coordinate, in visiting order

  std::size_t count_above(double tol) const {
    std::size_t n = 0;
    for (double e : errors) n += e > tol;
    return n;
  }
};

/// |a - n| / max(|a|, |n|, 1e-8).
double relative_error(double analytic, double numeric);

using ScalarFn = std::function<Var<double>(Graph<double>&, const std::vector<Var<double>>&)>;
using ParamFn = std::function<Var<double>(Graph<double>&, ParamStore<double>&)>;

/// Reverse-mode gradient vs central differences over every coordinate of every input.
GradCheckResult grad_check(const ScalarFn& f, const std::vector<TensorD>& points, double step = 1e-5);

GradCheckResult grad_check(const std::function<Var<double>(Graph<double>&, Var<double>)>& f, const TensorD& point,
                           double step = 1e-5);

/// Same comparison over parameter coordinates. When `max_per_param` > 0 and a
/// tensor is larger, that many coordinates are drawn from `rng`.
GradCheckResult grad_check_params(const ParamFn& f, ParamStore<double>& params, double step = 1e-5,
                                  std::size_t max_per_param = 0, RngStream* rng = nullptr);

}  // namespace tamo::core
