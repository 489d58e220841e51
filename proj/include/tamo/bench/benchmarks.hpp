#pragma once

#include <functional>
#include <string>
#include <vector>

#include "tamo/taskgen/taskgen.hpp"

namespace tamo::bench {

/// Classical (minimization) test function at a native-domain input.
double eval_function(const std::string& name, const std::vector<double>& z);

/// Affine map between [-5, 5] and a native interval, per coordinate.
struct AffineBox {
  std::vector<double> lo, hi;
  std::vector<double> to_native(const std::vector<double>& u) const;
  std::vector<double> to_domain(const std::vector<double>& z) const;
};

struct Objective {
  std::string function;
  AffineBox box;
  double out_lo = 0.0, out_hi = 1.0;  // range of the negated function over the grid
};

/// Two-objective maximization problem built from negated classical functions.
struct AnalyticTask {
  std::string name;
  std::vector<Objective> objectives;
  std::size_t grid = 64;

  /// Normalized objective values at u in [-5, 5]^2.
  std::vector<double> evaluate(const std::vector<double>& u) const;
  /// Grid pool with normalized outputs, reference point and hv_star.
  taskgen::SampledTask to_task() const;
};

std::vector<std::string> pair_names();

/// ackley-rastrigin, ackley-rosenbrock or branin-currin on a grid x grid pool.
AnalyticTask make_pair_task(const std::string& pair, std::size_t grid = 64);

/// Grid coordinates -5 + 10 i / grid, i = 0..grid-1 (contains the origin for even grid).
std::vector<double> grid_axis(std::size_t grid);

}  // namespace tamo::bench
