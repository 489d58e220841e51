#pragma once

#include <cstdint>
#include <vector>

#include "tamo/core/rng.hpp"

namespace tamo::pareto {

/// Objective vector under the maximization convention.
using Point = std::vector<double>;

/// Coordinates closer than this are treated as equal when deduplicating.
inline constexpr double kDedupTolerance = 1e-12;

/// a >= b everywhere and a > b somewhere.
bool dominates(const Point& a, const Point& b);

/// Non-dominated subset, deduplicated, in ascending lexicographic order.
std::vector<Point> pareto_front(const std::vector<Point>& points);

/// Exact dominated volume above `ref` for d_y in {1, 2, 3}. Coordinates below
/// the reference are clipped to it. Dominated input points are harmless.
double hypervolume(const std::vector<Point>& front, const Point& ref);

/// Monte-Carlo estimate over the box [ref, componentwise max of the front].
double hv_monte_carlo(const std::vector<Point>& front, const Point& ref, std::size_t samples, core::RngStream& rng);

/// HV(pareto_front(observed)) / hv_star clamped to [0, 1].
double normalized_hv_level(const std::vector<Point>& observed, const Point& ref, double hv_star);

inline double simple_regret(double level) { return 1.0 - level; }

/// Number of exact hypervolume evaluations since the last reset (process-wide).
std::uint64_t hypervolume_calls();
void reset_hypervolume_calls();

}  // namespace tamo::pareto
