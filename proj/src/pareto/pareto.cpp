#include "tamo/pareto/pareto.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>

#include "tamo/core/error.hpp"

namespace tamo::pareto {

namespace {

std::atomic<std::uint64_t> g_hv_calls{0};

void check_dims(const std::vector<Point>& pts, std::size_t d) {
  for (const auto& p : pts) {
    if (p.size() != d) {
      throw DimensionError("objective vector has " + std::to_string(p.size()) + " entries, expected " + std::to_string(d));
    }
  }
}

bool near_equal(const Point& a, const Point& b) {
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (std::abs(a[i] - b[i]) > kDedupTolerance) return false;
  }
  return true;
}

std::vector<Point> clipped(const std::vector<Point>& pts, const Point& ref) {
  std::vector<Point> out;
  out.reserve(pts.size());
  for (const auto& p : pts) {
    Point q(p.size());
    bool positive = true;
    for (std::size_t i = 0; i < p.size(); ++i) {
      q[i] = std::max(p[i], ref[i]);
      positive = positive && q[i] > ref[i];
    }
    if (positive) out.push_back(std::move(q));
  }
  return out;
}

// Area above (rx, ry) dominated by pts, using coordinates (a, b) of each point.
double sweep_2d(std::vector<std::pair<double, double>>& pts, double rx, double ry) {
  std::sort(pts.begin(), pts.end(), [](const auto& u, const auto& v) {
    return u.first != v.first ? u.first > v.first : u.second > v.second;
  });
  double area = 0.0, best_y = ry;
  for (const auto& [x, y] : pts) {
    if (y > best_y) {
      area += (x - rx) * (y - best_y);
      best_y = y;
    }
  }
  return area;
}

}  // namespace

bool dominates(const Point& a, const Point& b) {
  if (a.size() != b.size()) throw DimensionError("dominates: length mismatch");
  bool strict = false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i] < b[i]) return false;
    if (a[i] > b[i]) strict = true;
  }
  return strict;
}

std::vector<Point> pareto_front(const std::vector<Point>& points) {
  if (points.empty()) return {};
  check_dims(points, points.front().size());
  std::vector<Point> sorted = points;
  std::sort(sorted.begin(), sorted.end());
  std::vector<Point> unique;
  for (auto& p : sorted) {
    bool dup = false;
    for (const auto& u : unique) {
      if (near_equal(p, u)) {
        dup = true;
        break;
      }
    }
    if (!dup) unique.push_back(std::move(p));
  }
  std::vector<Point> front;
  for (std::size_t i = 0; i < unique.size(); ++i) {
    bool dominated = false;
    for (std::size_t j = 0; j < unique.size() && !dominated; ++j) {
      dominated = j != i && dominates(unique[j], unique[i]);
    }
    if (!dominated) front.push_back(unique[i]);
  }
  return front;
}

double hypervolume(const std::vector<Point>& front, const Point& ref) {
  g_hv_calls.fetch_add(1, std::memory_order_relaxed);
  const std::size_t d = ref.size();
  if (d == 0) throw DimensionError("hypervolume: empty reference point");
  if (d > 3) throw DimensionError("exact hypervolume supports d_y <= 3; use hv_monte_carlo");
  check_dims(front, d);
  const auto pts = clipped(front, ref);
  if (pts.empty()) return 0.0;
  if (d == 1) {
    double best = ref[0];
    for (const auto& p : pts) best = std::max(best, p[0]);
    return best - ref[0];
  }
  if (d == 2) {
    std::vector<std::pair<double, double>> xy;
    for (const auto& p : pts) xy.emplace_back(p[0], p[1]);
    return sweep_2d(xy, ref[0], ref[1]);
  }
  // Slice along the third objective: between consecutive distinct z levels the
  // cross-section is the 2-D front of every point reaching that level.
  std::vector<double> levels;
  for (const auto& p : pts) levels.push_back(p[2]);
  std::sort(levels.begin(), levels.end());
  levels.erase(std::unique(levels.begin(), levels.end()), levels.end());
  double volume = 0.0, prev = ref[2];
  std::vector<std::pair<double, double>> xy;
  for (double z : levels) {
    xy.clear();
    for (const auto& p : pts) {
      if (p[2] >= z) xy.emplace_back(p[0], p[1]);
    }
    volume += (z - prev) * sweep_2d(xy, ref[0], ref[1]);
    prev = z;
  }
  return volume;
}

double hv_monte_carlo(const std::vector<Point>& front, const Point& ref, std::size_t samples, core::RngStream& rng) {
  if (samples == 0) throw DomainError("hv_monte_carlo needs at least one sample");
  const std::size_t d = ref.size();
  check_dims(front, d);
  const auto pts = clipped(front, ref);
  if (pts.empty()) return 0.0;
  Point hi = ref;
  for (const auto& p : pts)
    for (std::size_t i = 0; i < d; ++i) hi[i] = std::max(hi[i], p[i]);
  double box = 1.0;
  for (std::size_t i = 0; i < d; ++i) box *= hi[i] - ref[i];
  if (!(box > 0.0)) return 0.0;
  std::size_t inside = 0;
  Point s(d);
  for (std::size_t n = 0; n < samples; ++n) {
    for (std::size_t i = 0; i < d; ++i) s[i] = rng.uniform(ref[i], hi[i]);
    for (const auto& p : pts) {
      bool covers = true;
      for (std::size_t i = 0; i < d && covers; ++i) covers = p[i] >= s[i];
      if (covers) {
        ++inside;
        break;
      }
    }
  }
  return box * static_cast<double>(inside) / static_cast<double>(samples);
}

double normalized_hv_level(const std::vector<Point>& observed, const Point& ref, double hv_star) {
  if (!(hv_star > 0.0)) throw DomainError("normalized_hv_level: hv_star must be positive");
  if (observed.empty()) return 0.0;
  const double level = hypervolume(pareto_front(observed), ref) / hv_star;
  return std::clamp(level, 0.0, 1.0);
}

std::uint64_t hypervolume_calls() { return g_hv_calls.load(std::memory_order_relaxed); }
void reset_hypervolume_calls() { g_hv_calls.store(0, std::memory_order_relaxed); }

}  // namespace tamo::pareto
