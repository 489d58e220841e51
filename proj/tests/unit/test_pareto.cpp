#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "tamo/core/error.hpp"
#include "tamo/pareto/pareto.hpp"

using namespace tamo;
using namespace tamo::pareto;

namespace {

std::vector<Point> random_points(core::RngStream& rng, std::size_t n, std::size_t d) {
  std::vector<Point> pts(n, Point(d));
  for (auto& p : pts)
    for (auto& v : p) v = rng.uniform(-1.0, 1.0);
  return pts;
}

// Points on a concave surface so most of them are mutually non-dominated.
std::vector<Point> random_front(core::RngStream& rng, std::size_t n, std::size_t d) {
  std::vector<Point> pts;
  for (std::size_t k = 0; k < n; ++k) {
    Point p(d);
    double norm = 0;
    for (auto& v : p) {
      v = std::abs(rng.normal()) + 1e-3;
      norm += v * v;
    }
    for (auto& v : p) v = v / std::sqrt(norm) - 0.2;
    pts.push_back(p);
  }
  return pts;
}

std::vector<Point> brute_front(const std::vector<Point>& pts) {
  std::vector<Point> out;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    bool dominated = false, dup = false;
    for (std::size_t j = 0; j < pts.size(); ++j) {
      if (j == i) continue;
      bool ge = true, gt = false;
      for (std::size_t k = 0; k < pts[i].size(); ++k) {
        ge = ge && pts[j][k] >= pts[i][k];
        gt = gt || pts[j][k] > pts[i][k];
      }
      dominated = dominated || (ge && gt);
      dup = dup || (j < i && pts[j] == pts[i]);
    }
    if (!dominated && !dup) out.push_back(pts[i]);
  }
  std::sort(out.begin(), out.end());
  return out;
}

// Exact volume by coordinate compression: a grid cell is covered iff some
// point weakly dominates its upper corner.
double grid_volume(const std::vector<Point>& pts, const Point& ref) {
  const std::size_t d = ref.size();
  std::vector<std::vector<double>> axes(d);
  for (std::size_t k = 0; k < d; ++k) {
    axes[k].push_back(ref[k]);
    for (const auto& p : pts) axes[k].push_back(std::max(p[k], ref[k]));
    std::sort(axes[k].begin(), axes[k].end());
    axes[k].erase(std::unique(axes[k].begin(), axes[k].end()), axes[k].end());
  }
  double total = 0;
  std::vector<std::size_t> idx(d, 0);
  while (true) {
    bool valid = true;
    for (std::size_t k = 0; k < d; ++k) valid = valid && idx[k] + 1 < axes[k].size();
    if (valid) {
      double vol = 1;
      Point upper(d);
      for (std::size_t k = 0; k < d; ++k) {
        vol *= axes[k][idx[k] + 1] - axes[k][idx[k]];
        upper[k] = axes[k][idx[k] + 1];
      }
      for (const auto& p : pts) {
        bool cov = true;
        for (std::size_t k = 0; k < d; ++k) cov = cov && p[k] >= upper[k];
        if (cov) {
          total += vol;
          break;
        }
      }
    }
    std::size_t k = 0;
    while (k < d && ++idx[k] + 1 >= axes[k].size()) idx[k++] = 0;
    if (k == d) break;
  }
  return total;
}

}  // namespace

TEST_CASE("dominates") {
  CHECK(dominates({1, 1}, {0, 0}));
  CHECK_FALSE(dominates({1, 0}, {0, 1}));
  CHECK_FALSE(dominates({0, 1}, {1, 0}));
  CHECK_FALSE(dominates({1, 1}, {1, 1}));
  CHECK(dominates({1, 1}, {1, 0}));
  CHECK_THROWS_AS(dominates({1}, {1, 2}), DimensionError);
}

TEST_CASE("pareto_front") {
  CHECK(pareto_front({{1, 2}, {2, 1}, {0, 0}}) == std::vector<Point>{{1, 2}, {2, 1}});
  CHECK(pareto_front({{0.5, 0.5}}) == std::vector<Point>{{0.5, 0.5}});
  CHECK(pareto_front({}).empty());
  CHECK(pareto_front({{1, 2}, {1, 2}, {1, 2 + 1e-14}}).size() == 1);
  core::RngStream rng(1, 0);
  for (int trial = 0; trial < 10; ++trial) {
    auto pts = random_points(rng, 200, 3);
    auto f = pareto_front(pts);
    CHECK(f == brute_front(pts));
    CHECK(pareto_front(f) == f);
  }
}

TEST_CASE("hypervolume hand cases") {
  CHECK(hypervolume({{1, 1}}, {0, 0}) == 1.0);
  CHECK(hypervolume({{1, 2}, {2, 1}}, {0, 0}) == 3.0);
  CHECK(hypervolume({}, {0, 0}) == 0.0);
  CHECK(hypervolume({{3}}, {-1}) == 4.0);
  CHECK(hypervolume({{1, 1, 1}}, {0, 0, 0}) == 1.0);
  // Two unit-offset boxes in 3-D: 2*1*1 + 1*2*1 - 1*1*1.
  CHECK(hypervolume({{2, 1, 1}, {1, 2, 1}}, {0, 0, 0}) == 3.0);
  // Staircase 3-D case: boxes 3x1x1, 1x3x1, 1x1x3, pairwise overlaps 1, triple 1.
  CHECK(hypervolume({{3, 1, 1}, {1, 3, 1}, {1, 1, 3}}, {0, 0, 0}) == 7.0);
  // Points below the reference contribute nothing.
  CHECK(hypervolume({{-1, 5}, {1, 1}}, {0, 0}) == 1.0);
  CHECK_THROWS_AS(hypervolume({{1, 1, 1, 1}}, {0, 0, 0, 0}), DimensionError);
}

TEST_CASE("hypervolume agrees with the grid oracle, is order invariant and monotone") {
  core::RngStream rng(2, 0);
  for (std::size_t d = 1; d <= 3; ++d) {
    for (int trial = 0; trial < 30; ++trial) {
      auto pts = random_points(rng, 1 + rng.index(25), d);
      Point ref(d, -1.0);
      const double exact = hypervolume(pts, ref);
      CHECK(std::abs(exact - grid_volume(pts, ref)) <= 1e-12);
      auto shuffled = pts;
      auto perm = rng.permutation(pts.size());
      for (std::size_t i = 0; i < perm.size(); ++i) shuffled[i] = pts[perm[i]];
      CHECK(std::abs(hypervolume(shuffled, ref) - exact) <= 1e-12);
      std::vector<Point> growing;
      double prev = 0;
      for (const auto& p : pts) {
        growing.push_back(p);
        const double hv = hypervolume(growing, ref);
        CHECK(hv >= prev - 1e-15);
        prev = hv;
      }
    }
  }
}

TEST_CASE("monte-carlo hypervolume") {
  core::RngStream rng(3, 0);
  CHECK(std::abs(hv_monte_carlo({{1, 1}}, {0, 0}, 1000000, rng) - 1.0) <= 0.01);
  CHECK(hv_monte_carlo({}, {0, 0}, 100, rng) == 0.0);
  CHECK(hv_monte_carlo({{0, 1}}, {0, 0}, 100, rng) == 0.0);
  for (std::size_t d = 2; d <= 3; ++d) {
    for (int trial = 0; trial < 5; ++trial) {
      auto f = pareto_front(random_front(rng, 10, d));
      Point ref(d, -0.2);
      const double exact = hypervolume(f, ref);
      Point hi = ref;
      for (const auto& p : f)
        for (std::size_t k = 0; k < d; ++k) hi[k] = std::max(hi[k], p[k]);
      double box = 1;
      for (std::size_t k = 0; k < d; ++k) box *= hi[k] - ref[k];
      const std::size_t n = 100000;
      const double est = hv_monte_carlo(f, ref, n, rng);
      const double frac = exact / box;
      const double se = box * std::sqrt(frac * (1 - frac) / n);
      CHECK(std::abs(est - exact) <= 3 * se + 1e-12);
    }
  }
}

TEST_CASE("normalized level and regret") {
  const std::vector<Point> front{{1, 2}, {2, 1}};
  const double star = hypervolume(front, {0, 0});
  CHECK(normalized_hv_level(front, {0, 0}, star) == 1.0);
  CHECK(normalized_hv_level({}, {0, 0}, star) == 0.0);
  // Only (1,2): rectangle 1x2 out of the staircase area 3.
  CHECK(normalized_hv_level({{1, 2}, {0.5, 0.5}}, {0, 0}, star) == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
  CHECK(normalized_hv_level({{5, 5}}, {0, 0}, star) == 1.0);
  CHECK_THROWS_AS(normalized_hv_level(front, {0, 0}, 0.0), DomainError);
  CHECK(simple_regret(1.0) == 0.0);
  CHECK(simple_regret(0.0) == 1.0);
  CHECK(simple_regret(0.75) == 0.25);

  core::RngStream rng(4, 0);
  auto pts = random_points(rng, 40, 2);
  const double all = hypervolume(pts, {-1, -1});
  std::vector<Point> obs;
  double prev = 0;
  for (const auto& p : pts) {
    obs.push_back(p);
    const double lvl = normalized_hv_level(obs, {-1, -1}, all);
    CHECK(lvl >= prev);
    CHECK(lvl <= 1.0);
    prev = lvl;
  }
  CHECK(prev == doctest::Approx(1.0).epsilon(1e-14));
}

TEST_CASE("hypervolume call counter") {
  reset_hypervolume_calls();
  hypervolume({{1, 1}}, {0, 0});
  hypervolume({{1, 1}}, {0, 0});
  CHECK(hypervolume_calls() == 2);
  reset_hypervolume_calls();
  CHECK(hypervolume_calls() == 0);
}
