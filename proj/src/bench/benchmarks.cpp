#include "tamo/bench/benchmarks.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "tamo/core/error.hpp"

namespace tamo::bench {

namespace {

constexpr double kPi = std::numbers::pi;

void need_arity(const std::vector<double>& z, std::size_t n, const std::string& name) {
  if (z.size() != n) throw DimensionError(name + " takes " + std::to_string(n) + " inputs");
}

double ackley(const std::vector<double>& x) {
  double sq = 0.0, cs = 0.0;
  for (double v : x) {
    sq += v * v;
    cs += std::cos(2.0 * kPi * v);
  }
  const double n = static_cast<double>(x.size());
  return -20.0 * std::exp(-0.2 * std::sqrt(sq / n)) - std::exp(cs / n) + std::numbers::e + 20.0;
}

double rastrigin(const std::vector<double>& x) {
  double s = 10.0 * static_cast<double>(x.size());
  for (double v : x) s += v * v - 10.0 * std::cos(2.0 * kPi * v);
  return s;
}

double rosenbrock(const std::vector<double>& x) {
  return 100.0 * std::pow(x[1] - x[0] * x[0], 2) + std::pow(1.0 - x[0], 2);
}

double branin(const std::vector<double>& x) {
  const double b = 5.1 / (4.0 * kPi * kPi), c = 5.0 / kPi, r = 6.0, s = 10.0, t = 1.0 / (8.0 * kPi);
  return std::pow(x[1] - b * x[0] * x[0] + c * x[0] - r, 2) + s * (1.0 - t) * std::cos(x[0]) + s;
}

double currin(const std::vector<double>& z) {
  // Right limit at z2 = 0: exp(-1/(2 z2)) -> 0.
  const double factor = z[1] > 0.0 ? 1.0 - std::exp(-1.0 / (2.0 * z[1])) : 1.0;
  const double z1 = z[0];
  return factor * (2300.0 * z1 * z1 * z1 + 1900.0 * z1 * z1 + 2092.0 * z1 + 60.0) /
         (100.0 * z1 * z1 * z1 + 500.0 * z1 * z1 + 4.0 * z1 + 20.0);
}

AffineBox identity_box() { return {{-5.0, -5.0}, {5.0, 5.0}}; }

}  // namespace

double eval_function(const std::string& name, const std::vector<double>& z) {
  for (double v : z) {
    if (!std::isfinite(v)) throw DomainError(name + ": non-finite input");
  }
  if (name == "ackley") {
    need_arity(z, 2, name);
    return ackley(z);
  }
  if (name == "rastrigin") {
    need_arity(z, 2, name);
    return rastrigin(z);
  }
  if (name == "rosenbrock") {
    need_arity(z, 2, name);
    return rosenbrock(z);
  }
  if (name == "branin") {
    need_arity(z, 2, name);
    return branin(z);
  }
  if (name == "currin") {
    need_arity(z, 2, name);
    return currin(z);
  }
  throw ConfigError("unknown test function '" + name + "'");
}

std::vector<double> AffineBox::to_native(const std::vector<double>& u) const {
  std::vector<double> z(u.size());
  for (std::size_t i = 0; i < u.size(); ++i) z[i] = lo[i] + (hi[i] - lo[i]) * (u[i] + 5.0) / 10.0;
  return z;
}

std::vector<double> AffineBox::to_domain(const std::vector<double>& z) const {
  std::vector<double> u(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) u[i] = -5.0 + 10.0 * (z[i] - lo[i]) / (hi[i] - lo[i]);
  return u;
}

std::vector<double> grid_axis(std::size_t grid) {
  if (grid < 2) throw SizeError("benchmark grid needs at least 2 points per axis");
  std::vector<double> a(grid);
  for (std::size_t i = 0; i < grid; ++i) a[i] = -5.0 + 10.0 * static_cast<double>(i) / static_cast<double>(grid);
  return a;
}

std::vector<double> AnalyticTask::evaluate(const std::vector<double>& u) const {
  std::vector<double> out;
  for (const auto& o : objectives) {
    const double v = -eval_function(o.function, o.box.to_native(u));
    out.push_back(2.0 * (v - o.out_lo) / (o.out_hi - o.out_lo) - 1.0);
  }
  return out;
}

taskgen::SampledTask AnalyticTask::to_task() const {
  const auto axis = grid_axis(grid);
  const std::size_t n = grid * grid, dy = objectives.size();
  taskgen::SampledTask t;
  t.id = name;
  t.spec.d_x = 2;
  t.spec.d_y = dy;
  t.pool_X = core::Matrix::matrix(n, 2);
  core::Matrix raw = core::Matrix::matrix(n, dy);
  for (std::size_t i = 0; i < grid; ++i) {
    for (std::size_t j = 0; j < grid; ++j) {
      const std::size_t r = i * grid + j;
      t.pool_X(r, 0) = axis[i];
      t.pool_X(r, 1) = axis[j];
      for (std::size_t k = 0; k < dy; ++k) {
        raw(r, k) = -eval_function(objectives[k].function, objectives[k].box.to_native({axis[i], axis[j]}));
      }
    }
  }
  t.pool_Y = taskgen::normalize_outputs(raw);
  for (auto& v : t.pool_Y.values()) v = static_cast<double>(static_cast<float>(v));
  taskgen::finalize_task(t);
  return t;
}

std::vector<std::string> pair_names() { return {"ackley-rastrigin", "ackley-rosenbrock", "branin-currin"}; }

AnalyticTask make_pair_task(const std::string& pair, std::size_t grid) {
  AnalyticTask t;
  t.name = pair;
  t.grid = grid;
  if (pair == "ackley-rastrigin") {
    t.objectives = {{"ackley", identity_box()}, {"rastrigin", identity_box()}};
  } else if (pair == "ackley-rosenbrock") {
    t.objectives = {{"ackley", identity_box()}, {"rosenbrock", identity_box()}};
  } else if (pair == "branin-currin") {
    t.objectives = {{"branin", {{-5.0, 0.0}, {10.0, 15.0}}}, {"currin", {{0.0, 0.0}, {1.0, 1.0}}}};
  } else {
    throw ConfigError("unknown benchmark pair '" + pair + "'");
  }
  const auto axis = grid_axis(grid);
  for (auto& o : t.objectives) {
    o.out_lo = std::numeric_limits<double>::infinity();
    o.out_hi = -std::numeric_limits<double>::infinity();
    for (double a : axis) {
      for (double b : axis) {
        const double v = -eval_function(o.function, o.box.to_native({a, b}));
        o.out_lo = std::min(o.out_lo, v);
        o.out_hi = std::max(o.out_hi, v);
      }
    }
  }
  return t;
}

}  // namespace tamo::bench
