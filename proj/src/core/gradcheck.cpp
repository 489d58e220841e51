#include "tamo/core/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace tamo::core {

double relative_error(double analytic, double numeric) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
  return std::abs(analytic - numeric) / denom;
}

namespace {

void consider(GradCheckResult& r, double a, double n, const std::string& label, std::size_t idx) {
  ++r.coordinates;
  const double e = relative_error(a, n);
  r.errors.push_back(e);
  if (r.coordinates == 1 || e > r.max_rel_error) {
    r.max_rel_error = e;
    r.analytic = a;
    r.numeric = n;
    r.where = label + "[" + std::to_string(idx) + "]";
  }
}

double evaluate(const ScalarFn& f, const std::vector<TensorD>& points) {
  Graph<double> g(false);
  std::vector<Var<double>> vars;
  for (const auto& p : points) vars.push_back(g.constant(p));
  return f(g, vars).value().item();
}

}  // namespace

GradCheckResult grad_check(const ScalarFn& f, const std::vector<TensorD>& points, double step) {
  std::vector<TensorD> analytic;
  {
    Graph<double> g(true);
    std::vector<Var<double>> vars;
    for (const auto& p : points) vars.push_back(g.input(p));
    Var<double> out = f(g, vars);
    g.backward(out);
    for (std::size_t i = 0; i < points.size(); ++i) {
      const TensorD& gr = vars[i].grad();
      analytic.push_back(gr.empty() ? TensorD(points[i].shape(), 0.0) : gr);
    }
  }
  GradCheckResult r;
  std::vector<TensorD> work = points;
  for (std::size_t i = 0; i < points.size(); ++i) {
    for (std::size_t j = 0; j < points[i].size(); ++j) {
      const double x0 = points[i][j];
      work[i][j] = x0 + step;
      const double fp = evaluate(f, work);
      work[i][j] = x0 - step;
      const double fm = evaluate(f, work);
      work[i][j] = x0;
      consider(r, analytic[i][j], (fp - fm) / (2.0 * step), "input" + std::to_string(i), j);
    }
  }
  return r;
}

GradCheckResult grad_check(const std::function<Var<double>(Graph<double>&, Var<double>)>& f, const TensorD& point,
                           double step) {
  return grad_check([&f](Graph<double>& g, const std::vector<Var<double>>& v) { return f(g, v[0]); },
                    std::vector<TensorD>{point}, step);
}

GradCheckResult grad_check_params(const ParamFn& f, ParamStore<double>& params, double step, std::size_t max_per_param,
                                  RngStream* rng) {
  params.zero_grad();
  {
    Graph<double> g(true);
    Var<double> out = f(g, params);
    g.backward(out);
  }
  std::vector<TensorD> analytic;
  for (const auto& p : params) analytic.push_back(p.grad);
  params.zero_grad();

  auto eval = [&]() {
    Graph<double> g(false);
    return f(g, params).value().item();
  };

  GradCheckResult r;
  RngStream fallback(0, 0);
  RngStream& gen = rng ? *rng : fallback;
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = params[i];
    std::vector<std::size_t> coords;
    if (max_per_param > 0 && p.value.size() > max_per_param) {
      coords = gen.sample_without_replacement(p.value.size(), max_per_param);
      std::sort(coords.begin(), coords.end());
    } else {
      coords.resize(p.value.size());
      std::iota(coords.begin(), coords.end(), std::size_t{0});
    }
    for (std::size_t j : coords) {
      const double x0 = p.value[j];
      p.value[j] = x0 + step;
      const double fp = eval();
      p.value[j] = x0 - step;
      const double fm = eval();
      p.value[j] = x0;
      consider(r, analytic[i][j], (fp - fm) / (2.0 * step), p.name, j);
    }
  }
  return r;
}

}  // namespace tamo::core
