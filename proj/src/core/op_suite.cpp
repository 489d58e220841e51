#include "tamo/core/op_suite.hpp"

#include <cmath>
#include <numbers>

#include "tamo/core/ops.hpp"

namespace tamo::core {

namespace {

TensorD random_matrix(RngStream& rng, std::size_t r, std::size_t c, double scale = 1.0) {
  TensorD t = TensorD::matrix(r, c);
  for (auto& v : t.values()) v = scale * rng.normal();
  return t;
}

// Fixed random projection to a scalar, so every output coordinate matters.
Var<double> project(Graph<double>& g, Var<double> y, std::uint64_t seed) {
  RngStream rng(seed, 999);
  TensorD w = random_matrix(rng, y.rows(), y.cols());
  return sum_all(mul(y, g.constant(w)));
}

double normal_pdf(double x) { return std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi); }

// GELU with a negated backward pass.
Var<double> flipped_gelu(Var<double> a) {
  Var<double> y = gelu(a);
  const std::size_t ia = a.id();
  return a.graph().record(Tensor<double>(y.value()), {a}, [ia](Graph<double>& g, const TensorD& dy) {
    const TensorD& x = g.value(ia);
    TensorD& dx = g.grad_buffer(ia);
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double d = 0.5 * std::erfc(-x[i] / std::sqrt(2.0)) + x[i] * normal_pdf(x[i]);
      dx[i] -= dy[i] * d;
    }
  });
}

}  // namespace

std::vector<OpCase> op_suite(bool sign_flip) {
  std::vector<OpCase> cases;
  auto put = [&cases](std::string name, std::size_t, std::function<std::vector<TensorD>(RngStream&)> make, ScalarFn fn) {
    cases.push_back({std::move(name), std::move(make), std::move(fn)});
  };
  auto mats = [](std::vector<std::pair<std::size_t, std::size_t>> shapes, double scale = 1.0) {
    return [shapes, scale](RngStream& rng) {
      std::vector<TensorD> out;
      for (auto [r, c] : shapes) out.push_back(random_matrix(rng, r, c, scale));
      return out;
    };
  };
  put("matmul", 2, mats({{3, 4}, {4, 2}}), [](auto& g, auto& v) { return project(g, matmul(v[0], v[1]), 1); });
  put("linear", 3, mats({{3, 4}, {4, 5}, {1, 5}}),
           [](auto& g, auto& v) { return project(g, linear(v[0], v[1], v[2]), 2); });
  put("add", 2, mats({{2, 3}, {2, 3}}), [](auto& g, auto& v) { return project(g, add(v[0], v[1]), 3); });
  put("sub", 2, mats({{2, 3}, {2, 3}}), [](auto& g, auto& v) { return project(g, sub(v[0], v[1]), 4); });
  put("mul", 2, mats({{2, 3}, {2, 3}}), [](auto& g, auto& v) { return project(g, mul(v[0], v[1]), 5); });
  put("add_row", 2, mats({{4, 3}, {1, 3}}), [](auto& g, auto& v) { return project(g, add_row(v[0], v[1]), 6); });
  put("scale", 1, mats({{3, 3}}), [](auto& g, auto& v) { return project(g, scale(v[0], -1.7), 7); });
  put("add_scalar", 1, mats({{3, 3}}), [](auto& g, auto& v) { return project(g, add_scalar(v[0], 0.3), 7); });
  // ReLU is checked away from its kink.
  put(
      "relu", 1,
      [](RngStream& rng) {
        TensorD t = random_matrix(rng, 3, 4);
        for (auto& v : t.values()) v += v >= 0 ? 0.1 : -0.1;
        return std::vector<TensorD>{t};
      },
      [](auto& g, auto& v) { return project(g, relu(v[0]), 8); });
  put("gelu", 1, mats({{3, 4}}, 2.0), [](auto& g, auto& v) { return project(g, gelu(v[0]), 9); });
  put("softplus", 1, mats({{3, 4}}, 3.0), [](auto& g, auto& v) { return project(g, softplus(v[0]), 10); });
  put("exp", 1, mats({{3, 4}}), [](auto& g, auto& v) { return project(g, exp(v[0]), 11); });
  put(
      "log", 1,
      [](RngStream& rng) {
        TensorD t = random_matrix(rng, 3, 4);
        for (auto& v : t.values()) v = 0.5 + std::abs(v);
        return std::vector<TensorD>{t};
      },
      [](auto& g, auto& v) { return project(g, log(v[0]), 12); });
  put("layer_norm", 3, mats({{4, 6}, {1, 6}, {1, 6}}),
           [](auto& g, auto& v) { return project(g, layer_norm(v[0], v[1], v[2]), 13); });
  for (int axis : {0, 1}) {
    const std::string ax = " axis " + std::to_string(axis);
    put("softmax" + ax, 1, mats({{3, 5}}, 2.0), [axis](auto& g, auto& v) { return project(g, softmax(v[0], axis), 14); });
    put("log_softmax" + ax, 1, mats({{3, 5}}, 2.0),
             [axis](auto& g, auto& v) { return project(g, log_softmax(v[0], axis), 15); });
    put("log_sum_exp" + ax, 1, mats({{3, 5}}, 2.0),
             [axis](auto& g, auto& v) { return project(g, log_sum_exp(v[0], axis), 16); });
    put("sum" + ax, 1, mats({{3, 5}}), [axis](auto& g, auto& v) { return project(g, sum(v[0], axis), 17); });
    put("mean" + ax, 1, mats({{3, 5}}), [axis](auto& g, auto& v) { return project(g, mean(v[0], axis), 18); });
    put("concat" + ax, 2, mats({{3, 3}, {3, 3}}),
             [axis](auto& g, auto& v) { return project(g, concat<double>({v[0], v[1], v[0]}, axis), 19); });
  }
  put("mean_all", 1, mats({{3, 5}}), [](auto& g, auto& v) { return mul(mean_all(v[0]), mean_all(v[0])); });
  put("segment_mean", 1, mats({{6, 3}}),
           [](auto& g, auto& v) { return project(g, segment_mean(v[0], {0, 1, 4, 6}), 20); });
  put("gather_rows", 1, mats({{4, 3}}),
           [](auto& g, auto& v) { return project(g, gather_rows(v[0], {2, 0, 2, 3}), 21); });
  put("slice_rows", 1, mats({{5, 3}}), [](auto& g, auto& v) { return project(g, slice_rows(v[0], 1, 4), 22); });
  put("slice_cols", 1, mats({{3, 5}}), [](auto& g, auto& v) { return project(g, slice_cols(v[0], 2, 5), 23); });
  put("pick", 1, mats({{3, 5}}), [](auto& g, auto& v) { return mul(pick(v[0], 1, 3), pick(v[0], 2, 0)); });
  put("attention", 3, mats({{3, 4}, {5, 4}, {5, 6}}),
           [](auto& g, auto& v) { return project(g, attention(v[0], v[1], v[2], 2), 24); });
  put("masked attention", 3, mats({{4, 4}, {4, 4}, {4, 4}}), [](auto& g, auto& v) {
    auto mask = AttentionMask::dense(4, 4, {1, 0, 1, 1, 0, 1, 0, 0, 0, 0, 0, 0, 1, 1, 1, 0});
    return project(g, attention(v[0], v[1], v[2], 2, mask), 25);
  });
  put("block attention", 1, mats({{5, 4}}), [](auto& g, auto& v) {
    return project(g, attention(v[0], v[0], v[0], 1, AttentionMask::block_diagonal({0, 2, 5})), 26);
  });
  put(
      "gmm_log_density", 4,
      [](RngStream& rng) {
        TensorD s = random_matrix(rng, 4, 3);
        // Components kept within reach of y so no responsibility underflows
        // below finite-difference resolution.
        for (auto& v : s.values()) v = 0.6 + 0.5 * std::abs(v);
        return std::vector<TensorD>{random_matrix(rng, 4, 3), random_matrix(rng, 4, 3, 0.5), s, random_matrix(rng, 4, 1, 0.5)};
      },
      [](auto& g, auto& v) {
        return project(g, gmm_log_density(log_softmax(v[0], 1), v[1], v[2], v[3]), 27);
      });
  // Large enough blocks to take the GEMM attention path.
  put("attention gemm", 3, mats({{10, 4}, {8, 4}, {8, 6}}),
      [](auto& g, auto& v) { return project(g, attention(v[0], v[1], v[2], 2), 28); });
  put("block attention gemm", 1, mats({{17, 4}}), [](auto& g, auto& v) {
    return project(g, attention(v[0], v[0], v[0], 2, AttentionMask::block_diagonal({0, 8, 17})), 29);
  });
  put("range attention gemm", 3, mats({{12, 4}, {9, 4}, {9, 4}}), [](auto& g, auto& v) {
    std::vector<std::pair<std::size_t, std::size_t>> r(12, {0, 9});
    for (std::size_t i = 6; i < 12; ++i) r[i] = {1, 9};
    return project(g, attention(v[0], v[1], v[2], 1, AttentionMask::ranges(r)), 30);
  });
  put("layer_norm attention composite", 3,
      [](RngStream& rng) {
        return std::vector<TensorD>{random_matrix(rng, 2, 3), TensorD::row({1.0, 0.5, -0.7}), TensorD::row({0.1, 0.0, 0.2})};
      },
      [](auto& g, auto& v) {
        auto h = layer_norm(v[0], v[1], v[2]);
        return project(g, attention(h, h, h, 1), 31);
      });
  if (sign_flip) {
    put("gelu sign-flip fixture", 1, mats({{3, 4}}, 2.0), [](auto& g, auto& v) { return project(g, flipped_gelu(v[0]), 9); });
  }
  return cases;
}

std::vector<OpResult> run_op_suite(const std::vector<OpCase>& cases, int seeds, double step) {
  std::vector<OpResult> out;
  for (const auto& c : cases) {
    OpResult r{c.name, 0.0, "", seeds};
    for (int s = 0; s < seeds; ++s) {
      RngStream rng(static_cast<std::uint64_t>(s), 17);
      const auto res = grad_check(c.fn, c.make(rng), step);
      if (res.max_rel_error >= r.max_rel_error) {
        r.max_rel_error = res.max_rel_error;
        r.where = "seed " + std::to_string(s) + " " + res.where;
      }
    }
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace tamo::core
