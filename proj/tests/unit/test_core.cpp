#include <doctest.h>

#include <cmath>
#include <numbers>

#include "tamo/core/adam.hpp"
#include "tamo/core/gradcheck.hpp"
#include "tamo/core/mixture.hpp"
#include "tamo/core/op_suite.hpp"
#include "tamo/core/ops.hpp"
#include "tamo/core/rng.hpp"
#include "tamo/core/schedule.hpp"
#include "tamo/core/stats.hpp"

using namespace tamo;
using namespace tamo::core;

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

constexpr int kSeeds = 20;
constexpr double kTol = 1e-4;

// Scalar softmax-attention reference for a single head and full mask.
std::vector<double> reference_weights(const TensorD& q, const TensorD& k, std::size_t i) {
  const double sc = 1.0 / std::sqrt(static_cast<double>(q.cols()));
  std::vector<double> e(k.rows());
  double z = 0.0;
  for (std::size_t j = 0; j < k.rows(); ++j) {
    double s = 0.0;
    for (std::size_t c = 0; c < q.cols(); ++c) s += q(i, c) * k(j, c);
    e[j] = std::exp(s * sc);
    z += e[j];
  }
  for (auto& v : e) v /= z;
  return e;
}

}  // namespace

TEST_CASE("grad_check of x squared and of a constant") {
  auto r = grad_check([](Graph<double>& g, Var<double> x) { return sum_all(mul(x, x)); }, TensorD::scalar(3.0));
  CHECK(r.analytic == doctest::Approx(6.0).epsilon(1e-12));
  CHECK(r.numeric == doctest::Approx(6.0).epsilon(1e-8));
  CHECK(r.max_rel_error <= 1e-8);

  auto c = grad_check(
      [](Graph<double>& g, Var<double> x) { return add(mul(x, g.constant(TensorD::scalar(0.0))), g.constant(TensorD::scalar(2.0))); },
      TensorD::scalar(1.5));
  CHECK(c.analytic == 0.0);
  CHECK(c.numeric == 0.0);
  CHECK(c.max_rel_error == 0.0);
}

TEST_CASE("relative error uses a floored denominator") {
  CHECK(relative_error(1.0, 1.0) == 0.0);
  CHECK(relative_error(2.0, 1.0) == doctest::Approx(0.5));
  CHECK(relative_error(1e-10, 0.0) == doctest::Approx(1e-2));
}

TEST_CASE("every differentiable op passes grad_check over 20 seeds") {
  const auto results = run_op_suite(op_suite(), kSeeds);
  CHECK(results.size() >= 30);
  for (const auto& r : results) {
    INFO(r.name << " worst " << r.where << " rel " << r.max_rel_error);
    CHECK(r.max_rel_error <= kTol);
  }
}

TEST_CASE("the sign-flip fixture is caught") {
  const auto results = run_op_suite(op_suite(true), 3);
  REQUIRE(results.back().name == "gelu sign-flip fixture");
  CHECK(results.back().max_rel_error > 1.0);
}

TEST_CASE("layer-norm and attention composite on 2x3 inputs") {
  for (int s = 0; s < kSeeds; ++s) {
    RngStream rng(s, 3);
    std::vector<TensorD> pts{random_matrix(rng, 2, 3), TensorD::row({1.0, 0.5, -0.7}), TensorD::row({0.1, 0.0, 0.2})};
    auto r = grad_check(
        [](Graph<double>& g, const std::vector<Var<double>>& v) {
          auto h = layer_norm(v[0], v[1], v[2]);
          return project(g, attention(h, h, h, 1), 31);
        },
        pts, 1e-5);
    CHECK(r.max_rel_error <= kTol);
  }
}

TEST_CASE("attention weights") {
  Graph<double> g(false);
  SUBCASE("single key returns its value row") {
    auto q = g.constant(TensorD::matrix(2, 4, 0.3));
    auto k = g.constant(TensorD::matrix(1, 4, -1.0));
    auto v = g.constant(TensorD({1, 4}, std::vector<double>{1, 2, 3, 4}));
    auto out = attention(q, k, v, 2);
    for (std::size_t i = 0; i < 2; ++i)
      for (std::size_t c = 0; c < 4; ++c) CHECK(out.value()(i, c) == doctest::Approx(c + 1.0).epsilon(1e-15));
  }
  SUBCASE("identical keys split evenly") {
    RngStream rng(4, 0);
    TensorD q = random_matrix(rng, 1, 4);
    TensorD k = TensorD::matrix(2, 4, 0.7);
    auto w = attention_weights(q, k, 1);
    CHECK(w(0, 0) == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(w(0, 1) == doctest::Approx(0.5).epsilon(1e-15));
  }
  SUBCASE("random 3x4 case matches scalar reference") {
    RngStream rng(5, 0);
    TensorD q = random_matrix(rng, 3, 3), k = random_matrix(rng, 4, 3), v = random_matrix(rng, 4, 2);
    auto w = attention_weights(q, k, 1);
    auto out = attention(g.constant(q), g.constant(k), g.constant(v), 1);
    for (std::size_t i = 0; i < 3; ++i) {
      auto ref = reference_weights(q, k, i);
      for (std::size_t j = 0; j < 4; ++j) CHECK(std::abs(w(i, j) - ref[j]) <= 1e-6);
      for (std::size_t c = 0; c < 2; ++c) {
        double o = 0;
        for (std::size_t j = 0; j < 4; ++j) o += ref[j] * v(j, c);
        CHECK(std::abs(out.value()(i, c) - o) <= 1e-6);
      }
    }
  }
  SUBCASE("masked keys get exactly zero weight and masked values never matter") {
    RngStream rng(6, 0);
    TensorD q = random_matrix(rng, 3, 4), k = random_matrix(rng, 4, 4), v = random_matrix(rng, 4, 4);
    auto mask = AttentionMask::dense(3, 4, {1, 1, 0, 0, 0, 1, 1, 0, 1, 0, 0, 0});
    auto w = attention_weights(q, k, 2, mask);
    CHECK(w(0, 2) == 0.0);
    CHECK(w(0, 3) == 0.0);
    auto a = attention(g.constant(q), g.constant(k), g.constant(v), 2, mask).value();
    TensorD v2 = v, k2 = k;
    for (std::size_t c = 0; c < 4; ++c) {
      v2(3, c) += 100.0;
      k2(3, c) -= 50.0;
    }
    auto b = attention(g.constant(q), g.constant(k2), g.constant(v2), 2, mask).value();
    CHECK(a == b);
  }
  SUBCASE("all-masked row yields zeros") {
    RngStream rng(7, 0);
    auto mask = AttentionMask::ranges({{0, 2}, {1, 1}});
    auto out = attention(g.constant(random_matrix(rng, 2, 2)), g.constant(random_matrix(rng, 3, 2)),
                         g.constant(random_matrix(rng, 3, 2)), 1, mask);
    CHECK(out.value()(1, 0) == 0.0);
    CHECK(out.value()(1, 1) == 0.0);
    CHECK(out.value().all_finite());
  }
  SUBCASE("shape mismatch is a dimension error") {
    auto q = g.constant(TensorD::matrix(2, 4));
    auto k = g.constant(TensorD::matrix(3, 5));
    CHECK_THROWS_AS(attention(q, k, k, 1), DimensionError);
    CHECK_THROWS_AS(attention(q, q, q, 3), DimensionError);
    CHECK_THROWS_AS(attention(q, q, q, 1, AttentionMask::dense(3, 2, std::vector<std::uint8_t>(6, 1))), DimensionError);
  }
}

TEST_CASE("softmax is a shift-invariant simplex") {
  RngStream rng(8, 0);
  Graph<double> g(false);
  for (int trial = 0; trial < 20; ++trial) {
    TensorD x = random_matrix(rng, 4, 7, 5.0);
    auto p = softmax(g.constant(x), 1).value();
    TensorD shifted = x;
    for (auto& v : shifted.values()) v += 123.0;
    auto p2 = softmax(g.constant(shifted), 1).value();
    for (std::size_t r = 0; r < 4; ++r) {
      double s = 0;
      for (std::size_t c = 0; c < 7; ++c) {
        CHECK(p(r, c) >= 0.0);
        s += p(r, c);
        CHECK(std::abs(p(r, c) - p2(r, c)) <= 1e-6);
      }
      CHECK(std::abs(s - 1.0) <= 1e-6);
    }
  }
}

TEST_CASE("gmm_log_prob") {
  const double half_log_2pi = 0.5 * std::log(2.0 * std::numbers::pi);
  std::vector<double> w1{1.0}, m1{0.0}, s1{1.0};
  CHECK(gmm_log_prob(0.0, w1, m1, s1) == doctest::Approx(-half_log_2pi).epsilon(1e-15));
  CHECK(gmm_log_prob(0.0, w1, m1, s1) == doctest::Approx(-0.918939).epsilon(1e-6));

  std::vector<double> w2{0.5, 0.5}, m2{0.3, 0.3}, s2{0.7, 0.7};
  std::vector<double> w2b{1.0}, m2b{0.3}, s2b{0.7};
  CHECK(gmm_log_prob(1.1, w2, m2, s2) == doctest::Approx(gmm_log_prob(1.1, w2b, m2b, s2b)).epsilon(1e-14));

  RngStream rng(9, 0);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> w(3), m(3), s(3);
    double tot = 0;
    for (int l = 0; l < 3; ++l) {
      w[l] = rng.uniform(0.1, 1.0);
      tot += w[l];
      m[l] = rng.normal();
      s[l] = rng.uniform(0.2, 2.0);
    }
    for (auto& v : w) v /= tot;
    const double y = rng.normal();
    double lin = 0;
    for (int l = 0; l < 3; ++l) lin += w[l] * std::exp(-0.5 * std::pow((y - m[l]) / s[l], 2)) / (s[l] * std::sqrt(2 * std::numbers::pi));
    CHECK(std::abs(gmm_log_prob(y, w, m, s) - std::log(lin)) <= 1e-9);

    Graph<double> g(false);
    TensorD lw = TensorD::matrix(1, 3), mu = TensorD::matrix(1, 3), sg = TensorD::matrix(1, 3);
    for (int l = 0; l < 3; ++l) {
      lw[l] = std::log(w[l]);
      mu[l] = m[l];
      sg[l] = s[l];
    }
    auto d = gmm_log_density(g.constant(lw), g.constant(mu), g.constant(sg), g.constant(TensorD::scalar(y)));
    CHECK(std::abs(d.value()[0] - std::log(lin)) <= 1e-9);
  }

  std::vector<double> bad{1.0, 0.0};
  std::vector<double> wb{0.5, 0.5}, mb{0.0, 1.0};
  CHECK_THROWS_AS(gmm_log_prob(0.0, wb, mb, bad), DomainError);
  std::vector<double> neg{-1.0};
  CHECK_THROWS_AS(gmm_log_prob(0.0, w1, m1, neg), DomainError);
}

TEST_CASE("adam step") {
  SUBCASE("zero gradient leaves parameters unchanged") {
    ParamStore<double> ps;
    ps.add("p", TensorD::row({1.0, -2.0}));
    Adam<double> opt;
    CHECK(opt.step(ps, 1e-3));
    CHECK(ps.get("p").value == TensorD::row({1.0, -2.0}));
  }
  SUBCASE("one unit-gradient step moves by about the rate") {
    ParamStore<double> ps;
    ps.add("p", TensorD::scalar(0.5));
    ps.get("p").grad[0] = 1.0;
    Adam<double> opt;
    const double rate = 1e-3;
    opt.step(ps, rate);
    // m_hat = 1, v_hat = 1, update = rate / (1 + eps).
    CHECK(ps.get("p").value[0] == doctest::Approx(0.5 - rate / (1.0 + 1e-8)).epsilon(1e-14));
    CHECK(ps.get("p").grad[0] == 0.0);
    CHECK(opt.step_count() == 1);
  }
  SUBCASE("identical inputs reproduce bit-exactly") {
    auto run = [] {
      ParamStore<float> ps;
      ps.add("w", TensorF::matrix(3, 3, 0.25f));
      Adam<float> opt;
      RngStream rng(42, 1);
      for (int it = 0; it < 10; ++it) {
        for (auto& v : ps.get("w").grad.values()) v = static_cast<float>(rng.normal());
        opt.step(ps, 1e-2);
      }
      return ps.get("w").value;
    };
    CHECK(run() == run());
  }
  SUBCASE("non-finite gradient skips the update but advances the counter") {
    ParamStore<double> ps;
    ps.add("p", TensorD::scalar(1.0));
    ps.get("p").grad[0] = std::nan("");
    Adam<double> opt;
    CHECK_FALSE(opt.step(ps, 0.1));
    CHECK(ps.get("p").value[0] == 1.0);
    CHECK(opt.step_count() == 1);
    CHECK(opt.skipped_steps() == 1);
    CHECK(ps.get("p").grad[0] == 0.0);
  }
}

TEST_CASE("lr_at ramps then decays") {
  const std::int64_t total = 1000;
  CHECK(lr_at(0, total, 1e-4, 0.05) == 0.0);
  CHECK(lr_at(50, total, 1e-4, 0.05) == doctest::Approx(1e-4).epsilon(1e-12));
  CHECK(lr_at(25, total, 1e-4, 0.05) == doctest::Approx(5e-5).epsilon(1e-12));
  CHECK(std::abs(lr_at(total, total, 1e-4, 0.05)) <= 1e-20);
  CHECK(lr_at(525, total, 1e-4, 0.05) == doctest::Approx(5e-5).epsilon(1e-9));
  double prev = 1.0;
  for (std::int64_t i = 50; i <= total; ++i) {
    const double lr = lr_at(i, total, 1e-4, 0.05);
    CHECK(lr <= prev);
    prev = lr;
  }
}

TEST_CASE("rng streams are deterministic and distinct") {
  RngStream a(7, 3), b(7, 3), c(7, 4);
  bool differs = false;
  for (int i = 0; i < 100; ++i) {
    const auto x = a.next_u64();
    CHECK(x == b.next_u64());
    differs = differs || x != c.next_u64();
  }
  CHECK(differs);
  RngStream d(1, 1);
  d.normal();
  const auto st = d.state();
  const double next = d.normal();
  RngStream e(99, 99);
  e.set_state(st);
  CHECK(e.normal() == next);
  auto perm = a.permutation(10);
  std::sort(perm.begin(), perm.end());
  for (std::size_t i = 0; i < 10; ++i) CHECK(perm[i] == i);
  CHECK_THROWS_AS(a.sample_without_replacement(3, 4), SizeError);
}

TEST_CASE("graph bookkeeping") {
  ParamStore<double> ps;
  auto& p = ps.add("w", TensorD::row({1.0, 2.0}));
  CHECK_THROWS_AS(ps.add("w", TensorD::scalar(0)), ConfigError);
  CHECK_THROWS_AS(ps.get("missing"), IndexError);
  for (int rep = 0; rep < 2; ++rep) {
    Graph<double> g;
    auto w = g.param(p);
    g.backward(sum_all(mul(w, w)));
  }
  // Parameter gradients accumulate across graphs.
  CHECK(p.grad[0] == doctest::Approx(4.0));
  CHECK(p.grad[1] == doctest::Approx(8.0));
  Graph<double> g;
  CHECK_THROWS_AS(g.backward(g.input(TensorD::matrix(2, 2))), DimensionError);
  Graph<double> frozen(false);
  auto c = frozen.param(p);
  CHECK_THROWS(frozen.backward(sum_all(c)));
}

TEST_CASE("student t tails and the paired test") {
  // Cauchy: P(|T| > 1) = 1/2; df = 2 has the closed form 1 - t / sqrt(2 + t^2).
  CHECK(core::student_t_two_sided(1.0, 1.0) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(core::student_t_two_sided(2.0, 2.0) == doctest::Approx(1.0 - 2.0 / std::sqrt(6.0)).epsilon(1e-12));
  CHECK(core::student_t_two_sided(0.0, 7.0) == doctest::Approx(1.0));
  // Large df approaches the normal tail.
  CHECK(core::student_t_two_sided(1.959963984540054, 1e7) == doctest::Approx(0.05).epsilon(1e-5));

  const std::vector<double> a{1.0, 2.0, 3.0, 4.0}, b{0.5, 2.5, 2.0, 3.0};
  const auto r = core::paired_t_test(a, b);
  const double d_mean = 0.5;
  const double d_sd = std::sqrt((0.0 + 1.0 + 0.25 + 0.25) / 3.0);
  CHECK(r.mean_diff == doctest::Approx(d_mean));
  CHECK(r.t == doctest::Approx(d_mean / (d_sd / 2.0)));
  CHECK(r.p == doctest::Approx(core::student_t_two_sided(r.t, 3.0)));
  CHECK(core::paired_t_test(a, a).p == 1.0);
  CHECK_THROWS_AS(core::paired_t_test(std::vector<double>{1.0}, std::vector<double>{2.0}), SizeError);

  const auto s = core::summarize(a);
  CHECK(s.mean == 2.5);
  CHECK(s.sd == doctest::Approx(std::sqrt(5.0 / 3.0)));
  CHECK(s.ci95 == doctest::Approx(1.96 * std::sqrt(5.0 / 3.0) / 2.0));
}
