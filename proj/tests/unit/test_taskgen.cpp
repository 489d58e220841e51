#include <doctest.h>

#include <cmath>
#include <numbers>
#include <set>
#include <sstream>

#include "tamo/core/error.hpp"
#include "tamo/taskgen/tabular.hpp"
#include "tamo/taskgen/task_io.hpp"
#include "tamo/taskgen/taskgen.hpp"

using namespace tamo;
using namespace tamo::taskgen;

namespace {

double pearson(const Matrix& Y, std::size_t a, std::size_t b) {
  const std::size_t n = Y.rows();
  double ma = 0, mb = 0;
  for (std::size_t i = 0; i < n; ++i) {
    ma += Y(i, a);
    mb += Y(i, b);
  }
  ma /= n;
  mb /= n;
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < n; ++i) {
    sab += (Y(i, a) - ma) * (Y(i, b) - mb);
    saa += (Y(i, a) - ma) * (Y(i, a) - ma);
    sbb += (Y(i, b) - mb) * (Y(i, b) - mb);
  }
  return sab / std::sqrt(saa * sbb);
}

TaskSpec simple_spec(std::size_t dx, std::size_t dy, KernelFamily k = KernelFamily::rbf, double ell = 1.0, double sigma = 1.0) {
  TaskSpec s;
  s.d_x = dx;
  s.d_y = dy;
  s.kernels.assign(dy, k);
  s.sigma.assign(dy, sigma);
  s.lengthscale.assign(dy, ell);
  return s;
}

}  // namespace

TEST_CASE("task specs honour the dimension sets and priors") {
  core::RngStream rng(1, 0);
  auto s = sample_task_spec(rng, DimsConfig{{2}, {3}});
  CHECK(s.d_x == 2);
  CHECK(s.d_y == 3);
  CHECK(s.kernels.size() == 3);

  double sum = 0;
  const int n = 10000;
  for (int i = 0; i < n; ++i) {
    auto t = sample_task_spec(rng, DimsConfig{{1}, {1}});
    CHECK(t.lengthscale[0] >= 0.1);
    CHECK(t.lengthscale[0] <= 2.0);
    CHECK(t.sigma[0] >= 0.1);
    CHECK(t.sigma[0] <= 1.0);
    sum += t.lengthscale[0];
  }
  // Truncated-normal mean by midpoint quadrature of x * phi over [0.1, 2].
  double num = 0, den = 0;
  const int steps = 200000;
  const double a = 0.1, b = 2.0, h = (b - a) / steps;
  for (int i = 0; i < steps; ++i) {
    const double x = a + (i + 0.5) * h;
    const double w = std::exp(-0.5 * std::pow((x - 2.0 / 3.0) / 0.5, 2));
    num += x * w;
    den += w;
  }
  CHECK(std::abs(sum / n - num / den) <= 0.05);

  for (int i = 0; i < 1000; ++i) {
    auto t = sample_task_spec(rng, DimsConfig{{1}, {2}}, PriorConfig{.small_lengthscale = true});
    for (double l : t.lengthscale) CHECK(l <= 0.5);
  }
}

TEST_CASE("kernel families are drawn uniformly") {
  core::RngStream rng(2, 0);
  std::size_t counts[3] = {0, 0, 0};
  const std::size_t n = 3000;
  for (std::size_t i = 0; i < n; ++i) ++counts[static_cast<int>(sample_task_spec(rng, DimsConfig{{1}, {1}}).kernels[0])];
  const double p = 1.0 / 3.0, se = std::sqrt(n * p * (1 - p));
  for (auto c : counts) CHECK(std::abs(static_cast<double>(c) - n * p) <= 3 * se);
}

TEST_CASE("coregionalization parameters") {
  core::RngStream rng(3, 0);
  for (int i = 0; i < 500; ++i) {
    auto s = sample_task_spec(rng, DimsConfig{{1}, {3}});
    if (s.coregion.independent) continue;
    CHECK(s.coregion.rank >= 1);
    CHECK(s.coregion.rank <= 3);
    CHECK(s.coregion.B.size() == 3 * s.coregion.rank);
    for (double v : s.coregion.v) CHECK(v >= 0.05);
  }
}

TEST_CASE("kernel matrices") {
  core::RngStream rng(4, 0);
  Matrix X = uniform_pool(rng, 5, 2);
  for (auto fam : {KernelFamily::rbf, KernelFamily::matern32, KernelFamily::matern52}) {
    auto K = kernel_matrix(X, fam, 0.7, 0.4);
    for (std::size_t i = 0; i < 5; ++i) {
      CHECK(K(i, i) == 0.4 * 0.4);
      for (std::size_t j = 0; j < 5; ++j) {
        CHECK(std::abs(K(i, j) - K(j, i)) <= 1e-12);
        const double d = std::hypot(X(i, 0) - X(j, 0), X(i, 1) - X(j, 1));
        double ref = 0;
        if (fam == KernelFamily::rbf) ref = 0.16 * std::exp(-d * d / (2 * 0.49));
        if (fam == KernelFamily::matern32) ref = 0.16 * (1 + std::sqrt(3.0) * d / 0.7) * std::exp(-std::sqrt(3.0) * d / 0.7);
        if (fam == KernelFamily::matern52)
          ref = 0.16 * (1 + std::sqrt(5.0) * d / 0.7 + 5 * d * d / (3 * 0.49)) * std::exp(-std::sqrt(5.0) * d / 0.7);
        CHECK(std::abs(K(i, j) - ref) <= 1e-12);
      }
    }
  }
  CHECK_THROWS_AS(kernel_matrix(X, KernelFamily::rbf, 0.0, 1.0), DomainError);
  CHECK_THROWS_AS(kernel_matrix(X, KernelFamily::rbf, 1.0, -1.0), DomainError);
}

TEST_CASE("GP draws") {
  core::RngStream rng(5, 0);
  Matrix X = uniform_pool(rng, 200, 1);
  SUBCASE("very long lengthscale gives a near-constant function") {
    auto s = simple_spec(1, 1, KernelFamily::rbf, 1e4, 1.0);
    auto Y = sample_gp_values(s, X, rng);
    double m = 0, v = 0;
    for (double y : Y.values()) m += y;
    m /= Y.size();
    for (double y : Y.values()) v += (y - m) * (y - m);
    CHECK(std::sqrt(v / Y.size()) < 0.05 * 1.0);
  }
  SUBCASE("fixed seed reproduces bit-exactly") {
    core::RngStream a(11, 3), b(11, 3);
    auto ta = sample_task(a, DimsConfig{}, PriorConfig{}, 128);
    auto tb = sample_task(b, DimsConfig{}, PriorConfig{}, 128);
    CHECK(ta.pool_X == tb.pool_X);
    CHECK(ta.pool_Y == tb.pool_Y);
    CHECK(encode_task(ta) == encode_task(tb));
  }
  SUBCASE("rank-one coregionalization with vanishing v correlates outputs") {
    auto s = simple_spec(1, 3, KernelFamily::matern52, 1.0, 1.0);
    s.coregion.independent = false;
    s.coregion.rank = 1;
    s.coregion.B = {1.0, -0.5, 2.0};
    s.coregion.v = {1e-10, 1e-10, 1e-10};
    auto Y = sample_gp_values(s, X, rng);
    CHECK(std::abs(pearson(Y, 0, 1)) > 0.999);
    CHECK(std::abs(pearson(Y, 0, 2)) > 0.999);
    CHECK(std::abs(pearson(Y, 1, 2)) > 0.999);
  }
}

TEST_CASE("output normalization") {
  Matrix raw({3, 1}, std::vector<double>{0, 5, 10});
  auto n = normalize_outputs(raw);
  CHECK(n == Matrix({3, 1}, std::vector<double>{-1, 0, 1}));
  CHECK(normalize_outputs(n) == n);
  core::RngStream rng(6, 0);
  Matrix r2 = Matrix::matrix(50, 3);
  for (auto& v : r2.values()) v = 7 * rng.normal() + 3;
  auto n2 = normalize_outputs(r2);
  for (std::size_t c = 0; c < 3; ++c) {
    double lo = 1e9, hi = -1e9;
    for (std::size_t i = 0; i < 50; ++i) {
      lo = std::min(lo, n2(i, c));
      hi = std::max(hi, n2(i, c));
    }
    CHECK(lo == -1.0);
    CHECK(hi == 1.0);
  }
  CHECK(normalize_outputs(n2) == n2);
  CHECK_THROWS_AS(normalize_outputs(Matrix({3, 1}, std::vector<double>{2, 2, 2})), DegenerateTaskError);
}

TEST_CASE("quadratic bowl") {
  auto s = simple_spec(2, 1);
  s.bowl.enabled = true;
  s.bowl.optima = {{0.0, 0.0}};
  Matrix X({3, 2}, std::vector<double>{0, 0, 5, 5, 1, -2});
  Matrix zero = Matrix::matrix(3, 1);
  auto out = apply_quadratic_bowl(zero, X, s);
  CHECK(out(0, 0) == 0.0);
  CHECK(out(1, 0) == doctest::Approx(-0.02 * 50).epsilon(1e-15));
  CHECK(out(2, 0) < 0.0);
  s.bowl.coef = 0.0;
  CHECK(apply_quadratic_bowl(zero, X, s) == zero);
  s.bowl.enabled = false;
  s.bowl.coef = 0.02;
  CHECK(apply_quadratic_bowl(zero, X, s) == zero);
}

TEST_CASE("sampled tasks satisfy their invariants") {
  for (std::uint64_t i = 0; i < 40; ++i) {
    core::RngStream rng(7, i);
    PriorConfig prior;
    prior.quadratic_bowl = i % 4 == 0;
    prior.small_lengthscale = i % 3 == 0;
    auto t = sample_task(rng, DimsConfig{{1, 2, 3}, {1, 2, 3}}, prior, 256, "t" + std::to_string(i));
    CHECK_NOTHROW(validate_task(t));
    for (double r : t.ref) CHECK(std::abs(r + 1.0) <= 1e-9);
    CHECK(t.hv_star > 0.0);
    CHECK(t.hv_star <= std::pow(2.0, t.d_y()));
  }
}

TEST_CASE("prediction and policy batches") {
  core::RngStream rng(8, 0);
  auto task = sample_task(rng, DimsConfig{{1, 2}, {1, 2}}, PriorConfig{}, 256);
  for (int rep = 0; rep < 20; ++rep) {
    auto b = make_prediction_batch(task.spec, rng);
    CHECK(b.context_x.rows() + b.target_x.rows() == 300);
    CHECK(b.context_x.rows() >= 2);
    CHECK(b.context_x.rows() <= 50 * task.spec.d_x);
    CHECK(b.context_y.cols() == task.d_y());
    std::set<std::vector<double>> ctx;
    for (std::size_t i = 0; i < b.context_x.rows(); ++i)
      ctx.insert(std::vector<double>(b.context_x.data() + i * task.d_x(), b.context_x.data() + (i + 1) * task.d_x()));
    for (std::size_t i = 0; i < b.target_x.rows(); ++i)
      CHECK(ctx.count(std::vector<double>(b.target_x.data() + i * task.d_x(), b.target_x.data() + (i + 1) * task.d_x())) == 0);
  }
  auto p = make_policy_batch(task, rng, 256);
  CHECK(p.query.size() == 256);
  CHECK(std::set<std::size_t>(p.query.begin(), p.query.end()).size() == 256);
  CHECK(p.initial < 256);
  CHECK_THROWS_AS(make_policy_batch(task, rng, 257), SizeError);
}

TEST_CASE("observation noise touches observed values only") {
  core::RngStream rng(9, 0);
  PriorConfig prior;
  prior.noise_std = 0.1;
  auto t = sample_task(rng, DimsConfig{{1}, {2}}, prior, 64);
  CHECK_NOTHROW(validate_task(t));
  const auto y = observe(t, 3, rng);
  CHECK(y != t.y(3));
  t.spec.noise_std = 0.0;
  CHECK(observe(t, 3, rng) == t.y(3));
}

TEST_CASE("task files round-trip") {
  core::RngStream rng(10, 0);
  auto t = sample_task(rng, DimsConfig{{2}, {3}}, PriorConfig{.quadratic_bowl = true}, 100, "roundtrip");
  const auto bytes = encode_task(t);
  auto u = decode_task(bytes);
  CHECK(u.pool_X == t.pool_X);
  CHECK(u.pool_Y == t.pool_Y);
  CHECK(u.ref == t.ref);
  CHECK(u.hv_star == t.hv_star);
  CHECK(u.id == "roundtrip");
  CHECK(spec_to_json(u.spec) == spec_to_json(t.spec));
  CHECK(encode_task(u) == bytes);
  CHECK_NOTHROW(validate_task(u));
  auto bad = bytes;
  bad[0] = 'X';
  CHECK_THROWS_AS(decode_task(bad), FormatError);
  bad = bytes;
  bad.pop_back();
  CHECK_THROWS_AS(decode_task(bad), FormatError);
}

TEST_CASE("tabular tasks") {
  SUBCASE("1-D grid interpolation") {
    TabularRecords r{Matrix({3, 1}, std::vector<double>{0, 1, 2}), Matrix({3, 2}, std::vector<double>{0, 4, 2, 0, 1, 1})};
    GridInterpolator interp(r);
    CHECK(interp({1.0}) == std::vector<double>{2, 0});
    CHECK(interp({0.5})[0] == doctest::Approx(1.0));
    CHECK(interp({0.5})[1] == doctest::Approx(2.0));
    auto task = load_tabular_task(r, 1, 2);
    CHECK(task.pool_X(0, 0) == -5.0);
    CHECK(task.pool_X(2, 0) == 5.0);
    CHECK(task.pool_Y(1, 0) == 1.0);
    CHECK(task.pool_Y(0, 0) == -1.0);
    auto dense = load_tabular_task(r, 1, 2, Matrix({3, 1}, std::vector<double>{-2.5, 0.0, 2.5}));
    CHECK(dense.size() == 3);
    CHECK(dense.pool_Y(2, 0) == 0.0);
  }
  SUBCASE("2-D grid is multilinear and exact at nodes") {
    std::vector<double> xs, ys;
    for (double a : {0.0, 1.0, 3.0})
      for (double b : {-1.0, 2.0}) {
        xs.push_back(a);
        xs.push_back(b);
        ys.push_back(a * b + a);
      }
    TabularRecords r{Matrix({6, 2}, xs), Matrix({6, 1}, ys)};
    GridInterpolator interp(r);
    for (std::size_t i = 0; i < 6; ++i) CHECK(interp({xs[2 * i], xs[2 * i + 1]})[0] == ys[i]);
    // a*b + a is bilinear, so interpolation is exact everywhere on the grid.
    CHECK(interp({2.0, 0.5})[0] == doctest::Approx(2.0 * 0.5 + 2.0));
    TabularRecords scattered{Matrix({3, 2}, std::vector<double>{0, 0, 1, 1, 2, 0}), Matrix({3, 1}, std::vector<double>{1, 2, 3})};
    CHECK_THROWS_AS(GridInterpolator{scattered}, FormatError);
    CHECK_NOTHROW(load_tabular_task(scattered, 2, 1));
  }
  SUBCASE("CSV round trip is bit-exact") {
    core::RngStream rng(11, 0);
    TabularRecords r{Matrix::matrix(7, 2), Matrix::matrix(7, 3)};
    for (auto& v : r.X.values()) v = rng.normal() * 1e3;
    for (auto& v : r.Y.values()) v = rng.normal() / 7.0;
    std::stringstream ss;
    write_tabular_csv(ss, r);
    auto back = read_tabular_csv(ss);
    CHECK(back.X == r.X);
    CHECK(back.Y == r.Y);
  }
  SUBCASE("malformed CSV") {
    std::stringstream bad_header("a,b\n1,2\n");
    CHECK_THROWS_AS(read_tabular_csv(bad_header), FormatError);
    std::stringstream bad_row("x1,y1\n1,2,3\n");
    CHECK_THROWS_AS(read_tabular_csv(bad_row), FormatError);
    std::stringstream bad_num("x1,y1\n1,abc\n");
    CHECK_THROWS_AS(read_tabular_csv(bad_num), FormatError);
  }
}
