#include "tamo/harness/selfcheck.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>

#include "tamo/core/error.hpp"
#include "tamo/core/json_util.hpp"
#include "tamo/core/op_suite.hpp"
#include "tamo/harness/config.hpp"
#include "tamo/model/checkpoint.hpp"
#include "tamo/model/selftest.hpp"
#include "tamo/pareto/pareto.hpp"

namespace tamo::harness {

using core::Matrix;
using core::RngStream;

namespace {

constexpr double kOpTol = 1e-4;
constexpr double kMiniatureTol = 1e-3;
constexpr double kHvTol = 0.01;
constexpr double kHistoryPermTol = 1e-5;
constexpr double kQueryPermTol = 1e-6;

std::string fmt(const char* f, auto... args) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

struct Probe {
  model::History history;
  Matrix queries;
  model::PosAssignment assign;
};

Probe make_probe(const model::Model& m, std::uint64_t seed, std::size_t d_x, std::size_t d_y) {
  RngStream rng(seed, 0x7065726d);
  Probe p{model::History(d_x, d_y), Matrix::matrix(12, d_x), model::sample_assignment(m.config, d_x, d_y, rng)};
  const std::size_t n = 3 + rng.index(8);
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> x(d_x), y(d_y);
    for (auto& v : x) v = rng.uniform(-5, 5);
    for (auto& v : y) v = rng.uniform(-1, 1);
    p.history.add(x, y);
  }
  for (auto& v : p.queries.values()) v = rng.uniform(-5, 5);
  return p;
}

double worst_relative(const std::vector<double>& a, const std::vector<double>& b) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double scale = std::max(std::abs(a[i]), std::abs(b[i]));
    if (scale > 0.0) worst = std::max(worst, std::abs(a[i] - b[i]) / scale);
  }
  return worst;
}

std::vector<model::Model> probe_models(std::uint64_t seed) {
  std::vector<model::Model> out;
  out.push_back(model::make_model(model::miniature_config(), seed));
  model::ModelConfig c;
  c.d_e = 16;
  c.heads = 4;
  c.ff_width = 32;
  c.components = 3;
  c.head_layers = 2;
  out.push_back(model::make_model(c, seed + 1));
  return out;
}

}  // namespace

double history_permutation_error(const model::Model& m, std::uint64_t seed, std::size_t d_x, std::size_t d_y) {
  const Probe p = make_probe(m, seed, d_x, d_y);
  RngStream rng(seed, 0x68697374);
  const auto order = rng.permutation(p.history.size());
  model::History shuffled(d_x, d_y);
  for (auto i : order) shuffled.add(p.history.x(i), p.history.y(i), p.history.observed(i));
  const auto a = model::policy_forward(m, p.history, p.queries, 2, 10, p.assign);
  const auto b = model::policy_forward(m, shuffled, p.queries, 2, 10, p.assign);
  return worst_relative(a.probs, b.probs);
}

double query_permutation_error(const model::Model& m, std::uint64_t seed, std::size_t d_x, std::size_t d_y) {
  const Probe p = make_probe(m, seed, d_x, d_y);
  RngStream rng(seed, 0x71756572);
  const auto order = rng.permutation(p.queries.rows());
  Matrix q = Matrix::matrix(p.queries.rows(), d_x);
  for (std::size_t i = 0; i < order.size(); ++i) {
    for (std::size_t c = 0; c < d_x; ++c) q(i, c) = p.queries(order[i], c);
  }
  const auto a = model::policy_forward(m, p.history, p.queries, 2, 10, p.assign);
  const auto b = model::policy_forward(m, p.history, q, 2, 10, p.assign);
  std::vector<double> permuted(order.size());
  for (std::size_t i = 0; i < order.size(); ++i) permuted[i] = a.probs[order[i]];
  return worst_relative(permuted, b.probs);
}

SelfcheckCommand selfcheck_from_json(const nlohmann::json& j, std::optional<std::uint64_t> seed) {
  check_schema(j, "selfcheck");
  const std::string ctx = "selfcheck";
  core::require_keys(j,
                     {"schema_version", "op_seeds", "miniature_seeds", "hv_fronts", "hv_samples",
                      "permutation_cases", "sign_flip", "seed"},
                     ctx);
  SelfcheckCommand c;
  c.op_seeds = core::get_or(j, "op_seeds", c.op_seeds, ctx);
  c.miniature_seeds = core::get_or(j, "miniature_seeds", c.miniature_seeds, ctx);
  c.hv_fronts = core::get_or(j, "hv_fronts", c.hv_fronts, ctx);
  c.hv_samples = core::get_or(j, "hv_samples", c.hv_samples, ctx);
  c.permutation_cases = core::get_or(j, "permutation_cases", c.permutation_cases, ctx);
  c.sign_flip = core::get_or(j, "sign_flip", c.sign_flip, ctx);
  c.seed = effective_seed(j, seed);
  if (c.op_seeds <= 0) throw ConfigError("selfcheck.op_seeds must be positive");
  if (c.hv_samples == 0) throw ConfigError("selfcheck.hv_samples must be positive");
  return c;
}

std::vector<CheckLine> run_selfcheck(const SelfcheckCommand& c, std::ostream* report) {
  std::vector<CheckLine> lines;
  auto emit = [&](std::string name, bool pass, std::string detail) {
    if (report) *report << (pass ? "PASS " : "FAIL ") << name << "  " << detail << std::endl;
    lines.push_back({std::move(name), pass, std::move(detail)});
  };

  for (const auto& r : core::run_op_suite(core::op_suite(c.sign_flip), c.op_seeds)) {
    emit("grad " + r.name, r.max_rel_error <= kOpTol,
         fmt("max rel %.3g at %s over %d seeds", r.max_rel_error, r.where.c_str(), r.seeds));
  }
  for (auto s : c.miniature_seeds) {
    const auto r = model::miniature_grad_check(c.seed + s, model::Activation::gelu);
    emit(fmt("grad miniature seed %llu", (unsigned long long)(c.seed + s)), r.max_rel_error <= kMiniatureTol,
         fmt("max rel %.3g at %s over %zu coordinates", r.max_rel_error, r.where.c_str(), r.coordinates));
  }

  RngStream hv_rng(c.seed, 0x68766f72);
  for (std::size_t d = 1; d <= 3; ++d) {
    double worst = 0.0;
    for (std::size_t f = 0; f < c.hv_fronts; ++f) {
      std::vector<pareto::Point> pts(2 + hv_rng.index(12), pareto::Point(d));
      for (auto& p : pts) {
        for (auto& v : p) v = hv_rng.uniform();
      }
      const pareto::Point ref(d, -0.1);
      const double exact = pareto::hypervolume(pts, ref);
      const double mc = pareto::hv_monte_carlo(pts, ref, c.hv_samples, hv_rng);
      worst = std::max(worst, std::abs(exact - mc) / exact);
    }
    emit(fmt("hypervolume d_y=%zu", d), worst <= kHvTol, fmt("worst MC deviation %.3g over %zu fronts", worst, c.hv_fronts));
  }
  {
    const double box = pareto::hypervolume({{0.5, 0.5, 0.5}}, {0, 0, 0});
    const double two = pareto::hypervolume({{1.0, 0.0}, {0.0, 1.0}, {0.5, 0.5}}, {-1, -1});
    emit("hypervolume hand cases", box == 0.125 && two == 3.25, fmt("box %.17g, staircase %.17g", box, two));
  }

  const auto models = probe_models(c.seed);
  double hist = 0.0, query = 0.0;
  for (std::size_t i = 0; i < c.permutation_cases; ++i) {
    const auto& m = models[i % models.size()];
    const std::size_t d_x = 1 + i % 3, d_y = 1 + (i / 3) % 3;
    hist = std::max(hist, history_permutation_error(m, c.seed + i, d_x, d_y));
    query = std::max(query, query_permutation_error(m, c.seed + i, d_x, d_y));
  }
  emit("history permutation invariance", hist <= kHistoryPermTol, fmt("worst %.3g", hist));
  emit("query permutation equivariance", query <= kQueryPermTol, fmt("worst %.3g", query));

  {
    const auto& m = models.back();
    auto bytes = model::encode_checkpoint(model::make_checkpoint(m, {{"probe", true}}));
    const auto back = model::model_from_checkpoint(model::decode_checkpoint(bytes));
    bool same = back.params.size() == m.params.size();
    for (std::size_t i = 0; same && i < m.params.size(); ++i) {
      same = m.params[i].name == back.params[i].name && m.params[i].value.vector() == back.params[i].value.vector();
    }
    const Probe p = make_probe(m, c.seed, 2, 2);
    same = same && model::policy_forward(m, p.history, p.queries, 1, 5, p.assign).utilities ==
                       model::policy_forward(back, p.history, p.queries, 1, 5, p.assign).utilities;
    bytes[bytes.size() / 2] ^= 0x01;
    bool corrupt_caught = false;
    try {
      model::decode_checkpoint(bytes);
    } catch (const FormatError&) {
      corrupt_caught = true;
    }
    emit("checkpoint round trip", same && corrupt_caught,
         fmt("bitwise %s, corruption %s", same ? "identical" : "differs", corrupt_caught ? "rejected" : "accepted"));
  }
  return lines;
}

}  // namespace tamo::harness
