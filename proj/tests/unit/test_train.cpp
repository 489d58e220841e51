#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>

#include "tamo/core/bytes.hpp"
#include "tamo/core/error.hpp"
#include "tamo/core/ops.hpp"
#include "tamo/core/schedule.hpp"
#include "tamo/pareto/pareto.hpp"
#include "tamo/train/train.hpp"

using namespace tamo;
using train::TrainConfig;

namespace {

model::ModelConfig tiny_model() {
  model::ModelConfig m;
  m.d_e = 8;
  m.embed_layers = 1;
  m.encoder_layers = 1;
  m.decoder_layers = 1;
  m.heads = 2;
  m.ff_width = 16;
  m.components = 2;
  m.head_layers = 1;
  return m;
}

TrainConfig tiny_config(std::uint64_t seed = 1) {
  TrainConfig c;
  c.iterations = 40;
  c.burn_in = 30;
  c.budget = 4;
  c.prediction_batch = 3;
  c.policy_batch = 2;
  c.prediction_points = 40;
  c.n_query = 12;
  c.lr_warmup = 1e-3;
  c.lr_joint = 5e-4;
  c.checkpoint_every = 10;
  c.dims = {{1}, {1, 2}};
  c.model = tiny_model();
  c.seed = seed;
  return c;
}

std::vector<std::string> read_lines(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::vector<std::string> out;
  for (std::string line; std::getline(in, line);) out.push_back(line);
  return out;
}

std::filesystem::path scratch(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("tamo_test_train_" + name);
  std::filesystem::remove_all(dir);
  return dir;
}

std::vector<std::vector<double>> gradients(const core::ParamStore<double>& ps) {
  std::vector<std::vector<double>> out;
  for (const auto& p : ps) out.emplace_back(p.grad.values().begin(), p.grad.values().end());
  return out;
}

}  // namespace

TEST_CASE("config json round trip and strictness") {
  TrainConfig c = tiny_config(7);
  c.return_to_go = true;
  c.gamma = 0.9;
  const auto j = train::to_json(c);
  CHECK(train::to_json(train::train_config_from_json(j)) == j);

  auto bad = j;
  bad["lerning_rate"] = 1.0;
  CHECK_THROWS_AS(train::train_config_from_json(bad), ConfigError);
  bad = j;
  bad["model"]["width"] = 3;
  CHECK_THROWS_AS(train::train_config_from_json(bad), ConfigError);
  bad = j;
  bad["gamma"] = 0.0;
  CHECK_THROWS_AS(train::train_config_from_json(bad), ConfigError);
  bad = j;
  bad["burn_in"] = 100;
  CHECK_THROWS_AS(train::train_config_from_json(bad), ConfigError);
  bad = j;
  bad["lambda_p"] = 0.0;
  CHECK_THROWS_AS(train::train_config_from_json(bad), ConfigError);
}

TEST_CASE("rl_loss closed forms") {
  train::TrajectoryRecord a, b;
  a.log_probs = {-0.7};
  a.rewards = {0.4};
  b.log_probs = {-1.1};
  b.rewards = {0.25};
  std::vector<train::TrajectoryRecord> one{a, b};
  CHECK(train::rl_loss(one, 1.0) == doctest::Approx(-(-0.7 * 0.4 + -1.1 * 0.25) / 2).epsilon(1e-12));

  train::TrajectoryRecord c;
  c.log_probs = {-0.5, -1.2};
  c.rewards = {0.3, 0.7};
  std::vector<train::TrajectoryRecord> two{c};
  CHECK(std::abs(train::rl_loss(two, 0.9) - (0.5 * 0.3 + 1.2 * 0.9 * 0.7)) < 1e-9);
  CHECK(std::abs(train::rl_loss(two, 0.9, true) - (0.5 * (0.3 + 0.9 * 0.7) + 1.2 * 0.9 * 0.7)) < 1e-9);

  c.rewards = {0.0, 0.0};
  std::vector<train::TrajectoryRecord> zero{c};
  CHECK(train::rl_loss(zero, 0.9) == 0.0);
  CHECK_THROWS_AS(train::rl_loss(std::vector<train::TrajectoryRecord>{}, 1.0), SizeError);
}

TEST_CASE("perfect prediction attains the floor bound") {
  const double floor = 1e-3;
  core::Graph<double> g(false);
  const std::size_t n = 5, K = 3;
  std::vector<double> y{0.1, -0.4, 0.9, 0.0, -1.0};
  core::TensorD lw(core::Shape{n, K}, std::log(1.0 / K)), mu(core::Shape{n, K}), sc(core::Shape{n, K}, floor);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < K; ++k) mu(i, k) = y[i];
  }
  auto ll = core::gmm_log_density(g.constant(lw), g.constant(mu), g.constant(sc), g.constant(core::TensorD::column(y)));
  const double bound = std::log(floor * std::sqrt(2.0 * std::numbers::pi));
  for (std::size_t i = 0; i < n; ++i) CHECK(-ll.value()[i] == doctest::Approx(bound).epsilon(1e-12));

  // No model output can go below the bound, since every scale is at least the floor.
  TrainConfig cfg = tiny_config();
  cfg.model.scale_floor = floor;
  const model::Model m = model::make_model(cfg.model, 3);
  core::RngStream rng(5);
  const auto ex = train::sample_prediction_examples(cfg, rng, 4);
  core::Graph<float> gf(false);
  model::Network<float> net(m.config, m.params, gf);
  CHECK(train::prediction_loss(net, std::span(ex)).value().item() >= bound);
}

TEST_CASE("prediction loss ignores target order") {
  TrainConfig cfg = tiny_config();
  const model::Model m = model::make_model(cfg.model, 11);
  const auto pd = m.params.cast<double>();
  core::RngStream rng(12);
  auto ex = train::sample_prediction_examples(cfg, rng, 2);
  auto loss_of = [&](std::span<const train::PredictionExample> e) {
    core::Graph<double> g(false);
    model::Network<double> net(m.config, pd, g);
    return train::prediction_loss(net, e).value().item();
  };
  const double before = loss_of(ex);
  for (auto& e : ex) {
    auto& d = e.data;
    const std::size_t n = d.target_x.rows();
    const auto perm = rng.sample_without_replacement(n, n);
    core::Matrix tx = d.target_x, ty = d.target_y;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < tx.cols(); ++j) tx(i, j) = d.target_x(perm[i], j);
      for (std::size_t j = 0; j < ty.cols(); ++j) ty(i, j) = d.target_y(perm[i], j);
    }
    d.target_x = tx;
    d.target_y = ty;
  }
  CHECK(std::abs(loss_of(ex) - before) <= 1e-6 * std::max(1.0, std::abs(before)));
}

TEST_CASE("rewards are bounded, monotone and reproducible") {
  TrainConfig cfg = tiny_config();
  const model::Model m = model::make_model(cfg.model, 21);
  for (std::uint64_t s = 0; s < 6; ++s) {
    core::RngStream trng(100 + s);
    const auto task = taskgen::sample_task(trng, {{1, 2}, {1, 2, 3}}, {}, 40);
    core::RngStream r1(s), r2(s);
    const auto a = train::rollout_episode(m, task, 8, r1, 20);
    const auto b = train::rollout_episode(m, task, 8, r2, 20);
    REQUIRE(a.rewards.size() == 8);
    CHECK(a.chosen.size() == 8);
    CHECK(a.history.size() == 9);
    CHECK(a.chosen == b.chosen);
    CHECK(a.rewards == b.rewards);
    CHECK(a.log_probs == b.log_probs);
    for (std::size_t t = 0; t < a.rewards.size(); ++t) {
      CHECK(a.rewards[t] >= 0.0);
      CHECK(a.rewards[t] <= 1.0);
      if (t > 0) CHECK(a.rewards[t] >= a.rewards[t - 1]);
      CHECK(a.log_probs[t] <= 0.0);
    }
    std::vector<std::size_t> seen = a.chosen;
    seen.push_back(a.initial);
    std::sort(seen.begin(), seen.end());
    CHECK(std::adjacent_find(seen.begin(), seen.end()) == seen.end());
  }
}

TEST_CASE("exhausting the pool reaches reward one") {
  TrainConfig cfg = tiny_config();
  const model::Model m = model::make_model(cfg.model, 22);
  core::RngStream trng(9);
  const auto task = taskgen::sample_task(trng, {{1}, {2}}, {}, 10);
  core::RngStream r(3);
  const auto rec = train::rollout_episode(m, task, 9, r, 10);
  CHECK(rec.rewards.back() == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("zero rewards give zero policy gradient, and rewards scale it linearly") {
  TrainConfig cfg = tiny_config();
  const model::Model m = model::make_model(cfg.model, 31);
  core::RngStream prng(32);
  const auto policy = train::sample_policy_examples(cfg, prng, 2);

  auto grads = [&](double factor) {
    auto pd = m.params.cast<double>();
    core::Graph<double> g(true);
    model::Network<double> net(m.config, pd, g, &pd);
    core::RngStream rng(33);
    auto ro = train::rollout(net, std::span(policy), cfg.budget, rng);
    for (auto& rec : ro.records) {
      for (auto& r : rec.rewards) r *= factor;
    }
    g.backward(train::rl_loss(ro, 1.0));
    return gradients(pd);
  };
  const auto g0 = grads(0.0);
  for (const auto& p : g0) {
    for (double v : p) CHECK(v == 0.0);
  }
  const auto g1 = grads(1.0), g3 = grads(3.0);
  double max_rel = 0.0, norm = 0.0;
  for (std::size_t i = 0; i < g1.size(); ++i) {
    for (std::size_t j = 0; j < g1[i].size(); ++j) {
      norm = std::max(norm, std::abs(g1[i][j]));
      max_rel = std::max(max_rel, std::abs(g3[i][j] - 3.0 * g1[i][j]));
    }
  }
  CHECK(norm > 0.0);
  CHECK(max_rel <= 1e-12 * norm);
}

TEST_CASE("log-softmax ignores a shared utility shift") {
  core::Graph<double> g(true);
  core::RngStream rng(4);
  core::TensorD u(core::Shape{6, 1});
  for (auto& v : u.values()) v = rng.normal();
  core::TensorD shifted = u;
  for (auto& v : shifted.values()) v += 17.25;
  auto a = g.input(u), b = g.input(shifted);
  auto la = core::log_softmax(a, 0), lb = core::log_softmax(b, 0);
  g.backward(core::pick(la, 2, 0));
  const core::TensorD ga = a.grad();
  g.backward(core::pick(lb, 2, 0));
  for (std::size_t i = 0; i < 6; ++i) {
    CHECK(la.value()[i] == doctest::Approx(lb.value()[i]).epsilon(1e-12));
    CHECK(ga[i] == doctest::Approx(b.grad()[i]).epsilon(1e-12));
  }
}

TEST_CASE("joint gradient is the weighted sum of both terms") {
  TrainConfig cfg = tiny_config();
  const model::Model m = model::make_model(cfg.model, 41);
  core::RngStream rng(42);
  const auto pred = train::sample_prediction_examples(cfg, rng, 2);
  const auto policy = train::sample_policy_examples(cfg, rng, 2);
  const double lambda = 0.7;

  auto run = [&](double wp, double wr) {
    auto pd = m.params.cast<double>();
    core::Graph<double> g(true);
    model::Network<double> net(m.config, pd, g, &pd);
    auto lp = train::prediction_loss(net, std::span(pred));
    core::RngStream rr(43);
    auto lr = train::rl_loss(train::rollout(net, std::span(policy), cfg.budget, rr), 1.0);
    g.backward(core::add(core::scale(lp, wp), core::scale(lr, wr)));
    return gradients(pd);
  };
  const auto joint = run(lambda, 1.0), gp = run(1.0, 0.0), gr = run(0.0, 1.0);
  for (std::size_t i = 0; i < joint.size(); ++i) {
    for (std::size_t j = 0; j < joint[i].size(); ++j) {
      CHECK(std::abs(joint[i][j] - (lambda * gp[i][j] + gr[i][j])) <= 1e-10 * (1.0 + std::abs(joint[i][j])));
    }
  }
}

TEST_CASE("lambda_p = 0 reduces the joint step to the policy step") {
  TrainConfig cfg = tiny_config();
  core::RngStream rng(51);
  const auto pred = train::sample_prediction_examples(cfg, rng, 2);
  const auto policy = train::sample_policy_examples(cfg, rng, 2);
  cfg.lambda_p = 0.0;

  model::Model a = model::make_model(cfg.model, 52), b = a;
  core::Adam<float> oa, ob;
  core::RngStream ra(53), rb(53);
  const auto res = train::joint_step(a, oa, std::span(pred), std::span(policy), cfg, 1e-3, ra);
  CHECK(res.applied);
  {
    core::Graph<float> g(true);
    model::Network<float> net(b.config, b.params, g, &b.params);
    g.backward(train::rl_loss(train::rollout(net, std::span(policy), cfg.budget, rb), cfg.gamma));
    CHECK(ob.step(b.params, 1e-3));
  }
  double worst = 0.0;
  for (std::size_t i = 0; i < a.params.size(); ++i) {
    for (std::size_t j = 0; j < a.params[i].value.size(); ++j) {
      worst = std::max(worst, double(std::abs(a.params[i].value[j] - b.params[i].value[j])));
    }
  }
  CHECK(worst <= 1e-7);
}

TEST_CASE("burn-in computes no hypervolume") {
  TrainConfig cfg = tiny_config();
  cfg.iterations = 6;
  cfg.burn_in = 5;
  train::Trainer t(cfg);
  pareto::reset_hypervolume_calls();
  for (int i = 0; i < 5; ++i) CHECK(t.step(false).phase == "warmup");
  CHECK(pareto::hypervolume_calls() == 0);
  const auto log = t.step(false);
  CHECK(log.phase == "joint");
  CHECK(pareto::hypervolume_calls() > 0);
  REQUIRE(log.mean_final_reward.has_value());
  CHECK(*log.mean_final_reward >= 0.0);
  CHECK(*log.mean_final_reward <= 1.0);
  CHECK(t.done());
  CHECK_THROWS_AS(t.step(), Error);
}

TEST_CASE("resumed training reproduces the uninterrupted run") {
  TrainConfig cfg = tiny_config(5);
  cfg.iterations = 125;
  cfg.burn_in = 100;
  cfg.n_query = 8;
  cfg.budget = 3;
  train::PretrainOptions opts;
  opts.timing = false;

  const auto full_dir = scratch("full");
  const model::Model full = train::pretrain(cfg, full_dir, opts);

  const auto part_dir = scratch("part");
  opts.stop_at = 20;
  train::pretrain(cfg, part_dir, opts);
  CHECK_FALSE(std::filesystem::exists(part_dir / "model.tamo"));
  CHECK(read_lines(part_dir / "train_log.jsonl").size() == 20);
  opts.stop_at.reset();
  opts.resume = true;
  const model::Model resumed = train::pretrain(cfg, part_dir, opts);

  for (std::size_t i = 0; i < full.params.size(); ++i) CHECK(full.params[i].value == resumed.params[i].value);
  const auto lf = read_lines(full_dir / "train_log.jsonl"), lr = read_lines(part_dir / "train_log.jsonl");
  CHECK(lf.size() == cfg.iterations);
  CHECK(lf == lr);
  CHECK(core::read_file(full_dir / "model.tamo") == core::read_file(part_dir / "model.tamo"));

  // Every logged rate matches the schedule, and each joint record carries a bounded reward.
  for (const auto& line : lf) {
    const auto j = nlohmann::json::parse(line);
    const std::size_t it = j.at("iter").get<std::size_t>();
    CHECK(j.at("schema_version") == 1);
    CHECK(j.at("lr").get<double>() == train::learning_rate(cfg, it));
    if (it < cfg.burn_in) {
      CHECK(j.at("phase") == "warmup");
      CHECK(j.at("lr").get<double>() == core::lr_at(std::int64_t(it), std::int64_t(cfg.burn_in), cfg.lr_warmup,
                                                    cfg.warm_frac));
      CHECK(j.at("loss_rl").is_null());
    } else {
      CHECK(j.at("phase") == "joint");
      const double r = j.at("mean_final_reward").get<double>();
      CHECK(r >= 0.0);
      CHECK(r <= 1.0);
    }
  }

  TrainConfig other = cfg;
  other.seed = 6;
  CHECK_THROWS_AS(train::Trainer(other, model::load_checkpoint(part_dir / "checkpoint.tamo")), ConfigError);
}

TEST_CASE("warm-up lowers the prediction loss") {
  std::vector<double> gains;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    TrainConfig cfg = tiny_config(seed);
    cfg.model.d_e = 16;
    cfg.model.ff_width = 32;
    cfg.dims = {{1}, {1}};
    cfg.iterations = 500;
    cfg.burn_in = 500;
    cfg.prediction_batch = 4;
    cfg.prediction_points = 50;
    cfg.lr_warmup = 3e-3;
    train::Trainer t(cfg);
    double head = 0.0, tail = 0.0;
    for (std::size_t i = 0; i < cfg.iterations; ++i) {
      const double l = t.step(false).loss_p;
      if (i < 50) head += l;
      if (i >= cfg.iterations - 50) tail += l;
    }
    gains.push_back((head - tail) / 50.0);
  }
  std::sort(gains.begin(), gains.end());
  MESSAGE("median loss decrease " << gains[2]);
  CHECK(gains[2] > 0.0);
}
