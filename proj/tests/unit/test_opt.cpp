#include <doctest.h>

#include <algorithm>
#include <set>

#include "tamo/core/error.hpp"
#include "tamo/opt/optimize.hpp"

using namespace tamo;
using opt::RunConfig;

namespace {

model::Model tiny_model(std::uint64_t seed = 1) {
  model::ModelConfig m;
  m.d_e = 8;
  m.embed_layers = 1;
  m.encoder_layers = 1;
  m.decoder_layers = 1;
  m.heads = 2;
  m.ff_width = 16;
  m.components = 2;
  m.head_layers = 1;
  return model::make_model(m, seed);
}

taskgen::SampledTask task_of(std::size_t d_x, std::size_t d_y, std::size_t n, std::uint64_t seed,
                             const std::string& id = "t") {
  core::RngStream rng(seed);
  return taskgen::sample_task(rng, {{d_x}, {d_y}}, {}, n, id);
}

RunConfig config(std::size_t budget, std::size_t n_query, std::uint64_t seed = 3) {
  RunConfig c;
  c.budget = budget;
  c.n_query = n_query;
  c.seed = seed;
  c.timing = false;
  return c;
}

void check_run_invariants(const opt::RunResult& r, double budget) {
  std::set<std::size_t> seen;
  double prev = 0.0;
  for (const auto& s : r.steps) {
    CHECK(s.cost <= budget);
    CHECK(s.hv_level >= prev);
    CHECK(s.hv_level <= 1.0);
    CHECK(s.regret == doctest::Approx(1.0 - s.hv_level));
    prev = s.hv_level;
    if (s.objective < 0) CHECK(seen.insert(s.index).second);
  }
}

}  // namespace

TEST_CASE("run config json") {
  RunConfig c = config(20, 64);
  c.mode = opt::Mode::decoupled;
  c.fantasy = opt::FantasyRule::sample;
  const auto j = opt::to_json(c);
  CHECK(opt::to_json(opt::run_config_from_json(j)) == j);
  auto bad = j;
  bad["budgett"] = 3;
  CHECK_THROWS_AS(opt::run_config_from_json(bad), ConfigError);
  bad = j;
  bad["mode"] = "async";
  CHECK_THROWS_AS(opt::run_config_from_json(bad), ConfigError);
  bad = j;
  bad["batch"] = 0;
  CHECK_THROWS_AS(opt::run_config_from_json(bad), ConfigError);
  bad = j;
  bad["batch"] = 2;
  CHECK_THROWS_AS(opt::run_config_from_json(bad), ConfigError);
}

TEST_CASE("propose_next basics") {
  const auto m = tiny_model();
  const auto task = task_of(2, 2, 30, 5);
  model::History h(2, 2);
  h.add(task.x(0), task.y(0));
  core::RngStream rng(1);
  const auto assign = model::sample_assignment(m.config, 2, 2, rng);

  core::Matrix one = core::Matrix::matrix(1, 2);
  one(0, 0) = 0.5;
  one(0, 1) = -1.5;
  CHECK(opt::propose_next(m, h, one, {1}, 1, 10, assign) == 0);

  core::Matrix q = task.pool_X;
  std::vector<std::uint8_t> avail(q.rows(), 1);
  avail[0] = 0;
  model::PolicyOutput out;
  const std::size_t a = opt::propose_next(m, h, q, avail, 2, 10, assign, &out);
  CHECK(opt::propose_next(m, h, q, avail, 2, 10, assign) == a);
  CHECK(out.probs[0] == 0.0);
  CHECK(a != 0);
  const double pmax = *std::max_element(out.probs.begin(), out.probs.end());
  CHECK(out.probs[a] == pmax);
  CHECK_THROWS_AS(opt::propose_next(m, h, core::Matrix::matrix(0, 2), {}, 1, 10, assign), SizeError);
}

TEST_CASE("batch proposals") {
  const auto m = tiny_model(2);
  const auto task = task_of(1, 2, 40, 6);
  core::RngStream rng(1);
  const auto assign = model::sample_assignment(m.config, 1, 2, rng);
  model::History h(1, 2);
  h.add(task.x(3), task.y(3));
  std::vector<std::uint8_t> avail(task.size(), 1);
  avail[3] = 0;

  const std::size_t single = opt::propose_next(m, h, task.pool_X, avail, 1, 20, assign);
  core::RngStream frng(2);
  CHECK(opt::propose_batch(m, h, task.pool_X, avail, 1, 20, 1, assign, opt::FantasyRule::mixture_mean, frng) ==
        std::vector<std::size_t>{single});

  for (auto rule : {opt::FantasyRule::mixture_mean, opt::FantasyRule::sample}) {
    std::size_t passes = 0;
    const auto picks = opt::propose_batch(m, h, task.pool_X, avail, 1, 20, 5, assign, rule, frng, &passes);
    CHECK(picks.size() == 5);
    CHECK(std::set<std::size_t>(picks.begin(), picks.end()).size() == 5);
    CHECK(std::find(picks.begin(), picks.end(), std::size_t{3}) == picks.end());
    CHECK(picks.front() == single);
    CHECK(passes == 4);
    CHECK(h.size() == 1);
  }
  CHECK_THROWS_AS(
      opt::propose_batch(m, h, task.pool_X, avail, 1, 20, task.size(), assign, opt::FantasyRule::mixture_mean, frng),
      SizeError);

  for (std::size_t q : {1, 2, 5, 10}) {
    RunConfig c = config(20, 40);
    c.batch = q;
    const auto r = opt::run_tamo(m, task, c);
    CHECK(r.steps.size() == 20);
    CHECK(r.policy_passes == 20);
    check_run_invariants(r, 20);
  }
}

TEST_CASE("exhausting the pool reaches zero regret") {
  const auto m = tiny_model(3);
  const auto task = task_of(1, 2, 25, 7);
  const RunConfig c = config(40, 25);
  for (const auto& r : {opt::run_tamo(m, task, c), opt::run_random(task, c)}) {
    CHECK(r.steps.size() == 24);
    CHECK(r.steps.back().regret == doctest::Approx(0.0).epsilon(1e-12));
    std::vector<pareto::Point> all;
    for (std::size_t i = 0; i < task.size(); ++i) all.push_back(task.y(i));
    CHECK(r.front == pareto::pareto_front(all));
    check_run_invariants(r, 40);
  }
}

TEST_CASE("runs are deterministic and share setup across methods") {
  const auto m = tiny_model(4);
  const auto task = task_of(2, 3, 60, 8, "det");
  const RunConfig c = config(12, 50, 9);
  CHECK(opt::run_tamo(m, task, c).to_jsonl() == opt::run_tamo(m, task, c).to_jsonl());
  CHECK(opt::run_random(task, c).to_jsonl() == opt::run_random(task, c).to_jsonl());
  RunConfig other = c;
  other.seed = 10;
  CHECK(opt::run_random(task, c).to_jsonl() != opt::run_random(task, other).to_jsonl());
  const auto s1 = opt::make_setup(task, c);
  CHECK(s1.query.size() == 50);
  CHECK(std::is_sorted(s1.query.begin(), s1.query.end()));
  CHECK(opt::make_setup(task, c).initial == s1.initial);

  RunConfig big = c;
  big.n_query = 61;
  CHECK_THROWS_AS(opt::run_random(task, big), SizeError);
  RunConfig none = c;
  none.budget = 0;
  CHECK(opt::run_random(task, none).steps.empty());

  const auto lines = opt::run_tamo(m, task, c).to_jsonl();
  REQUIRE(lines.size() == 12);
  for (const char* key : {"task_id", "seed", "step", "cost", "x", "y", "y_mask", "hv_level", "regret", "proposal_ms"}) {
    CHECK(lines[0].contains(key));
  }
  CHECK(lines[0].at("proposal_ms") == 0.0);
}

TEST_CASE("decoupled cost ledger") {
  const auto m = tiny_model(5);
  const auto task = task_of(1, 3, 40, 11);
  RunConfig c = config(17, 40);
  c.mode = opt::Mode::decoupled;
  for (const auto& r : {opt::run_tamo(m, task, c), opt::run_random(task, c)}) {
    REQUIRE(r.steps.size() == 17);
    double prev = 0.0;
    std::set<std::pair<std::size_t, int>> probes;
    for (std::size_t n = 0; n < r.steps.size(); ++n) {
      const auto& s = r.steps[n];
      CHECK(s.cost == double(n + 1));
      CHECK(s.cost - prev == 1.0);
      prev = s.cost;
      CHECK(s.objective >= 0);
      CHECK(s.y_mask[std::size_t(s.objective)] == 1);
      CHECK(probes.insert({s.index, s.objective}).second);
    }
    check_run_invariants(r, 17);
  }

  RunConfig coupled = config(17, 40);
  coupled.objective_costs = true;
  const auto r = opt::run_random(task, coupled);
  CHECK(r.steps.size() == 17 / 3);
  CHECK(r.steps.back().cost == 15.0);
}

TEST_CASE("hypervolume level counts complete points only") {
  const auto task = task_of(1, 2, 20, 12);
  model::History h(1, 2);
  std::vector<std::size_t> idx{0, 1};
  h.add(task.x(0), task.y(0), std::vector<std::uint8_t>{1, 0});
  h.add(task.x(1), task.y(1), std::vector<std::uint8_t>{0, 1});
  CHECK(opt::history_level(task, idx, h, false) == 0.0);
  // Pessimistic fill places missing outputs on the reference, which adds no volume.
  CHECK(opt::history_level(task, idx, h, true) == 0.0);
  h.set_output(0, 1, task.y(0)[1]);
  CHECK(h.complete(0));
  CHECK(opt::history_level(task, idx, h, false) ==
        doctest::Approx(pareto::normalized_hv_level({task.y(0)}, task.ref, task.hv_star)));
  CHECK_THROWS_AS(h.set_output(2, 0, 0.0), IndexError);
}
