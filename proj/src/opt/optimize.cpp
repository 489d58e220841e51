#include "tamo/opt/optimize.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

#include "tamo/core/error.hpp"
#include "tamo/core/json_util.hpp"

namespace tamo::opt {

using core::Matrix;
using model::History;

namespace {

using clock = std::chrono::steady_clock;

double elapsed_ms(clock::time_point start) {
  return std::chrono::duration<double, std::milli>(clock::now() - start).count();
}

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string mode_name(Mode m) { return m == Mode::coupled ? "coupled" : "decoupled"; }
std::string fantasy_name(FantasyRule r) { return r == FantasyRule::mixture_mean ? "mixture-mean" : "sample"; }

Matrix row_matrix(const Matrix& m, std::size_t i) {
  Matrix out = Matrix::matrix(1, m.cols());
  for (std::size_t j = 0; j < m.cols(); ++j) out(0, j) = m(i, j);
  return out;
}

std::span<const double> row_span(const Matrix& m, std::size_t i) { return {m.data() + i * m.cols(), m.cols()}; }

}  // namespace

void RunConfig::validate() const {
  if (batch == 0) throw ConfigError("run: batch must be at least 1");
  if (n_query == 0) throw ConfigError("run: n_query must be positive");
  if (initial == 0) throw ConfigError("run: initial must be at least 1");
  if (initial >= n_query) throw ConfigError("run: initial must be smaller than n_query");
  if (mode == Mode::decoupled && batch != 1) throw ConfigError("run: decoupled mode proposes one probe at a time");
}

nlohmann::json to_json(const RunConfig& c) {
  return {{"budget", c.budget},
          {"n_query", c.n_query},
          {"batch", c.batch},
          {"mode", mode_name(c.mode)},
          {"fantasy", fantasy_name(c.fantasy)},
          {"initial", c.initial},
          {"objective_costs", c.objective_costs},
          {"pessimistic_fill", c.pessimistic_fill},
          {"timing", c.timing},
          {"seed", c.seed}};
}

RunConfig run_config_from_json(const nlohmann::json& j) {
  core::require_keys(j,
                     {"budget", "n_query", "batch", "mode", "fantasy", "initial", "objective_costs",
                      "pessimistic_fill", "timing", "seed"},
                     "run");
  RunConfig c;
  const std::string ctx = "run";
  c.budget = core::get_or(j, "budget", c.budget, ctx);
  c.n_query = core::get_or(j, "n_query", c.n_query, ctx);
  c.batch = core::get_or(j, "batch", c.batch, ctx);
  c.initial = core::get_or(j, "initial", c.initial, ctx);
  c.objective_costs = core::get_or(j, "objective_costs", c.objective_costs, ctx);
  c.pessimistic_fill = core::get_or(j, "pessimistic_fill", c.pessimistic_fill, ctx);
  c.timing = core::get_or(j, "timing", c.timing, ctx);
  c.seed = core::get_or(j, "seed", c.seed, ctx);
  const auto mode = core::get_or<std::string>(j, "mode", mode_name(c.mode), ctx);
  if (mode == "coupled") {
    c.mode = Mode::coupled;
  } else if (mode == "decoupled") {
    c.mode = Mode::decoupled;
  } else {
    throw ConfigError("run.mode: unknown value '" + mode + "'");
  }
  const auto fantasy = core::get_or<std::string>(j, "fantasy", fantasy_name(c.fantasy), ctx);
  if (fantasy == "mixture-mean") {
    c.fantasy = FantasyRule::mixture_mean;
  } else if (fantasy == "sample") {
    c.fantasy = FantasyRule::sample;
  } else {
    throw ConfigError("run.fantasy: unknown value '" + fantasy + "'");
  }
  c.validate();
  return c;
}

std::vector<nlohmann::json> RunResult::to_jsonl() const {
  std::vector<nlohmann::json> out;
  out.reserve(steps.size());
  for (const auto& s : steps) {
    nlohmann::json y = nlohmann::json::array();
    for (std::size_t k = 0; k < s.y.size(); ++k) {
      if (s.y_mask[k]) {
        y.push_back(s.y[k]);
      } else {
        y.push_back(nullptr);
      }
    }
    nlohmann::json mask = nlohmann::json::array();
    for (auto m : s.y_mask) mask.push_back(m != 0);
    out.push_back({{"schema_version", 1},
                   {"method", method},
                   {"task_id", task_id},
                   {"seed", seed},
                   {"step", s.step},
                   {"cost", s.cost},
                   {"index", s.index},
                   {"objective", s.objective < 0 ? nlohmann::json(nullptr) : nlohmann::json(s.objective)},
                   {"x", s.x},
                   {"y", std::move(y)},
                   {"y_mask", std::move(mask)},
                   {"hv_level", s.hv_level},
                   {"regret", s.regret},
                   {"proposal_ms", s.proposal_ms}});
  }
  return out;
}

core::RngStream run_stream(const RunConfig& cfg, const std::string& task_id, std::uint64_t key) {
  return core::RngStream(cfg.seed, fnv1a(task_id)).child(key);
}

RunSetup make_setup(const taskgen::SampledTask& task, const RunConfig& cfg) {
  if (task.size() < cfg.n_query) {
    throw SizeError("task '" + task.id + "' has " + std::to_string(task.size()) + " points, fewer than n_query " +
                    std::to_string(cfg.n_query));
  }
  core::RngStream rng = run_stream(cfg, task.id, 1);
  RunSetup s;
  s.query = rng.sample_without_replacement(task.size(), cfg.n_query);
  std::sort(s.query.begin(), s.query.end());
  s.initial = rng.sample_without_replacement(cfg.n_query, cfg.initial);
  return s;
}

std::size_t propose_next(const model::Model& model, const History& history, const Matrix& queries,
                         const std::vector<std::uint8_t>& available, std::size_t t, std::size_t T,
                         const model::PosAssignment& assign, model::PolicyOutput* out) {
  if (queries.rows() == 0) throw SizeError("propose_next() with an empty pool");
  auto res = model::policy_forward(model, history, queries, t, T, assign, &available);
  const std::size_t pick = res.argmax;
  if (out) *out = std::move(res);
  return pick;
}

std::vector<std::size_t> propose_batch(const model::Model& model, History& history, const Matrix& queries,
                                       const std::vector<std::uint8_t>& available, std::size_t t, std::size_t T,
                                       std::size_t q, const model::PosAssignment& assign, FantasyRule rule,
                                       core::RngStream& rng, std::size_t* prediction_passes) {
  const auto open = static_cast<std::size_t>(std::count_if(available.begin(), available.end(), [](auto v) { return v; }));
  if (q == 0 || q > open) {
    throw SizeError("batch of " + std::to_string(q) + " from " + std::to_string(open) + " available candidates");
  }
  std::vector<std::uint8_t> avail = available;
  std::vector<std::size_t> picks;
  std::vector<std::size_t> ks(history.d_y());
  for (std::size_t k = 0; k < ks.size(); ++k) ks[k] = k;
  std::size_t fantasies = 0;
  for (std::size_t j = 0; j < q; ++j) {
    const std::size_t pick = propose_next(model, history, queries, avail, std::min(t + j, T), T, assign);
    picks.push_back(pick);
    avail[pick] = 0;
    if (j + 1 == q) break;
    const auto pred = model::predict_forward(model, history.as_set(assign), row_matrix(queries, pick), ks, assign);
    if (prediction_passes) ++*prediction_passes;
    std::vector<double> y(ks.size());
    for (std::size_t k = 0; k < ks.size(); ++k) {
      const auto& p = pred[k];
      if (rule == FantasyRule::mixture_mean) {
        y[k] = p.mixture_mean(0);
      } else {
        const double u = rng.uniform();
        std::size_t l = p.components - 1;
        double acc = 0.0;
        for (std::size_t c = 0; c < p.components; ++c) {
          acc += p.weight(0, c);
          if (u < acc) {
            l = c;
            break;
          }
        }
        y[k] = p.mean(0, l) + p.scale(0, l) * rng.normal();
      }
    }
    history.add(row_span(queries, pick), y);
    ++fantasies;
  }
  for (std::size_t j = 0; j < fantasies; ++j) history.pop_back();
  return picks;
}

std::vector<std::size_t> TamoProposer::propose(History& history, const Matrix& queries,
                                               const std::vector<std::uint8_t>& available, std::size_t t,
                                               std::size_t T, std::size_t q) {
  if (q == 1) {
    ++policy_passes;
    return {propose_next(model_, history, queries, available, t, T, assign_, &last_)};
  }
  policy_passes += q;
  return propose_batch(model_, history, queries, available, t, T, q, assign_, rule_, rng_, &prediction_passes);
}

std::pair<std::size_t, std::size_t> TamoProposer::propose_probe(const History& history, const Matrix& queries,
                                                                const std::vector<std::uint8_t>& open, std::size_t t,
                                                                std::size_t T) {
  ++policy_passes;
  const auto util = model::policy_utilities_per_output(model_, history, queries, t, T, assign_);
  const std::size_t dy = util.size();
  std::pair<std::size_t, std::size_t> best{queries.rows(), 0};
  double best_u = -INFINITY;
  for (std::size_t i = 0; i < queries.rows(); ++i) {
    for (std::size_t k = 0; k < dy; ++k) {
      if (open[i * dy + k] && (best.first == queries.rows() || util[k][i] > best_u)) {
        best = {i, k};
        best_u = util[k][i];
      }
    }
  }
  if (best.first == queries.rows()) throw SizeError("no open (candidate, objective) pair");
  return best;
}

std::vector<std::size_t> RandomProposer::propose(History&, const Matrix&, const std::vector<std::uint8_t>& available,
                                                 std::size_t, std::size_t, std::size_t q) {
  std::vector<std::size_t> positions;
  for (std::size_t i = 0; i < available.size(); ++i) {
    if (available[i]) positions.push_back(i);
  }
  if (q == 0 || q > positions.size()) throw SizeError("random batch larger than the available pool");
  std::vector<std::size_t> picks;
  for (std::size_t j : rng_.sample_without_replacement(positions.size(), q)) picks.push_back(positions[j]);
  return picks;
}

std::pair<std::size_t, std::size_t> RandomProposer::propose_probe(const History& history, const Matrix&,
                                                                  const std::vector<std::uint8_t>& open, std::size_t,
                                                                  std::size_t) {
  std::vector<std::size_t> pairs;
  for (std::size_t i = 0; i < open.size(); ++i) {
    if (open[i]) pairs.push_back(i);
  }
  if (pairs.empty()) throw SizeError("no open (candidate, objective) pair");
  const std::size_t e = pairs[rng_.index(pairs.size())];
  return {e / history.d_y(), e % history.d_y()};
}

double history_level(const taskgen::SampledTask& task, const std::vector<std::size_t>& pool_index,
                     const History& history, bool pessimistic_fill) {
  std::vector<pareto::Point> pts;
  for (std::size_t r = 0; r < history.size(); ++r) {
    const auto mask = history.observed(r);
    pareto::Point p = task.y(pool_index[r]);
    if (!history.complete(r)) {
      if (!pessimistic_fill) continue;
      for (std::size_t k = 0; k < p.size(); ++k) {
        if (!mask[k]) p[k] = task.ref[k];
      }
    }
    pts.push_back(std::move(p));
  }
  return pareto::normalized_hv_level(pts, task.ref, task.hv_star);
}

namespace {

struct RunState {
  RunState(const taskgen::SampledTask& task, const RunConfig& cfg)
      : setup(make_setup(task, cfg)), history(task.d_x(), task.d_y()), noise(run_stream(cfg, task.id, 3)) {
    queries = Matrix::matrix(setup.query.size(), task.d_x());
    for (std::size_t i = 0; i < setup.query.size(); ++i) {
      for (std::size_t j = 0; j < task.d_x(); ++j) queries(i, j) = task.pool_X(setup.query[i], j);
    }
    available.assign(setup.query.size(), 1);
    row_of.assign(setup.query.size(), kNone);
    for (std::size_t p : setup.initial) {
      const std::size_t idx = setup.query[p];
      history.add(task.x(idx), taskgen::observe(task, idx, noise));
      available[p] = 0;
      row_of[p] = pool_index.size();
      pool_index.push_back(idx);
    }
  }

  static constexpr std::size_t kNone = static_cast<std::size_t>(-1);
  RunSetup setup;
  Matrix queries;
  History history;
  core::RngStream noise;
  std::vector<std::uint8_t> available;
  std::vector<std::size_t> row_of;      // history row of each query position
  std::vector<std::size_t> pool_index;  // pool index of each history row
};

RunResult start_result(const Proposer& p, const taskgen::SampledTask& task, const RunConfig& cfg) {
  RunResult r;
  r.method = p.name();
  r.task_id = task.id;
  r.seed = cfg.seed;
  return r;
}

void finish_result(RunResult& r, const Proposer& p, const taskgen::SampledTask& task, const RunState& s) {
  std::vector<pareto::Point> pts;
  for (std::size_t row = 0; row < s.history.size(); ++row) {
    if (s.history.complete(row)) pts.push_back(task.y(s.pool_index[row]));
  }
  r.front = pareto::pareto_front(pts);
  r.policy_passes = p.policy_passes;
  r.prediction_passes = p.prediction_passes;
}

}  // namespace

RunResult run_optimization(Proposer& proposer, const taskgen::SampledTask& task, const RunConfig& cfg) {
  cfg.validate();
  RunResult result = start_result(proposer, task, cfg);
  if (cfg.budget == 0) return result;
  RunState s(task, cfg);
  const std::size_t unit = cfg.objective_costs ? task.d_y() : 1;
  const std::size_t T = cfg.budget / unit;
  std::size_t open = s.setup.query.size() - s.setup.initial.size();
  std::size_t step = 0;
  while (step < T && open > 0) {
    const std::size_t q = std::min({cfg.batch, T - step, open});
    const auto start = clock::now();
    const auto picks = proposer.propose(s.history, s.queries, s.available, step + 1, T, q);
    const double ms = cfg.timing ? elapsed_ms(start) : 0.0;
    if (picks.size() != q) throw Error("proposer returned the wrong number of candidates");
    for (std::size_t p : picks) {
      if (p >= s.available.size() || !s.available[p]) throw Error("proposer chose an unavailable candidate");
      s.available[p] = 0;
      --open;
      const std::size_t idx = s.setup.query[p];
      const auto y = taskgen::observe(task, idx, s.noise);
      s.history.add(task.x(idx), y);
      s.row_of[p] = s.pool_index.size();
      s.pool_index.push_back(idx);
      ++step;
      StepRecord rec;
      rec.step = step;
      rec.cost = double(step * unit);
      rec.index = idx;
      rec.x = task.x(idx);
      rec.y = y;
      rec.y_mask.assign(task.d_y(), 1);
      rec.hv_level = history_level(task, s.pool_index, s.history, cfg.pessimistic_fill);
      rec.regret = pareto::simple_regret(rec.hv_level);
      rec.proposal_ms = ms / double(picks.size());
      result.steps.push_back(std::move(rec));
    }
  }
  finish_result(result, proposer, task, s);
  return result;
}

RunResult run_decoupled(Proposer& proposer, const taskgen::SampledTask& task, const RunConfig& cfg) {
  cfg.validate();
  if (cfg.mode != Mode::decoupled) throw ConfigError("run_decoupled() needs mode = decoupled");
  RunResult result = start_result(proposer, task, cfg);
  if (cfg.budget == 0) return result;
  RunState s(task, cfg);
  const std::size_t dy = task.d_y(), nq = s.setup.query.size();
  std::vector<std::uint8_t> open(nq * dy, 1);
  for (std::size_t p : s.setup.initial) std::fill_n(open.begin() + p * dy, dy, std::uint8_t{0});
  std::size_t remaining = (nq - s.setup.initial.size()) * dy;
  const std::size_t T = cfg.budget;
  std::size_t cost = 0;
  while (cost < T && remaining > 0) {
    const auto start = clock::now();
    const auto [p, k] = proposer.propose_probe(s.history, s.queries, open, cost + 1, T);
    const double ms = cfg.timing ? elapsed_ms(start) : 0.0;
    if (p >= nq || k >= dy || !open[p * dy + k]) throw Error("proposer chose a closed probe");
    open[p * dy + k] = 0;
    --remaining;
    const std::size_t idx = s.setup.query[p];
    const double value = taskgen::observe(task, idx, s.noise)[k];
    if (s.row_of[p] == RunState::kNone) {
      std::vector<double> y(dy, 0.0);
      std::vector<std::uint8_t> mask(dy, 0);
      y[k] = value;
      mask[k] = 1;
      s.history.add(task.x(idx), y, mask);
      s.row_of[p] = s.pool_index.size();
      s.pool_index.push_back(idx);
    } else {
      s.history.set_output(s.row_of[p], k, value);
    }
    ++cost;
    const std::size_t row = s.row_of[p];
    StepRecord rec;
    rec.step = result.steps.size() + 1;
    rec.cost = double(cost);
    rec.index = idx;
    rec.objective = static_cast<int>(k);
    rec.x = task.x(idx);
    rec.y.assign(s.history.y(row).begin(), s.history.y(row).end());
    rec.y_mask.assign(s.history.observed(row).begin(), s.history.observed(row).end());
    rec.hv_level = history_level(task, s.pool_index, s.history, cfg.pessimistic_fill);
    rec.regret = pareto::simple_regret(rec.hv_level);
    rec.proposal_ms = ms;
    result.steps.push_back(std::move(rec));
  }
  finish_result(result, proposer, task, s);
  return result;
}

RunResult run(Proposer& proposer, const taskgen::SampledTask& task, const RunConfig& cfg) {
  return cfg.mode == Mode::decoupled ? run_decoupled(proposer, task, cfg) : run_optimization(proposer, task, cfg);
}

RunResult run_tamo(const model::Model& model, const taskgen::SampledTask& task, const RunConfig& cfg) {
  core::RngStream arng = run_stream(cfg, task.id, 4);
  TamoProposer p(model, model::sample_assignment(model.config, task.d_x(), task.d_y(), arng), cfg.fantasy,
                 run_stream(cfg, task.id, 2));
  return run(p, task, cfg);
}

RunResult run_random(const taskgen::SampledTask& task, const RunConfig& cfg) {
  RandomProposer p(run_stream(cfg, task.id, 2));
  return run(p, task, cfg);
}

}  // namespace tamo::opt
