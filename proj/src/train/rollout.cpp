#include <chrono>
#include <cmath>

#include "tamo/core/error.hpp"
#include "tamo/pareto/pareto.hpp"
#include "tamo/train/train.hpp"

namespace tamo::train {

using core::Matrix;
using core::Var;
using model::History;
using model::ObservationSet;

PolicyExample make_policy_example(taskgen::SampledTask task, const model::ModelConfig& mcfg, std::size_t n_query,
                                  core::RngStream& rng) {
  PolicyExample ex;
  ex.batch = taskgen::make_policy_batch(task, rng, n_query);
  ex.assign = model::sample_assignment(mcfg, task.d_x(), task.d_y(), rng);
  ex.task = std::move(task);
  return ex;
}

std::vector<PolicyExample> sample_policy_examples(const TrainConfig& cfg, core::RngStream& rng, std::size_t count) {
  std::vector<PolicyExample> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    auto task = taskgen::sample_task(rng, cfg.dims, cfg.prior, cfg.n_query);
    out.push_back(make_policy_example(std::move(task), cfg.model, cfg.n_query, rng));
  }
  return out;
}

namespace {

std::vector<pareto::Point> evaluated_points(const taskgen::SampledTask& task, const TrajectoryRecord& rec) {
  std::vector<pareto::Point> pts{task.y(rec.initial)};
  for (std::size_t i : rec.chosen) pts.push_back(task.y(i));
  return pts;
}

}  // namespace

template <typename T>
Rollouts<T> rollout(model::Network<T>& net, std::span<const PolicyExample> examples, std::size_t T_budget,
                    core::RngStream& rng, bool greedy, bool timing) {
  if (examples.empty()) throw SizeError("rollout() without episodes");
  if (T_budget == 0) throw DomainError("rollout() with budget 0");
  const std::size_t B = examples.size();
  Rollouts<T> out;
  out.records.resize(B);
  out.log_probs.resize(B);

  std::vector<Matrix> queries(B);
  std::vector<std::vector<std::uint8_t>> available(B);
  std::vector<ObservationSet> qsets;
  model::Offsets q_off{0};
  for (std::size_t b = 0; b < B; ++b) {
    const auto& ex = examples[b];
    const auto& task = ex.task;
    const std::size_t nq = ex.batch.query.size();
    if (nq < T_budget + 1) throw SizeError("query set smaller than budget + 1");
    queries[b] = Matrix::matrix(nq, task.d_x());
    for (std::size_t i = 0; i < nq; ++i) {
      for (std::size_t j = 0; j < task.d_x(); ++j) queries[b](i, j) = task.pool_X(ex.batch.query[i], j);
    }
    available[b].assign(nq, 1);
    available[b][ex.batch.initial] = 0;
    auto& rec = out.records[b];
    rec.task_id = task.id;
    rec.initial = ex.batch.query[ex.batch.initial];
    rec.history = History(task.d_x(), task.d_y());
    const auto y = taskgen::observe(task, rec.initial, rng);
    rec.history.add(task.x(rec.initial), y);
    qsets.push_back(model::input_set(queries[b], ex.assign));
    q_off.push_back(q_off.back() + nq);
  }

  auto embed_latest = [&]() {
    std::vector<ObservationSet> sets;
    for (std::size_t b = 0; b < B; ++b) {
      const History& h = out.records[b].history;
      const std::size_t last = h.size() - 1;
      sets.push_back(ObservationSet{1, h.d_x(), h.d_y(), h.x(last).data(), h.y(last).data(),
                                    h.observed(last).data(), &examples[b].assign});
    }
    return net.embed(sets);
  };

  using clock = std::chrono::steady_clock;
  Var<T> q_embed = net.embed(qsets);
  std::vector<Var<T>> history_parts{embed_latest()};
  for (std::size_t t = 1; t <= T_budget; ++t) {
    const auto start = clock::now();
    std::vector<std::size_t> order;
    model::Offsets h_off{0};
    for (std::size_t b = 0; b < B; ++b) {
      for (std::size_t s = 0; s < t; ++s) order.push_back(s * B + b);
      h_off.push_back(order.size());
    }
    Var<T> stacked = history_parts.size() == 1 ? history_parts.front() : core::concat(history_parts, 0);
    Var<T> hist = B == 1 ? stacked : core::gather_rows(stacked, order);
    Var<T> enc = net.encode(hist, q_embed, h_off, q_off);
    std::vector<model::OptimizationTask> tasks;
    for (std::size_t b = 0; b < B; ++b) {
      tasks.push_back({double(T_budget - t) / double(T_budget), &examples[b].assign, std::nullopt});
    }
    model::Offsets t_off{0};
    Var<T> tokens = net.optimization_tokens(tasks, t_off);
    Var<T> util = net.utilities(net.decode(enc, tokens, q_off, t_off));

    std::vector<std::size_t> picked(B);
    for (std::size_t b = 0; b < B; ++b) {
      std::vector<std::size_t> rows, positions;
      for (std::size_t i = 0; i < available[b].size(); ++i) {
        if (available[b][i]) {
          rows.push_back(q_off[b] + i);
          positions.push_back(i);
        }
      }
      Var<T> logp = core::log_softmax(core::gather_rows(util, rows), 0);
      const auto& lv = logp.value();
      std::size_t j = 0;
      if (greedy) {
        for (std::size_t i = 1; i < rows.size(); ++i) {
          if (lv[i] > lv[j]) j = i;
        }
      } else {
        const double u = rng.uniform();
        double acc = 0.0;
        j = rows.size() - 1;
        for (std::size_t i = 0; i < rows.size(); ++i) {
          acc += std::exp(double(lv[i]));
          if (u < acc) {
            j = i;
            break;
          }
        }
      }
      out.log_probs[b].push_back(core::pick(logp, j, 0));
      out.records[b].log_probs.push_back(lv[j]);
      picked[b] = positions[j];
    }
    const double ms = timing ? std::chrono::duration<double, std::milli>(clock::now() - start).count() : 0.0;

    for (std::size_t b = 0; b < B; ++b) {
      const auto& task = examples[b].task;
      auto& rec = out.records[b];
      available[b][picked[b]] = 0;
      const std::size_t idx = examples[b].batch.query[picked[b]];
      rec.chosen.push_back(idx);
      rec.proposal_ms.push_back(ms);
      rec.history.add(task.x(idx), taskgen::observe(task, idx, rng));
      rec.rewards.push_back(pareto::normalized_hv_level(evaluated_points(task, rec), task.ref, task.hv_star));
    }
    if (t < T_budget) history_parts.push_back(embed_latest());
  }
  return out;
}

template Rollouts<float> rollout(model::Network<float>&, std::span<const PolicyExample>, std::size_t,
                                 core::RngStream&, bool, bool);
template Rollouts<double> rollout(model::Network<double>&, std::span<const PolicyExample>, std::size_t,
                                  core::RngStream&, bool, bool);

TrajectoryRecord rollout_episode(const model::Model& model, const taskgen::SampledTask& task, std::size_t T_budget,
                                 core::RngStream& rng, std::size_t n_query) {
  PolicyExample ex = make_policy_example(task, model.config, n_query, rng);
  core::Graph<float> g(false);
  model::Network<float> net(model.config, model.params, g);
  return std::move(rollout(net, std::span(&ex, 1), T_budget, rng).records.front());
}

std::vector<double> reward_weights(std::span<const double> rewards, double gamma, bool return_to_go) {
  std::vector<double> w(rewards.size());
  double discount = 1.0;
  for (std::size_t t = 0; t < rewards.size(); ++t) {
    w[t] = discount * rewards[t];
    discount *= gamma;
  }
  if (return_to_go) {
    for (std::size_t t = rewards.size(); t-- > 1;) w[t - 1] += w[t];
  }
  return w;
}

double rl_loss(std::span<const TrajectoryRecord> trajectories, double gamma, bool return_to_go) {
  if (trajectories.empty()) throw SizeError("rl_loss() without trajectories");
  double total = 0.0;
  for (const auto& tr : trajectories) {
    if (tr.log_probs.size() != tr.rewards.size()) throw DimensionError("trajectory log-prob and reward counts differ");
    const auto w = reward_weights(tr.rewards, gamma, return_to_go);
    for (std::size_t t = 0; t < w.size(); ++t) total += tr.log_probs[t] * w[t];
  }
  return -total / static_cast<double>(trajectories.size());
}

template <typename T>
Var<T> rl_loss(const Rollouts<T>& ro, double gamma, bool return_to_go) {
  if (ro.records.empty()) throw SizeError("rl_loss() without trajectories");
  std::vector<Var<T>> terms;
  std::vector<T> weights;
  for (std::size_t b = 0; b < ro.records.size(); ++b) {
    const auto w = reward_weights(ro.records[b].rewards, gamma, return_to_go);
    for (std::size_t t = 0; t < w.size(); ++t) {
      terms.push_back(ro.log_probs[b][t]);
      weights.push_back(static_cast<T>(w[t]));
    }
  }
  core::Graph<T>& g = terms.front().graph();
  Var<T> weighted = core::mul(core::concat(terms, 0), g.constant(core::Tensor<T>::column(std::move(weights))));
  return core::scale(core::sum_all(weighted), static_cast<T>(-1.0 / double(ro.records.size())));
}

template Var<float> rl_loss(const Rollouts<float>&, double, bool);
template Var<double> rl_loss(const Rollouts<double>&, double, bool);

}  // namespace tamo::train
