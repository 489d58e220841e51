#include "tamo/model/model.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "tamo/core/error.hpp"

namespace tamo::model {

using core::Graph;
using core::Matrix;

Model make_model(const ModelConfig& cfg, std::uint64_t seed) {
  core::RngStream rng(seed, 0x6d6f64656cULL);
  return Model{cfg, init_params(cfg, rng)};
}

void History::add(std::span<const double> x, std::span<const double> y, std::span<const std::uint8_t> observed) {
  if (x.size() != d_x_ || y.size() != d_y_) throw DimensionError("history entry has the wrong dimensionality");
  if (!observed.empty() && observed.size() != d_y_) throw DimensionError("observed mask has the wrong length");
  x_.insert(x_.end(), x.begin(), x.end());
  y_.insert(y_.end(), y.begin(), y.end());
  if (observed.empty()) {
    mask_.insert(mask_.end(), d_y_, std::uint8_t{1});
  } else {
    mask_.insert(mask_.end(), observed.begin(), observed.end());
  }
}

void History::pop_back() {
  if (empty()) throw SizeError("pop_back() on an empty history");
  x_.resize(x_.size() - d_x_);
  y_.resize(y_.size() - d_y_);
  mask_.resize(mask_.size() - d_y_);
}

void History::set_output(std::size_t i, std::size_t k, double value) {
  if (i >= size() || k >= d_y_) throw IndexError("history entry (" + std::to_string(i) + ", " + std::to_string(k) + ") out of range");
  y_[i * d_y_ + k] = value;
  mask_[i * d_y_ + k] = 1;
}

bool History::complete(std::size_t i) const {
  auto m = observed(i);
  return std::all_of(m.begin(), m.end(), [](std::uint8_t v) { return v != 0; });
}

ObservationSet History::as_set(const PosAssignment& assign) const {
  return ObservationSet{size(), d_x_, d_y_, x_.data(), y_.data(), mask_.data(), &assign};
}

ObservationSet input_set(const Matrix& x, const PosAssignment& assign) {
  return ObservationSet{x.rows(), x.cols(), 0, x.data(), nullptr, nullptr, &assign};
}

ObservationSet observation_set(const Matrix& x, const Matrix& y, const PosAssignment& assign) {
  if (x.rows() != y.rows()) throw DimensionError("observation inputs and outputs differ in row count");
  return ObservationSet{x.rows(), x.cols(), y.cols(), x.data(), y.data(), nullptr, &assign};
}

std::size_t argmax_available(std::span<const double> values, const std::vector<std::uint8_t>* available) {
  std::size_t best = values.size();
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (available && !(*available)[i]) continue;
    if (best == values.size() || values[i] > values[best]) best = i;
  }
  if (best == values.size()) throw SizeError("no available candidate");
  return best;
}

namespace {

void check_step(std::size_t t, std::size_t T) {
  if (T == 0 || t < 1 || t > T) {
    throw DomainError("step t = " + std::to_string(t) + " outside [1, " + std::to_string(T) + "]");
  }
}

struct Encoded {
  core::Var<float> queries;
  std::size_t n = 0;
};

Encoded encode_queries(Network<float>& net, const ObservationSet& history, const Matrix& queries,
                       const PosAssignment& assign) {
  if (history.count == 0) throw SizeError("policy and prediction passes need at least one observation");
  if (queries.rows() == 0) throw SizeError("no query points");
  const ObservationSet q = input_set(queries, assign);
  core::Var<float> h = net.embed(std::span(&history, 1));
  core::Var<float> e = net.embed(std::span(&q, 1));
  return {net.encode(h, e, {0, h.rows()}, {0, e.rows()}), queries.rows()};
}

}  // namespace

PolicyOutput policy_forward(const Model& model, const History& history, const Matrix& queries, std::size_t t,
                            std::size_t T, const PosAssignment& assign, const std::vector<std::uint8_t>* available) {
  check_step(t, T);
  if (available && available->size() != queries.rows()) throw DimensionError("availability mask length mismatch");
  Graph<float> g(false);
  Network<float> net(model.config, model.params, g);
  const ObservationSet hs = history.as_set(assign);
  Encoded enc = encode_queries(net, hs, queries, assign);
  const OptimizationTask task{double(T - t) / double(T), &assign, std::nullopt};
  Offsets t_off{0};
  core::Var<float> tokens = net.optimization_tokens(std::span(&task, 1), t_off);
  core::Var<float> u = net.utilities(net.decode(enc.queries, tokens, {0, enc.n}, t_off));

  PolicyOutput out;
  out.utilities.assign(u.value().values().begin(), u.value().values().end());
  out.probs.assign(enc.n, 0.0);
  double top = -INFINITY;
  for (std::size_t i = 0; i < enc.n; ++i) {
    if (!available || (*available)[i]) top = std::max(top, out.utilities[i]);
  }
  if (top == -INFINITY) throw SizeError("no available candidate");
  double z = 0.0;
  for (std::size_t i = 0; i < enc.n; ++i) {
    if (!available || (*available)[i]) z += (out.probs[i] = std::exp(out.utilities[i] - top));
  }
  for (auto& p : out.probs) p /= z;
  out.argmax = argmax_available(out.utilities, available);
  return out;
}

std::vector<std::vector<double>> policy_utilities_per_output(const Model& model, const History& history,
                                                             const Matrix& queries, std::size_t t, std::size_t T,
                                                             const PosAssignment& assign) {
  check_step(t, T);
  Graph<float> g(false);
  Network<float> net(model.config, model.params, g);
  const ObservationSet hs = history.as_set(assign);
  Encoded enc = encode_queries(net, hs, queries, assign);
  const std::size_t d_y = history.d_y();
  std::vector<OptimizationTask> tasks;
  std::vector<std::size_t> rows;
  Offsets q_off{0};
  for (std::size_t k = 0; k < d_y; ++k) {
    tasks.push_back({double(T - t) / double(T), &assign, k});
    for (std::size_t i = 0; i < enc.n; ++i) rows.push_back(i);
    q_off.push_back(rows.size());
  }
  Offsets t_off{0};
  core::Var<float> tokens = net.optimization_tokens(tasks, t_off);
  core::Var<float> u = net.utilities(net.decode(core::gather_rows(enc.queries, rows), tokens, q_off, t_off));
  std::vector<std::vector<double>> out(d_y, std::vector<double>(enc.n));
  for (std::size_t k = 0; k < d_y; ++k) {
    for (std::size_t i = 0; i < enc.n; ++i) out[k][i] = u.value()[k * enc.n + i];
  }
  return out;
}

double PredictionOutput::mixture_mean(std::size_t i) const {
  double m = 0.0;
  for (std::size_t l = 0; l < components; ++l) m += weight(i, l) * mean(i, l);
  return m;
}

double PredictionOutput::log_density(std::size_t i, double y) const {
  double top = -INFINITY;
  std::vector<double> terms(components);
  for (std::size_t l = 0; l < components; ++l) {
    const double z = (y - mean(i, l)) / scale(i, l);
    terms[l] = std::log(weight(i, l)) - 0.5 * z * z - std::log(scale(i, l)) - 0.5 * std::log(2.0 * std::numbers::pi);
    top = std::max(top, terms[l]);
  }
  double s = 0.0;
  for (double v : terms) s += std::exp(v - top);
  return top + std::log(s);
}

std::vector<PredictionOutput> predict_forward(const Model& model, const ObservationSet& context, const Matrix& targets,
                                              std::span<const std::size_t> ks, const PosAssignment& assign) {
  if (ks.empty()) throw SizeError("predict_forward() without output indices");
  for (std::size_t k : ks) {
    if (k >= context.d_y) {
      throw IndexError("output index " + std::to_string(k) + " out of range for d_y = " + std::to_string(context.d_y));
    }
  }
  Graph<float> g(false);
  Network<float> net(model.config, model.params, g);
  Encoded enc = encode_queries(net, context, targets, assign);
  std::vector<PredictionTask> tasks;
  std::vector<std::size_t> rows;
  Offsets q_off{0};
  for (std::size_t k : ks) {
    tasks.push_back({k, &assign});
    for (std::size_t i = 0; i < enc.n; ++i) rows.push_back(i);
    q_off.push_back(rows.size());
  }
  Offsets t_off{0};
  core::Var<float> tokens = net.prediction_tokens(tasks, t_off);
  MixtureVars<float> m = net.mixture(net.decode(core::gather_rows(enc.queries, rows), tokens, q_off, t_off));

  const std::size_t K = model.config.components;
  std::vector<PredictionOutput> out;
  for (std::size_t a = 0; a < ks.size(); ++a) {
    PredictionOutput p;
    p.targets = enc.n;
    p.components = K;
    const std::size_t base = a * enc.n * K;
    for (std::size_t i = 0; i < enc.n; ++i) {
      double z = 0.0;
      for (std::size_t l = 0; l < K; ++l) z += std::exp(double(m.log_weights.value()[base + i * K + l]));
      for (std::size_t l = 0; l < K; ++l) {
        const std::size_t at = base + i * K + l;
        p.weights.push_back(std::exp(double(m.log_weights.value()[at])) / z);
        p.means.push_back(m.means.value()[at]);
        p.scales.push_back(m.scales.value()[at]);
      }
    }
    out.push_back(std::move(p));
  }
  return out;
}

PredictionOutput predict_forward(const Model& model, const ObservationSet& context, const Matrix& targets,
                                 std::size_t k, const PosAssignment& assign) {
  return std::move(predict_forward(model, context, targets, std::span(&k, 1), assign).front());
}

}  // namespace tamo::model
