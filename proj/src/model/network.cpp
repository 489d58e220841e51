#include "tamo/model/network.hpp"

#include <cmath>

#include "tamo/core/error.hpp"

namespace tamo::model {

using core::AttentionMask;
using core::ParamStore;
using core::Tensor;
using core::TensorF;

namespace {

void add_weight(ParamStore<float>& ps, core::RngStream& rng, const std::string& name, std::size_t in,
                std::size_t out) {
  const double a = std::sqrt(3.0 / static_cast<double>(in));
  TensorF w = TensorF::matrix(in, out);
  for (auto& v : w.values()) v = static_cast<float>(rng.uniform(-a, a));
  ps.add(name, std::move(w));
}

void add_linear(ParamStore<float>& ps, core::RngStream& rng, const std::string& name, std::size_t in,
                std::size_t out, bool bias = true) {
  add_weight(ps, rng, name + ".w", in, out);
  if (bias) ps.add(name + ".b", TensorF::matrix(1, out));
}

void add_mlp(ParamStore<float>& ps, core::RngStream& rng, const std::string& prefix, std::size_t in,
             std::size_t hidden, std::size_t hidden_layers, std::size_t out, bool out_bias = true) {
  std::size_t width = in;
  for (std::size_t i = 0; i < hidden_layers; ++i) {
    add_linear(ps, rng, prefix + "." + std::to_string(i), width, hidden);
    width = hidden;
  }
  add_linear(ps, rng, prefix + "." + std::to_string(hidden_layers), width, out, out_bias);
}

void add_norm(ParamStore<float>& ps, const std::string& name, std::size_t d) {
  ps.add(name + ".g", TensorF::matrix(1, d, 1.0f));
  ps.add(name + ".b", TensorF::matrix(1, d));
}

void add_block(ParamStore<float>& ps, core::RngStream& rng, const std::string& prefix, const ModelConfig& c) {
  add_norm(ps, prefix + ".ln1", c.d_e);
  add_linear(ps, rng, prefix + ".q", c.d_e, c.d_e);
  // A key bias only shifts every logit of a row equally, so keys have none.
  add_weight(ps, rng, prefix + ".k.w", c.d_e, c.d_e);
  add_linear(ps, rng, prefix + ".v", c.d_e, c.d_e);
  add_linear(ps, rng, prefix + ".o", c.d_e, c.d_e);
  add_norm(ps, prefix + ".ln2", c.d_e);
  add_linear(ps, rng, prefix + ".ff1", c.d_e, c.ff_width);
  add_linear(ps, rng, prefix + ".ff2", c.ff_width, c.d_e);
}

TensorF normal_tensor(core::RngStream& rng, std::size_t rows, std::size_t cols, double stddev) {
  TensorF t = TensorF::matrix(rows, cols);
  for (auto& v : t.values()) v = static_cast<float>(stddev * rng.normal());
  return t;
}

std::size_t output_token(const PosAssignment& a, std::size_t k) {
  if (k >= a.y.size()) {
    throw IndexError("output index " + std::to_string(k) + " out of range for " + std::to_string(a.y.size()) +
                     " outputs");
  }
  return a.y[k];
}

}  // namespace

ParamStore<float> init_params(const ModelConfig& c, core::RngStream& rng) {
  c.validate();
  ParamStore<float> ps;
  add_mlp(ps, rng, "embed.ex", 1, c.d_e, 2, c.d_e);
  add_mlp(ps, rng, "embed.ey", 1, c.d_e, 2, c.d_e);
  for (std::size_t i = 0; i < c.embed_layers; ++i) add_block(ps, rng, "embed.block" + std::to_string(i), c);
  ps.add("embed.pos_x", normal_tensor(rng, c.pool_x, c.d_e, 1.0));
  ps.add("embed.pos_y", normal_tensor(rng, c.pool_y, c.d_e, 1.0));
  for (std::size_t i = 0; i < c.encoder_layers; ++i) add_block(ps, rng, "encoder.block" + std::to_string(i), c);
  for (std::size_t i = 0; i < c.decoder_layers; ++i) add_block(ps, rng, "decoder.block" + std::to_string(i), c);
  ps.add("token.opt", normal_tensor(rng, 1, c.d_e, 0.02));
  ps.add("token.pred", normal_tensor(rng, 1, c.d_e, 0.02));
  add_mlp(ps, rng, "time", 1, c.d_e, 2, c.d_e);
  add_norm(ps, "final_ln", c.d_e);
  add_mlp(ps, rng, "policy", c.d_e, c.d_e, c.head_layers, 1, false);
  add_mlp(ps, rng, "mixture", c.d_e, c.d_e, c.head_layers, 3 * c.components);
  return ps;
}

template <typename T>
Network<T>::Network(const ModelConfig& cfg, const ParamStore<T>& params, core::Graph<T>& graph,
                    ParamStore<T>* trainable)
    : cfg_(cfg), params_(params), g_(graph), trainable_(trainable) {}

template <typename T>
core::Var<T> Network<T>::param(const std::string& name) {
  auto it = cache_.find(name);
  if (it != cache_.end()) return it->second;
  V v = (trainable_ && g_.grad_enabled()) ? g_.param(trainable_->get(name)) : g_.param(params_.get(name));
  cache_.emplace(name, v);
  return v;
}

template <typename T>
core::Var<T> Network<T>::constant_column(const std::vector<double>& values) {
  std::vector<T> v(values.begin(), values.end());
  return g_.constant(Tensor<T>::column(std::move(v)));
}

namespace {
template <typename T>
core::Var<T> activate(core::Var<T> x, Activation a) {
  return a == Activation::relu ? core::relu(x) : core::gelu(x);
}
}  // namespace

template <typename T>
core::Var<T> Network<T>::mlp(const std::string& prefix, V x, std::size_t linears) {
  for (std::size_t i = 0; i < linears; ++i) {
    const std::string name = prefix + "." + std::to_string(i);
    x = params_.contains(name + ".b") ? core::linear(x, param(name + ".w"), param(name + ".b"))
                                      : core::matmul(x, param(name + ".w"));
    if (i + 1 < linears) x = activate(x, cfg_.mlp_activation);
  }
  return x;
}

template <typename T>
core::Var<T> Network<T>::transformer(const std::string& prefix, V x, std::size_t key_begin, std::size_t key_end,
                                     const AttentionMask& mask) {
  V h = core::layer_norm(x, param(prefix + ".ln1.g"), param(prefix + ".ln1.b"));
  V hk = (key_begin == 0 && key_end == h.rows()) ? h : core::slice_rows(h, key_begin, key_end);
  V q = core::linear(h, param(prefix + ".q.w"), param(prefix + ".q.b"));
  V k = core::matmul(hk, param(prefix + ".k.w"));
  V v = core::linear(hk, param(prefix + ".v.w"), param(prefix + ".v.b"));
  V a = core::attention(q, k, v, cfg_.heads, mask);
  x = x + core::linear(a, param(prefix + ".o.w"), param(prefix + ".o.b"));
  V h2 = core::layer_norm(x, param(prefix + ".ln2.g"), param(prefix + ".ln2.b"));
  V f = activate(core::linear(h2, param(prefix + ".ff1.w"), param(prefix + ".ff1.b")), cfg_.ff_activation);
  return x + core::linear(f, param(prefix + ".ff2.w"), param(prefix + ".ff2.b"));
}

template <typename T>
core::Var<T> Network<T>::embed(std::span<const ObservationSet> sets) {
  std::vector<double> xs, ys;
  std::vector<std::pair<bool, std::size_t>> token_source;  // (is_y, index within xs / ys)
  std::vector<std::size_t> pos;                             // row in [pos_x; pos_y]
  Offsets offsets{0};
  for (const auto& s : sets) {
    if (!s.assign) throw ConfigError("observation set without positional assignment");
    if (s.d_x == 0) throw DomainError("observation without input dimensions");
    if (s.assign->x.size() < s.d_x || (s.y && s.assign->y.size() < s.d_y)) {
      throw IndexError("positional assignment does not cover the observation dimensions");
    }
    check_assignment(cfg_, *s.assign);
    for (std::size_t i = 0; i < s.count; ++i) {
      std::size_t tokens = 0;
      for (std::size_t j = 0; j < s.d_x; ++j) {
        token_source.emplace_back(false, xs.size());
        xs.push_back(s.x[i * s.d_x + j]);
        pos.push_back(s.assign->x[j]);
        ++tokens;
      }
      if (s.y) {
        for (std::size_t k = 0; k < s.d_y; ++k) {
          if (s.mask && !s.mask[i * s.d_y + k]) continue;
          token_source.emplace_back(true, ys.size());
          ys.push_back(s.y[i * s.d_y + k]);
          pos.push_back(cfg_.pool_x + s.assign->y[k]);
          ++tokens;
        }
      }
      offsets.push_back(offsets.back() + tokens);
    }
  }
  if (offsets.size() == 1) throw SizeError("embed() called without observations");

  V ex = mlp("embed.ex", constant_column(xs), 3);
  std::vector<std::size_t> order(token_source.size());
  V tokens;
  if (ys.empty()) {
    for (std::size_t t = 0; t < order.size(); ++t) order[t] = token_source[t].second;
    tokens = ex;
  } else {
    V ey = mlp("embed.ey", constant_column(ys), 3);
    for (std::size_t t = 0; t < order.size(); ++t) {
      order[t] = token_source[t].first ? xs.size() + token_source[t].second : token_source[t].second;
    }
    tokens = core::concat<T>({ex, ey}, 0);
  }
  V h = core::gather_rows(tokens, order);
  const AttentionMask mask = AttentionMask::block_diagonal(offsets);
  for (std::size_t l = 0; l < cfg_.embed_layers; ++l) {
    h = transformer("embed.block" + std::to_string(l), h, 0, h.rows(), mask);
  }
  V pools = core::concat<T>({param("embed.pos_x"), param("embed.pos_y")}, 0);
  h = h * core::gather_rows(pools, pos);
  return core::segment_mean(h, offsets);
}

namespace {
void check_offsets(const Offsets& off, std::size_t rows, const char* what, bool nonempty) {
  if (off.size() < 2 || off.front() != 0 || off.back() != rows) {
    throw DimensionError(std::string(what) + " offsets do not cover the rows");
  }
  for (std::size_t g = 0; g + 1 < off.size(); ++g) {
    if (off[g + 1] < off[g] || (nonempty && off[g + 1] == off[g])) {
      throw SizeError(std::string(what) + " group " + std::to_string(g) + " is empty or malformed");
    }
  }
}
}  // namespace

template <typename T>
core::Var<T> Network<T>::encode(V history, V queries, const Offsets& h_off, const Offsets& q_off) {
  check_offsets(h_off, history.rows(), "history", true);
  check_offsets(q_off, queries.rows(), "query", false);
  if (h_off.size() != q_off.size()) throw DimensionError("history and query group counts differ");
  const std::size_t nh = history.rows();
  std::vector<std::pair<std::size_t, std::size_t>> ranges;
  ranges.reserve(nh + queries.rows());
  for (std::size_t g = 0; g + 1 < h_off.size(); ++g) {
    for (std::size_t r = h_off[g]; r < h_off[g + 1]; ++r) ranges.emplace_back(h_off[g], h_off[g + 1]);
  }
  for (std::size_t g = 0; g + 1 < q_off.size(); ++g) {
    for (std::size_t r = q_off[g]; r < q_off[g + 1]; ++r) ranges.emplace_back(h_off[g], h_off[g + 1]);
  }
  const AttentionMask mask = AttentionMask::ranges(std::move(ranges));
  V x = core::concat<T>({history, queries}, 0);
  for (std::size_t l = 0; l < cfg_.encoder_layers; ++l) {
    x = transformer("encoder.block" + std::to_string(l), x, 0, nh, mask);
  }
  return core::slice_rows(x, nh, x.rows());
}

template <typename T>
core::Var<T> Network<T>::decode(V queries, V task_tokens, const Offsets& q_off, const Offsets& t_off) {
  check_offsets(q_off, queries.rows(), "query", false);
  check_offsets(t_off, task_tokens.rows(), "task token", true);
  if (q_off.size() != t_off.size()) throw DimensionError("query and task-token group counts differ");
  const std::size_t nq = queries.rows();
  std::vector<std::pair<std::size_t, std::size_t>> ranges;
  ranges.reserve(nq + task_tokens.rows());
  for (std::size_t g = 0; g + 1 < q_off.size(); ++g) {
    for (std::size_t r = q_off[g]; r < q_off[g + 1]; ++r) ranges.emplace_back(t_off[g], t_off[g + 1]);
  }
  for (std::size_t g = 0; g + 1 < t_off.size(); ++g) {
    for (std::size_t r = t_off[g]; r < t_off[g + 1]; ++r) ranges.emplace_back(t_off[g], t_off[g + 1]);
  }
  const AttentionMask mask = AttentionMask::ranges(std::move(ranges));
  V x = core::concat<T>({queries, task_tokens}, 0);
  for (std::size_t l = 0; l < cfg_.decoder_layers; ++l) {
    x = transformer("decoder.block" + std::to_string(l), x, nq, x.rows(), mask);
  }
  return core::layer_norm(core::slice_rows(x, 0, nq), param("final_ln.g"), param("final_ln.b"));
}

template <typename T>
core::Var<T> Network<T>::optimization_tokens(std::span<const OptimizationTask> tasks, Offsets& t_off) {
  const std::size_t n = tasks.size();
  if (n == 0) throw SizeError("optimization_tokens() without groups");
  std::vector<double> fractions;
  Tensor<T> sum_x = Tensor<T>::matrix(n, cfg_.pool_x);
  std::vector<std::size_t> out_rows;
  for (std::size_t g = 0; g < n; ++g) {
    const auto& t = tasks[g];
    if (!t.assign) throw ConfigError("optimization task tokens need a positional assignment");
    if (t.assign->x.empty()) throw ConfigError("optimization task tokens need at least one input dimension");
    fractions.push_back(t.time_fraction);
    for (std::size_t j : t.assign->x) {
      if (j >= cfg_.pool_x) throw IndexError("input positional index out of range");
      sum_x(g, j) += T(1);
    }
    if (t.output) out_rows.push_back(output_token(*t.assign, *t.output));
  }
  V opt = core::gather_rows(param("token.opt"), std::vector<std::size_t>(n, 0));
  V time = mlp("time", constant_column(fractions), 3);
  V px = core::matmul(g_.constant(std::move(sum_x)), param("embed.pos_x"));
  std::vector<V> parts{opt, time, px};
  if (!out_rows.empty()) parts.push_back(core::gather_rows(param("embed.pos_y"), out_rows));
  V all = core::concat<T>(parts, 0);

  std::vector<std::size_t> order;
  std::size_t next_out = 0;
  for (std::size_t g = 0; g < n; ++g) {
    order.push_back(g);
    order.push_back(n + g);
    order.push_back(2 * n + g);
    if (tasks[g].output) order.push_back(3 * n + next_out++);
    t_off.push_back(order.size());
  }
  return core::gather_rows(all, order);
}

template <typename T>
core::Var<T> Network<T>::prediction_tokens(std::span<const PredictionTask> tasks, Offsets& t_off) {
  const std::size_t n = tasks.size();
  if (n == 0) throw SizeError("prediction_tokens() without groups");
  std::vector<std::size_t> rows;
  for (const auto& t : tasks) {
    if (!t.assign) throw ConfigError("prediction task tokens need a positional assignment");
    rows.push_back(output_token(*t.assign, t.output));
  }
  V pred = core::gather_rows(param("token.pred"), std::vector<std::size_t>(n, 0));
  V py = core::gather_rows(param("embed.pos_y"), rows);
  V all = core::concat<T>({pred, py}, 0);
  std::vector<std::size_t> order;
  for (std::size_t g = 0; g < n; ++g) {
    order.push_back(g);
    order.push_back(n + g);
    t_off.push_back(order.size());
  }
  return core::gather_rows(all, order);
}

template <typename T>
core::Var<T> Network<T>::utilities(V decoded) {
  return mlp("policy", decoded, cfg_.head_layers + 1);
}

template <typename T>
MixtureVars<T> Network<T>::mixture(V decoded) {
  const std::size_t k = cfg_.components;
  V raw = mlp("mixture", decoded, cfg_.head_layers + 1);
  MixtureVars<T> m;
  m.log_weights = core::log_softmax(core::slice_cols(raw, 0, k), 1);
  m.means = core::slice_cols(raw, k, 2 * k);
  m.scales = core::add_scalar(core::softplus(core::slice_cols(raw, 2 * k, 3 * k)), static_cast<T>(cfg_.scale_floor));
  return m;
}

template class Network<float>;
template class Network<double>;

}  // namespace tamo::model
