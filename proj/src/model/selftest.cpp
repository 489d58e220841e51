#include "tamo/model/selftest.hpp"

#include "tamo/core/ops.hpp"
#include "tamo/model/model.hpp"

namespace tamo::model {

using core::Matrix;
using core::RngStream;

ModelConfig miniature_config(Activation mlp) {
  ModelConfig c;
  c.mlp_activation = mlp;
  c.d_e = 8;
  c.embed_layers = 1;
  c.encoder_layers = 1;
  c.decoder_layers = 1;
  c.heads = 2;
  c.ff_width = 16;
  c.components = 2;
  c.head_layers = 1;
  return c;
}

namespace {
Matrix random_points(RngStream& rng, std::size_t n, std::size_t d, double lo, double hi) {
  Matrix m = Matrix::matrix(n, d);
  for (auto& v : m.values()) v = rng.uniform(lo, hi);
  return m;
}
}  // namespace

core::GradCheckResult miniature_grad_check(std::uint64_t seed, Activation mlp, double step) {
  const ModelConfig cfg = miniature_config(mlp);
  const Model m = make_model(cfg, seed);
  core::ParamStore<double> params = m.params.cast<double>();
  RngStream rng(seed, 0x6d696e69);
  const auto a = sample_assignment(cfg, 2, 2, rng);
  History h(2, 2);
  for (int i = 0; i < 3; ++i) {
    const Matrix x = random_points(rng, 1, 2, -5, 5), y = random_points(rng, 1, 2, -1, 1);
    h.add(x.values(), y.values());
  }
  const Matrix q = random_points(rng, 4, 2, -5, 5);
  const Matrix cx = random_points(rng, 4, 2, -5, 5), cy = random_points(rng, 4, 2, -1, 1);
  const Matrix tx = random_points(rng, 3, 2, -5, 5), ty = random_points(rng, 3, 1, -1, 1);
  const std::size_t target = rng.index(q.rows());

  auto loss = [&](core::Graph<double>& g, core::ParamStore<double>& ps) {
    Network<double> net(cfg, ps, g, &ps);
    const ObservationSet hs = h.as_set(a), qs = input_set(q, a);
    auto he = net.embed(std::span(&hs, 1));
    auto qe = net.embed(std::span(&qs, 1));
    auto enc = net.encode(he, qe, {0, he.rows()}, {0, qe.rows()});
    const OptimizationTask task{0.6, &a, std::nullopt};
    Offsets t_off{0};
    auto tok = net.optimization_tokens(std::span(&task, 1), t_off);
    auto u = net.utilities(net.decode(enc, tok, {0, enc.rows()}, t_off));
    auto logp = core::pick(core::log_softmax(u, 0), target, 0);

    const ObservationSet cs = observation_set(cx, cy, a), ts = input_set(tx, a);
    auto ce = net.embed(std::span(&cs, 1));
    auto te = net.embed(std::span(&ts, 1));
    auto penc = net.encode(ce, te, {0, ce.rows()}, {0, te.rows()});
    const PredictionTask ptask{1, &a};
    Offsets p_off{0};
    auto ptok = net.prediction_tokens(std::span(&ptask, 1), p_off);
    auto mix = net.mixture(net.decode(penc, ptok, {0, penc.rows()}, p_off));
    auto ll = core::gmm_log_density(mix.log_weights, mix.means, mix.scales, g.constant(ty));
    return core::sub(core::scale(core::mean_all(ll), -1.0), logp);
  };
  return core::grad_check_params(loss, params, step);
}

}  // namespace tamo::model
