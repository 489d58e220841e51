#include "tamo/train/train.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <sstream>

#include "tamo/core/bytes.hpp"
#include "tamo/core/error.hpp"
#include "tamo/core/json_util.hpp"
#include "tamo/core/schedule.hpp"
#include "tamo/taskgen/task_io.hpp"

namespace tamo::train {

using core::Var;
using model::ObservationSet;

void TrainConfig::validate() const {
  if (iterations == 0) throw ConfigError("train: iterations must be positive");
  if (burn_in > iterations) throw ConfigError("train: burn_in exceeds iterations");
  if (!(lambda_p > 0.0)) throw ConfigError("train: lambda_p must be positive");
  if (!(gamma > 0.0 && gamma <= 1.0)) throw ConfigError("train: gamma must lie in (0, 1]");
  if (budget == 0) throw ConfigError("train: budget must be positive");
  if (prediction_batch == 0 || policy_batch == 0) throw ConfigError("train: batch sizes must be positive");
  if (prediction_points < 3) throw ConfigError("train: prediction_points must be at least 3");
  if (n_query < budget + 1) throw ConfigError("train: n_query must exceed the budget");
  if (!(warm_frac > 0.0 && warm_frac < 1.0)) throw ConfigError("train: warm_frac must lie in (0, 1)");
  if (!(lr_warmup > 0.0 && lr_joint > 0.0)) throw ConfigError("train: learning rates must be positive");
  if (grad_clip < 0.0) throw ConfigError("train: grad_clip must be non-negative");
  if (checkpoint_every == 0) throw ConfigError("train: checkpoint_every must be positive");
  model.validate();
}

nlohmann::json to_json(const TrainConfig& c) {
  return {{"iterations", c.iterations},
          {"burn_in", c.burn_in},
          {"lambda_p", c.lambda_p},
          {"gamma", c.gamma},
          {"budget", c.budget},
          {"prediction_batch", c.prediction_batch},
          {"policy_batch", c.policy_batch},
          {"prediction_points", c.prediction_points},
          {"n_query", c.n_query},
          {"lr_warmup", c.lr_warmup},
          {"lr_joint", c.lr_joint},
          {"warm_frac", c.warm_frac},
          {"grad_clip", c.grad_clip},
          {"return_to_go", c.return_to_go},
          {"checkpoint_every", c.checkpoint_every},
          {"dims", taskgen::to_json(c.dims)},
          {"prior", taskgen::to_json(c.prior)},
          {"model", model::to_json(c.model)},
          {"seed", c.seed}};
}

TrainConfig train_config_from_json(const nlohmann::json& j) {
  core::require_keys(j,
                     {"iterations", "burn_in", "lambda_p", "gamma", "budget", "prediction_batch", "policy_batch",
                      "prediction_points", "n_query", "lr_warmup", "lr_joint", "warm_frac", "grad_clip",
                      "return_to_go", "checkpoint_every", "dims", "prior", "model", "seed"},
                     "train");
  TrainConfig c;
  const std::string ctx = "train";
  c.iterations = core::get_or(j, "iterations", c.iterations, ctx);
  c.burn_in = core::get_or(j, "burn_in", c.burn_in, ctx);
  c.lambda_p = core::get_or(j, "lambda_p", c.lambda_p, ctx);
  c.gamma = core::get_or(j, "gamma", c.gamma, ctx);
  c.budget = core::get_or(j, "budget", c.budget, ctx);
  c.prediction_batch = core::get_or(j, "prediction_batch", c.prediction_batch, ctx);
  c.policy_batch = core::get_or(j, "policy_batch", c.policy_batch, ctx);
  c.prediction_points = core::get_or(j, "prediction_points", c.prediction_points, ctx);
  c.n_query = core::get_or(j, "n_query", c.n_query, ctx);
  c.lr_warmup = core::get_or(j, "lr_warmup", c.lr_warmup, ctx);
  c.lr_joint = core::get_or(j, "lr_joint", c.lr_joint, ctx);
  c.warm_frac = core::get_or(j, "warm_frac", c.warm_frac, ctx);
  c.grad_clip = core::get_or(j, "grad_clip", c.grad_clip, ctx);
  c.return_to_go = core::get_or(j, "return_to_go", c.return_to_go, ctx);
  c.checkpoint_every = core::get_or(j, "checkpoint_every", c.checkpoint_every, ctx);
  c.seed = core::get_or(j, "seed", c.seed, ctx);
  if (j.contains("dims")) c.dims = taskgen::dims_from_json(j.at("dims"));
  if (j.contains("prior")) c.prior = taskgen::prior_from_json(j.at("prior"));
  if (j.contains("model")) c.model = model::model_config_from_json(j.at("model"));
  c.validate();
  return c;
}

std::vector<PredictionExample> sample_prediction_examples(const TrainConfig& cfg, core::RngStream& rng,
                                                          std::size_t count) {
  std::vector<PredictionExample> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    const auto spec = taskgen::sample_task_spec(rng, cfg.dims, cfg.prior);
    PredictionExample ex{taskgen::make_prediction_batch(spec, rng, cfg.prediction_points), {}};
    ex.assign = model::sample_assignment(cfg.model, spec.d_x, spec.d_y, rng);
    out.push_back(std::move(ex));
  }
  return out;
}

template <typename T>
Var<T> prediction_loss(model::Network<T>& net, std::span<const PredictionExample> examples) {
  if (examples.empty()) throw SizeError("prediction_loss() without examples");
  std::vector<ObservationSet> ctx, tgt;
  model::Offsets h_off{0}, q_off{0};
  for (const auto& ex : examples) {
    if (ex.data.context_x.rows() == 0 || ex.data.target_x.rows() == 0) {
      throw SizeError("prediction example needs context and target points");
    }
    ctx.push_back(model::observation_set(ex.data.context_x, ex.data.context_y, ex.assign));
    tgt.push_back(model::input_set(ex.data.target_x, ex.assign));
    h_off.push_back(h_off.back() + ex.data.context_x.rows());
    q_off.push_back(q_off.back() + ex.data.target_x.rows());
  }
  Var<T> enc = net.encode(net.embed(ctx), net.embed(tgt), h_off, q_off);

  std::vector<model::PredictionTask> tasks;
  std::vector<std::size_t> rows;
  std::vector<T> y, w;
  model::Offsets g_off{0};
  const double B = static_cast<double>(examples.size());
  for (std::size_t b = 0; b < examples.size(); ++b) {
    const auto& d = examples[b].data;
    const std::size_t n = d.target_x.rows(), dy = d.target_y.cols();
    const T weight = static_cast<T>(1.0 / (B * double(n) * double(dy)));
    for (std::size_t k = 0; k < dy; ++k) {
      tasks.push_back({k, &examples[b].assign});
      for (std::size_t i = 0; i < n; ++i) {
        rows.push_back(q_off[b] + i);
        y.push_back(static_cast<T>(d.target_y(i, k)));
        w.push_back(weight);
      }
      g_off.push_back(rows.size());
    }
  }
  model::Offsets t_off{0};
  Var<T> tokens = net.prediction_tokens(tasks, t_off);
  auto mix = net.mixture(net.decode(core::gather_rows(enc, rows), tokens, g_off, t_off));
  auto& g = net.graph();
  Var<T> ll = core::gmm_log_density(mix.log_weights, mix.means, mix.scales,
                                    g.constant(core::Tensor<T>::column(std::move(y))));
  return core::scale(core::sum_all(core::mul(ll, g.constant(core::Tensor<T>::column(std::move(w))))), T(-1));
}

template Var<float> prediction_loss(model::Network<float>&, std::span<const PredictionExample>);
template Var<double> prediction_loss(model::Network<double>&, std::span<const PredictionExample>);

double clip_gradients(core::ParamStore<float>& params, double max_norm) {
  double sq = 0.0;
  for (const auto& p : params) {
    for (float g : p.grad.values()) sq += double(g) * g;
  }
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm && std::isfinite(norm)) {
    const float s = static_cast<float>(max_norm / norm);
    for (auto& p : params) {
      for (auto& g : p.grad.values()) g *= s;
    }
  }
  return norm;
}

namespace {
bool finish_step(core::Graph<float>& g, Var<float> loss, model::Model& model, core::Adam<float>& opt, double lr,
                 double grad_clip) {
  if (!std::isfinite(loss.value().item())) {
    opt.skip(model.params);
    return false;
  }
  g.backward(loss);
  clip_gradients(model.params, grad_clip);
  return opt.step(model.params, lr);
}
}  // namespace

StepResult warmup_step(model::Model& model, core::Adam<float>& opt, std::span<const PredictionExample> examples,
                       double lr, double grad_clip) {
  core::Graph<float> g(true);
  model::Network<float> net(model.config, model.params, g, &model.params);
  Var<float> loss = prediction_loss(net, examples);
  StepResult r;
  r.loss_p = loss.value().item();
  r.applied = finish_step(g, loss, model, opt, lr, grad_clip);
  return r;
}

StepResult joint_step(model::Model& model, core::Adam<float>& opt, std::span<const PredictionExample> prediction,
                      std::span<const PolicyExample> policy, const TrainConfig& cfg, double lr, core::RngStream& rng) {
  core::Graph<float> g(true);
  model::Network<float> net(model.config, model.params, g, &model.params);
  Var<float> lp = prediction_loss(net, prediction);
  Rollouts<float> ro = rollout(net, policy, cfg.budget, rng);
  Var<float> lrl = rl_loss(ro, cfg.gamma, cfg.return_to_go);
  Var<float> total = core::add(core::scale(lp, static_cast<float>(cfg.lambda_p)), lrl);
  StepResult r;
  r.loss_p = lp.value().item();
  r.loss_rl = lrl.value().item();
  for (const auto& rec : ro.records) r.mean_final_reward += rec.rewards.back();
  r.mean_final_reward /= static_cast<double>(ro.records.size());
  r.applied = finish_step(g, total, model, opt, lr, cfg.grad_clip);
  return r;
}

nlohmann::json IterationLog::to_json() const {
  nlohmann::json j{{"schema_version", 1}, {"iter", iter},  {"phase", phase},     {"loss_p", loss_p},
                   {"loss_rl", nullptr},  {"lr", lr},      {"mean_final_reward", nullptr},
                   {"wall_ms", wall_ms},  {"skipped", skipped}};
  if (loss_rl) j["loss_rl"] = *loss_rl;
  if (mean_final_reward) j["mean_final_reward"] = *mean_final_reward;
  return j;
}

double learning_rate(const TrainConfig& cfg, std::size_t iter) {
  if (iter < cfg.burn_in) {
    return core::lr_at(static_cast<std::int64_t>(iter), static_cast<std::int64_t>(cfg.burn_in), cfg.lr_warmup,
                       cfg.warm_frac);
  }
  return core::lr_at(static_cast<std::int64_t>(iter - cfg.burn_in),
                     static_cast<std::int64_t>(cfg.iterations - cfg.burn_in), cfg.lr_joint, cfg.warm_frac);
}

namespace {
constexpr std::uint64_t kTrainStream = 0x747261696eULL;
constexpr const char* kMomentM = "adam.m/";
constexpr const char* kMomentV = "adam.v/";
}  // namespace

Trainer::Trainer(TrainConfig cfg) : cfg_(std::move(cfg)), model_(model::make_model(cfg_.model, cfg_.seed)) {
  cfg_.validate();
}

Trainer::Trainer(TrainConfig cfg, const model::Checkpoint& ckpt) : cfg_(std::move(cfg)) {
  cfg_.validate();
  const auto& meta = ckpt.metadata;
  if (!meta.contains("train") || meta.at("train") != to_json(cfg_)) {
    throw ConfigError("checkpoint was written by a different training configuration");
  }
  model_ = model::model_from_checkpoint(ckpt);
  std::vector<core::TensorF> m, v;
  for (const auto& p : model_.params) {
    const auto* tm = ckpt.find(kMomentM + p.name);
    const auto* tv = ckpt.find(kMomentV + p.name);
    if (!tm || !tv) {
      if (!m.empty()) throw FormatError("checkpoint lacks optimizer moments for '" + p.name + "'");
      continue;
    }
    if (!tm->same_shape(p.value) || !tv->same_shape(p.value)) {
      throw DimensionError("optimizer moment for '" + p.name + "' has the wrong shape");
    }
    m.push_back(*tm);
    v.push_back(*tv);
  }
  if (!m.empty() && m.size() != model_.params.size()) throw FormatError("checkpoint optimizer state is incomplete");
  try {
    iter_ = meta.at("iteration").get<std::size_t>();
    opt_.restore(meta.at("optimizer").at("steps").get<std::uint64_t>(),
                 meta.at("optimizer").at("skipped").get<std::uint64_t>(), std::move(m), std::move(v));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed training checkpoint metadata: ") + e.what());
  }
}

model::Checkpoint Trainer::checkpoint() const {
  nlohmann::json meta{{"train", to_json(cfg_)},
                      {"iteration", iter_},
                      {"optimizer", {{"steps", opt_.step_count()}, {"skipped", opt_.skipped_steps()}}},
                      {"rng",
                       {{"algorithm", core::RngStream::algorithm},
                        {"seed", cfg_.seed},
                        {"stream", kTrainStream},
                        {"next_child", iter_}}}};
  model::Checkpoint c = model::make_checkpoint(model_, std::move(meta));
  const auto& m = opt_.first_moments();
  const auto& v = opt_.second_moments();
  for (std::size_t i = 0; i < m.size(); ++i) {
    c.tensors.emplace_back(kMomentM + model_.params[i].name, m[i]);
    c.tensors.emplace_back(kMomentV + model_.params[i].name, v[i]);
  }
  return c;
}

IterationLog Trainer::step(bool timing) {
  if (done()) throw Error("training already complete");
  const auto start = std::chrono::steady_clock::now();
  // Every iteration draws from its own stream, so resuming needs no RNG snapshot.
  const core::RngStream base = core::RngStream(cfg_.seed, kTrainStream).child(iter_);
  core::RngStream pred_rng = base.child(1), policy_rng = base.child(2), rollout_rng = base.child(3);
  IterationLog log;
  log.iter = iter_;
  log.lr = learning_rate(cfg_, iter_);
  const auto pred = sample_prediction_examples(cfg_, pred_rng, cfg_.prediction_batch);
  StepResult r;
  if (iter_ < cfg_.burn_in) {
    log.phase = "warmup";
    r = warmup_step(model_, opt_, pred, log.lr, cfg_.grad_clip);
  } else {
    log.phase = "joint";
    const auto policy = sample_policy_examples(cfg_, policy_rng, cfg_.policy_batch);
    r = joint_step(model_, opt_, pred, policy, cfg_, log.lr, rollout_rng);
    log.loss_rl = r.loss_rl;
    log.mean_final_reward = r.mean_final_reward;
  }
  log.loss_p = r.loss_p;
  log.skipped = !r.applied;
  ++iter_;
  log.wall_ms = timing ? std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count()
                       : 0.0;
  return log;
}

namespace {

void rewrite_log_prefix(const std::filesystem::path& path, std::size_t keep_before) {
  std::ostringstream kept;
  if (std::filesystem::exists(path)) {
    std::ifstream in(path);
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      try {
        if (nlohmann::json::parse(line).at("iter").get<std::size_t>() < keep_before) kept << line << '\n';
      } catch (const nlohmann::json::exception&) {
        break;  // a torn final line from an interrupted run
      }
    }
  }
  core::write_text_atomic(path, kept.str());
}

}  // namespace

model::Model pretrain(const TrainConfig& cfg, const std::filesystem::path& out_dir, const PretrainOptions& options) {
  std::filesystem::create_directories(out_dir);
  const auto ckpt_path = out_dir / "checkpoint.tamo";
  const auto log_path = out_dir / "train_log.jsonl";
  std::unique_ptr<Trainer> trainer;
  if (options.resume && std::filesystem::exists(ckpt_path)) {
    trainer = std::make_unique<Trainer>(cfg, model::load_checkpoint(ckpt_path));
  } else {
    trainer = std::make_unique<Trainer>(cfg);
  }
  rewrite_log_prefix(log_path, trainer->iteration());
  std::ofstream log(log_path, std::ios::app);
  if (!log) throw IoError("cannot append to " + log_path.string());

  while (!trainer->done() && (!options.stop_at || trainer->iteration() < *options.stop_at)) {
    const IterationLog entry = trainer->step(options.timing);
    log << entry.to_json().dump() << '\n';
    log.flush();
    if (!log) throw IoError("write failed for " + log_path.string());
    if (options.progress) options.progress(entry);
    if (trainer->iteration() % cfg.checkpoint_every == 0) model::save_checkpoint(trainer->checkpoint(), ckpt_path);
  }
  model::save_checkpoint(trainer->checkpoint(), ckpt_path);
  if (trainer->done()) {
    model::save_checkpoint(model::make_checkpoint(trainer->model(), {{"train", to_json(cfg)}}), out_dir / "model.tamo");
  }
  return trainer->model();
}

}  // namespace tamo::train
