#include "tamo/taskgen/taskgen.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>

#include "tamo/core/error.hpp"

namespace tamo::taskgen {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

Eigen::Map<const RowMat> view(const Matrix& m) {
  return {m.data(), static_cast<Eigen::Index>(m.rows()), static_cast<Eigen::Index>(m.cols())};
}
Eigen::Map<RowMat> view(Matrix& m) {
  return {m.data(), static_cast<Eigen::Index>(m.rows()), static_cast<Eigen::Index>(m.cols())};
}

double kernel_value(double d, KernelFamily family, double ell, double s2) {
  const double r = d / ell;
  switch (family) {
    case KernelFamily::rbf:
      return s2 * std::exp(-0.5 * r * r);
    case KernelFamily::matern32: {
      const double a = std::sqrt(3.0) * r;
      return s2 * (1.0 + a) * std::exp(-a);
    }
    case KernelFamily::matern52: {
      const double a = std::sqrt(5.0) * r;
      return s2 * (1.0 + a + 5.0 * r * r / 3.0) * std::exp(-a);
    }
  }
  return 0.0;
}

double truncated_lengthscale(core::RngStream& rng, double hi) {
  while (true) {
    const double l = rng.normal(kLengthscaleMean, kLengthscaleStd);
    if (l >= kLengthscaleLo && l <= hi) return l;
  }
}

Matrix standard_normal(core::RngStream& rng, std::size_t r, std::size_t c) {
  Matrix z = Matrix::matrix(r, c);
  for (auto& v : z.values()) v = rng.normal();
  return z;
}

void round_to_float(Matrix& m) {
  for (auto& v : m.values()) v = static_cast<double>(static_cast<float>(v));
}

}  // namespace

std::string kernel_name(KernelFamily k) {
  switch (k) {
    case KernelFamily::rbf:
      return "rbf";
    case KernelFamily::matern32:
      return "matern32";
    case KernelFamily::matern52:
      return "matern52";
  }
  return "rbf";
}

KernelFamily kernel_from_name(const std::string& name) {
  if (name == "rbf") return KernelFamily::rbf;
  if (name == "matern32") return KernelFamily::matern32;
  if (name == "matern52") return KernelFamily::matern52;
  throw FormatError("unknown kernel family '" + name + "'");
}

TaskSpec sample_task_spec(core::RngStream& rng, const DimsConfig& dims, const PriorConfig& prior) {
  if (dims.d_x.empty() || dims.d_y.empty()) throw ConfigError("dimension sets must be nonempty");
  TaskSpec s;
  s.seed = rng.seed();
  s.d_x = dims.d_x[rng.index(dims.d_x.size())];
  s.d_y = dims.d_y[rng.index(dims.d_y.size())];
  if (s.d_x == 0 || s.d_y == 0) throw ConfigError("dimensions must be positive");
  s.small_lengthscale = prior.small_lengthscale;
  const double hi = prior.small_lengthscale ? kSmallLengthscaleHi : kLengthscaleHi;
  for (std::size_t m = 0; m < s.d_y; ++m) {
    s.kernels.push_back(static_cast<KernelFamily>(rng.index(3)));
    s.sigma.push_back(rng.uniform(0.1, 1.0));
    s.lengthscale.push_back(truncated_lengthscale(rng, hi));
  }
  s.coregion.independent = rng.bernoulli(0.5);
  if (!s.coregion.independent) {
    s.coregion.rank = 1 + rng.index(s.d_y);
    s.coregion.B.resize(s.d_y * s.coregion.rank);
    for (auto& b : s.coregion.B) b = rng.normal();
    s.coregion.v.resize(s.d_y);
    for (auto& v : s.coregion.v) v = std::abs(rng.normal()) + 0.05;
  }
  s.noise_std = prior.noise_std;
  if (prior.quadratic_bowl) {
    s.bowl.enabled = true;
    s.bowl.sign = prior.bowl_sign;
    s.bowl.coef = prior.bowl_coef;
    for (std::size_t m = 0; m < s.d_y; ++m) {
      std::vector<double> opt(s.d_x);
      for (auto& v : opt) v = rng.uniform(kDomainLo, kDomainHi);
      s.bowl.optima.push_back(std::move(opt));
    }
  }
  return s;
}

Matrix kernel_matrix(const Matrix& X1, const Matrix& X2, KernelFamily family, double lengthscale, double sigma) {
  if (!(lengthscale > 0.0) || !(sigma > 0.0)) throw DomainError("kernel hyperparameters must be positive");
  if (X1.cols() != X2.cols()) throw DimensionError("kernel_matrix: input widths differ");
  const std::size_t n = X1.rows(), m = X2.rows(), d = X1.cols();
  const double s2 = sigma * sigma;
  Matrix K = Matrix::matrix(n, m);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < m; ++j) {
      double d2 = 0.0;
      for (std::size_t c = 0; c < d; ++c) {
        const double diff = X1(i, c) - X2(j, c);
        d2 += diff * diff;
      }
      K(i, j) = kernel_value(std::sqrt(d2), family, lengthscale, s2);
    }
  }
  return K;
}

Matrix jittered_cholesky(const Matrix& K, double* used_jitter) {
  if (K.rows() != K.cols()) throw DimensionError("cholesky of a non-square matrix");
  const auto n = static_cast<Eigen::Index>(K.rows());
  for (double jitter = 1e-8; jitter <= 1e-4 * 1.0001; jitter *= 10.0) {
    RowMat A = view(K);
    A.diagonal().array() += jitter;
    Eigen::LLT<RowMat> llt(A);
    if (llt.info() == Eigen::Success) {
      RowMat L = llt.matrixL();
      if (L.allFinite()) {
        if (used_jitter) *used_jitter = jitter;
        Matrix out = Matrix::matrix(n, n);
        view(out) = L;
        return out;
      }
    }
  }
  throw DegenerateTaskError("kernel matrix not positive definite after jitter 1e-4");
}

Matrix sample_gp_values(const TaskSpec& spec, const Matrix& X, core::RngStream& rng) {
  const std::size_t n = X.rows(), dy = spec.d_y;
  if (n == 0) throw SizeError("GP draw needs at least one input");
  if (X.cols() != spec.d_x) throw DimensionError("pool width does not match d_x");
  Matrix Y = Matrix::matrix(n, dy);
  if (spec.coregion.independent) {
    for (std::size_t m = 0; m < dy; ++m) {
      const Matrix L = jittered_cholesky(kernel_matrix(X, spec.kernels[m], spec.lengthscale[m], spec.sigma[m]));
      Eigen::VectorXd z(n);
      for (std::size_t i = 0; i < n; ++i) z[static_cast<Eigen::Index>(i)] = rng.normal();
      const Eigen::VectorXd f = view(L) * z;
      for (std::size_t i = 0; i < n; ++i) Y(i, m) = f[static_cast<Eigen::Index>(i)];
    }
    return Y;
  }
  // Coregionalized: Cov(vec Y) = C kron K with one shared data kernel, drawn as
  // L_K Z L_C^T, which equals the Kronecker-Cholesky draw.
  const std::size_t r = spec.coregion.rank;
  if (spec.coregion.B.size() != dy * r || spec.coregion.v.size() != dy) {
    throw DimensionError("coregionalization parameters do not match d_y");
  }
  Eigen::MatrixXd C = Eigen::MatrixXd::Zero(dy, dy);
  for (std::size_t i = 0; i < dy; ++i) {
    for (std::size_t j = 0; j < dy; ++j) {
      double acc = 0.0;
      for (std::size_t k = 0; k < r; ++k) acc += spec.coregion.B[i * r + k] * spec.coregion.B[j * r + k];
      C(i, j) = acc + (i == j ? spec.coregion.v[i] : 0.0);
    }
  }
  Eigen::LLT<Eigen::MatrixXd> llt_c(C);
  if (llt_c.info() != Eigen::Success) throw DegenerateTaskError("task covariance not positive definite");
  const Eigen::MatrixXd Lc = llt_c.matrixL();
  const Matrix Lk = jittered_cholesky(kernel_matrix(X, spec.kernels[0], spec.lengthscale[0], spec.sigma[0]));
  const Matrix Z = standard_normal(rng, n, dy);
  view(Y) = view(Lk) * view(Z) * Lc.transpose();
  return Y;
}

Matrix normalize_outputs(const Matrix& raw) {
  const std::size_t n = raw.rows(), d = raw.cols();
  Matrix out = Matrix::matrix(n, d);
  for (std::size_t c = 0; c < d; ++c) {
    std::size_t imin = 0, imax = 0;
    for (std::size_t i = 1; i < n; ++i) {
      if (raw(i, c) < raw(imin, c)) imin = i;
      if (raw(i, c) > raw(imax, c)) imax = i;
    }
    const double lo = raw(imin, c), hi = raw(imax, c);
    if (!(hi - lo > 1e-12 * std::max(1.0, std::abs(hi) + std::abs(lo)))) {
      throw DegenerateTaskError("output column " + std::to_string(c) + " is constant");
    }
    for (std::size_t i = 0; i < n; ++i) out(i, c) = std::clamp(2.0 * (raw(i, c) - lo) / (hi - lo) - 1.0, -1.0, 1.0);
    out(imin, c) = -1.0;
    out(imax, c) = 1.0;
  }
  return out;
}

Matrix apply_quadratic_bowl(const Matrix& raw, const Matrix& X, const TaskSpec& spec) {
  if (!spec.bowl.enabled) return raw;
  if (spec.bowl.optima.size() != raw.cols()) throw DimensionError("bowl optima do not match d_y");
  Matrix out = raw;
  for (std::size_t m = 0; m < raw.cols(); ++m) {
    const auto& opt = spec.bowl.optima[m];
    if (opt.size() != X.cols()) throw DimensionError("bowl optimum does not match d_x");
    for (std::size_t i = 0; i < raw.rows(); ++i) {
      double d2 = 0.0;
      for (std::size_t c = 0; c < X.cols(); ++c) d2 += (X(i, c) - opt[c]) * (X(i, c) - opt[c]);
      out(i, m) += spec.bowl.sign * spec.bowl.coef * d2;
    }
  }
  return out;
}

Matrix uniform_pool(core::RngStream& rng, std::size_t n, std::size_t d) {
  Matrix X = Matrix::matrix(n, d);
  for (auto& v : X.values()) v = rng.uniform(kDomainLo, kDomainHi);
  return X;
}

pareto::Point SampledTask::x(std::size_t i) const {
  return pareto::Point(pool_X.data() + i * d_x(), pool_X.data() + (i + 1) * d_x());
}
pareto::Point SampledTask::y(std::size_t i) const {
  return pareto::Point(pool_Y.data() + i * d_y(), pool_Y.data() + (i + 1) * d_y());
}

void finalize_task(SampledTask& task) {
  const std::size_t n = task.size(), d = task.d_y();
  if (n == 0) throw SizeError("task pool is empty");
  task.ref.assign(d, std::numeric_limits<double>::infinity());
  std::vector<pareto::Point> ys;
  ys.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    ys.push_back(task.y(i));
    for (std::size_t c = 0; c < d; ++c) task.ref[c] = std::min(task.ref[c], task.pool_Y(i, c));
  }
  task.hv_star = d <= 3 ? pareto::hypervolume(pareto::pareto_front(ys), task.ref) : 0.0;
  if (d <= 3 && !(task.hv_star > 0.0)) throw DegenerateTaskError("optimal hypervolume is zero");
}

SampledTask sample_task_from_spec(const TaskSpec& spec, core::RngStream& rng, std::size_t pool_size,
                                  const std::string& id) {
  SampledTask t;
  t.id = id;
  t.spec = spec;
  t.pool_X = uniform_pool(rng, pool_size, spec.d_x);
  round_to_float(t.pool_X);
  t.pool_Y = normalize_outputs(apply_quadratic_bowl(sample_gp_values(spec, t.pool_X, rng), t.pool_X, spec));
  round_to_float(t.pool_Y);
  finalize_task(t);
  return t;
}

SampledTask sample_task(core::RngStream& rng, const DimsConfig& dims, const PriorConfig& prior, std::size_t pool_size,
                        const std::string& id) {
  constexpr std::size_t kMaxAttempts = 100;
  for (std::size_t attempt = 0; attempt < kMaxAttempts; ++attempt) {
    const TaskSpec spec = sample_task_spec(rng, dims, prior);
    try {
      SampledTask t = sample_task_from_spec(spec, rng, pool_size, id);
      t.resamples = attempt;
      return t;
    } catch (const DegenerateTaskError&) {
    }
  }
  throw DegenerateTaskError("no valid task after " + std::to_string(kMaxAttempts) + " attempts");
}

PredictionBatch make_prediction_batch(const TaskSpec& spec, core::RngStream& rng, std::size_t total) {
  if (total < 3) throw SizeError("prediction batch needs at least 3 points");
  const std::size_t hi = std::min<std::size_t>(50 * spec.d_x, total - 1);
  Matrix X, Y;
  for (int attempt = 0;; ++attempt) {
    X = uniform_pool(rng, total, spec.d_x);
    try {
      Y = normalize_outputs(apply_quadratic_bowl(sample_gp_values(spec, X, rng), X, spec));
      break;
    } catch (const DegenerateTaskError&) {
      if (attempt >= 20) throw;
    }
  }
  const std::size_t n_c = static_cast<std::size_t>(rng.integer(2, static_cast<long long>(hi)));
  // Points are i.i.d., so the first n_c rows form a uniformly random split.
  PredictionBatch b;
  const std::size_t dx = spec.d_x, dy = spec.d_y, n_p = total - n_c;
  b.context_x = Matrix({n_c, dx}, std::vector<double>(X.data(), X.data() + n_c * dx));
  b.context_y = Matrix({n_c, dy}, std::vector<double>(Y.data(), Y.data() + n_c * dy));
  b.target_x = Matrix({n_p, dx}, std::vector<double>(X.data() + n_c * dx, X.data() + total * dx));
  b.target_y = Matrix({n_p, dy}, std::vector<double>(Y.data() + n_c * dy, Y.data() + total * dy));
  if (spec.noise_std > 0.0) {
    for (auto& v : b.context_y.values()) v += spec.noise_std * rng.normal();
  }
  return b;
}

PolicyBatch make_policy_batch(const SampledTask& task, core::RngStream& rng, std::size_t n_query) {
  if (n_query == 0 || task.size() < n_query) {
    throw SizeError("pool of " + std::to_string(task.size()) + " cannot supply " + std::to_string(n_query) + " queries");
  }
  PolicyBatch b;
  b.query = rng.sample_without_replacement(task.size(), n_query);
  b.initial = rng.index(n_query);
  return b;
}

std::vector<double> observe(const SampledTask& task, std::size_t index, core::RngStream& rng) {
  if (index >= task.size()) throw IndexError("pool index out of range");
  auto y = task.y(index);
  if (task.spec.noise_std > 0.0) {
    for (auto& v : y) v += task.spec.noise_std * rng.normal();
  }
  return y;
}

}  // namespace tamo::taskgen
