#include "tamo/core/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <numbers>

namespace tamo::core {

namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename T>
Eigen::Map<RowMat<T>> as_mat(Tensor<T>& t) {
  return {t.data(), static_cast<Eigen::Index>(t.rows()), static_cast<Eigen::Index>(t.cols())};
}
template <typename T>
Eigen::Map<const RowMat<T>> as_mat(const Tensor<T>& t) {
  return {t.data(), static_cast<Eigen::Index>(t.rows()), static_cast<Eigen::Index>(t.cols())};
}

template <typename T>
void same_graph(Var<T> a, Var<T> b) {
  if (&a.graph() != &b.graph()) throw Error("operands belong to different graphs");
}

template <typename T>
void require_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
  if (!a.same_shape(b)) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " + shape_string(b.shape()));
  }
}

// Groups of a 2-D tensor along an axis: axis 1 reduces within rows, axis 0 within columns.
struct AxisView {
  std::size_t groups, length, stride, group_step;
  std::size_t base(std::size_t g) const { return g * group_step; }
};

AxisView axis_view(std::size_t rows, std::size_t cols, int axis) {
  if (axis == 1) return {rows, cols, 1, cols};
  if (axis == 0) return {cols, rows, cols, 1};
  throw DimensionError("axis must be 0 or 1, got " + std::to_string(axis));
}

template <typename T>
Tensor<T> reduced_shape(std::size_t rows, std::size_t cols, int axis) {
  return axis == 1 ? Tensor<T>::matrix(rows, 1) : Tensor<T>::matrix(1, cols);
}

template <typename T>
T normal_cdf(T x) {
  return T(0.5) * (T(1) + std::erf(x * T(std::numbers::sqrt2 / 2.0)));
}
template <typename T>
T normal_pdf(T x) {
  return std::exp(T(-0.5) * x * x) * T(1.0 / std::sqrt(2.0 * std::numbers::pi));
}

template <typename T, typename F, typename D>
Var<T> unary(Var<T> a, F f, D df) {
  const Tensor<T>& x = a.value();
  Tensor<T> out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = f(x[i]);
  const std::size_t ia = a.id();
  return a.graph().record(std::move(out), {a}, [ia, df](Graph<T>& g, const Tensor<T>& dy) {
    const Tensor<T>& xv = g.value(ia);
    Tensor<T>& dx = g.grad_buffer(ia);
    for (std::size_t i = 0; i < xv.size(); ++i) dx[i] += dy[i] * df(xv[i]);
  });
}

}  // namespace

// AttentionMask ---------------------------------------------------------------

AttentionMask AttentionMask::ranges(std::vector<std::pair<std::size_t, std::size_t>> ranges) {
  AttentionMask m;
  m.kind_ = Kind::ranges;
  m.ranges_ = std::move(ranges);
  return m;
}

AttentionMask AttentionMask::dense(std::size_t rows, std::size_t cols, std::vector<std::uint8_t> allowed) {
  if (allowed.size() != rows * cols) throw DimensionError("dense attention mask size mismatch");
  AttentionMask m;
  m.kind_ = Kind::dense;
  m.dense_rows_ = rows;
  m.dense_cols_ = cols;
  m.dense_ = std::move(allowed);
  return m;
}

AttentionMask AttentionMask::block_diagonal(const std::vector<std::size_t>& offsets) {
  std::vector<std::pair<std::size_t, std::size_t>> r;
  for (std::size_t s = 0; s + 1 < offsets.size(); ++s) {
    if (offsets[s + 1] < offsets[s]) throw DimensionError("block_diagonal offsets must be nondecreasing");
    for (std::size_t i = offsets[s]; i < offsets[s + 1]; ++i) r.emplace_back(offsets[s], offsets[s + 1]);
  }
  return ranges(std::move(r));
}

AttentionMask::Compressed AttentionMask::compress(std::size_t n, std::size_t m) const {
  Compressed c;
  c.row_begin.reserve(n + 1);
  c.row_begin.push_back(0);
  switch (kind_) {
    case Kind::full:
      c.keys.reserve(n * m);
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < m; ++j) c.keys.push_back(j);
        c.row_begin.push_back(c.keys.size());
      }
      break;
    case Kind::ranges:
      if (ranges_.size() != n) {
        throw DimensionError("attention mask has " + std::to_string(ranges_.size()) + " rows, expected " + std::to_string(n));
      }
      for (const auto& [lo, hi] : ranges_) {
        if (lo > hi || hi > m) throw DimensionError("attention key range out of bounds");
        for (std::size_t j = lo; j < hi; ++j) c.keys.push_back(j);
        c.row_begin.push_back(c.keys.size());
      }
      break;
    case Kind::dense:
      if (dense_rows_ != n || dense_cols_ != m) {
        throw DimensionError("attention mask is " + std::to_string(dense_rows_) + "x" + std::to_string(dense_cols_) +
                             ", expected " + std::to_string(n) + "x" + std::to_string(m));
      }
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < m; ++j) {
          if (dense_[i * m + j]) c.keys.push_back(j);
        }
        c.row_begin.push_back(c.keys.size());
      }
      break;
  }
  return c;
}

// Linear algebra ----------------------------------------------------------------

template <typename T>
Var<T> matmul(Var<T> a, Var<T> b) {
  same_graph(a, b);
  const Tensor<T>& A = a.value();
  const Tensor<T>& B = b.value();
  if (A.cols() != B.rows()) {
    throw DimensionError("matmul: inner dimensions " + shape_string(A.shape()) + " x " + shape_string(B.shape()));
  }
  Tensor<T> out = Tensor<T>::matrix(A.rows(), B.cols());
  as_mat(out).noalias() = as_mat(A) * as_mat(B);
  const std::size_t ia = a.id(), ib = b.id();
  return a.graph().record(std::move(out), {a, b}, [ia, ib](Graph<T>& g, const Tensor<T>& dy) {
    if (g.requires_grad(ia)) as_mat(g.grad_buffer(ia)).noalias() += as_mat(dy) * as_mat(g.value(ib)).transpose();
    if (g.requires_grad(ib)) as_mat(g.grad_buffer(ib)).noalias() += as_mat(g.value(ia)).transpose() * as_mat(dy);
  });
}

template <typename T>
Var<T> linear(Var<T> x, Var<T> w, Var<T> b) {
  same_graph(x, w);
  same_graph(x, b);
  const Tensor<T>& X = x.value();
  const Tensor<T>& W = w.value();
  const Tensor<T>& B = b.value();
  if (X.cols() != W.rows() || B.rows() != 1 || B.cols() != W.cols()) {
    throw DimensionError("linear: " + shape_string(X.shape()) + " * " + shape_string(W.shape()) + " + " +
                         shape_string(B.shape()));
  }
  Tensor<T> out = Tensor<T>::matrix(X.rows(), W.cols());
  auto Y = as_mat(out);
  Y.noalias() = as_mat(X) * as_mat(W);
  Y.rowwise() += as_mat(B).row(0);
  const std::size_t ix = x.id(), iw = w.id(), ib = b.id();
  return x.graph().record(std::move(out), {x, w, b}, [ix, iw, ib](Graph<T>& g, const Tensor<T>& dy) {
    const auto dY = as_mat(dy);
    if (g.requires_grad(ix)) as_mat(g.grad_buffer(ix)).noalias() += dY * as_mat(g.value(iw)).transpose();
    if (g.requires_grad(iw)) as_mat(g.grad_buffer(iw)).noalias() += as_mat(g.value(ix)).transpose() * dY;
    if (g.requires_grad(ib)) as_mat(g.grad_buffer(ib)).row(0) += dY.colwise().sum();
  });
}

// Elementwise ----------------------------------------------------------------------

template <typename T>
Var<T> add(Var<T> a, Var<T> b) {
  same_graph(a, b);
  require_same_shape(a.value(), b.value(), "add");
  Tensor<T> out = a.value();
  out += b.value();
  const std::size_t ia = a.id(), ib = b.id();
  return a.graph().record(std::move(out), {a, b}, [ia, ib](Graph<T>& g, const Tensor<T>& dy) {
    if (g.requires_grad(ia)) g.grad_buffer(ia) += dy;
    if (g.requires_grad(ib)) g.grad_buffer(ib) += dy;
  });
}

template <typename T>
Var<T> sub(Var<T> a, Var<T> b) {
  same_graph(a, b);
  require_same_shape(a.value(), b.value(), "sub");
  const Tensor<T>& A = a.value();
  const Tensor<T>& B = b.value();
  Tensor<T> out(A.shape());
  for (std::size_t i = 0; i < A.size(); ++i) out[i] = A[i] - B[i];
  const std::size_t ia = a.id(), ib = b.id();
  return a.graph().record(std::move(out), {a, b}, [ia, ib](Graph<T>& g, const Tensor<T>& dy) {
    if (g.requires_grad(ia)) g.grad_buffer(ia) += dy;
    if (g.requires_grad(ib)) {
      Tensor<T>& db = g.grad_buffer(ib);
      for (std::size_t i = 0; i < dy.size(); ++i) db[i] -= dy[i];
    }
  });
}

template <typename T>
Var<T> mul(Var<T> a, Var<T> b) {
  same_graph(a, b);
  require_same_shape(a.value(), b.value(), "mul");
  const Tensor<T>& A = a.value();
  const Tensor<T>& B = b.value();
  Tensor<T> out(A.shape());
  for (std::size_t i = 0; i < A.size(); ++i) out[i] = A[i] * B[i];
  const std::size_t ia = a.id(), ib = b.id();
  return a.graph().record(std::move(out), {a, b}, [ia, ib](Graph<T>& g, const Tensor<T>& dy) {
    if (g.requires_grad(ia)) {
      const Tensor<T>& Bv = g.value(ib);
      Tensor<T>& da = g.grad_buffer(ia);
      for (std::size_t i = 0; i < dy.size(); ++i) da[i] += dy[i] * Bv[i];
    }
    if (g.requires_grad(ib)) {
      const Tensor<T>& Av = g.value(ia);
      Tensor<T>& db = g.grad_buffer(ib);
      for (std::size_t i = 0; i < dy.size(); ++i) db[i] += dy[i] * Av[i];
    }
  });
}

template <typename T>
Var<T> add_row(Var<T> x, Var<T> row) {
  same_graph(x, row);
  const Tensor<T>& X = x.value();
  const Tensor<T>& R = row.value();
  if (R.rows() != 1 || R.cols() != X.cols()) {
    throw DimensionError("add_row: " + shape_string(X.shape()) + " + " + shape_string(R.shape()));
  }
  Tensor<T> out = X;
  as_mat(out).rowwise() += as_mat(R).row(0);
  const std::size_t ix = x.id(), ir = row.id();
  return x.graph().record(std::move(out), {x, row}, [ix, ir](Graph<T>& g, const Tensor<T>& dy) {
    if (g.requires_grad(ix)) g.grad_buffer(ix) += dy;
    if (g.requires_grad(ir)) as_mat(g.grad_buffer(ir)).row(0) += as_mat(dy).colwise().sum();
  });
}

template <typename T>
Var<T> scale(Var<T> a, T s) {
  return unary(a, [s](T x) { return s * x; }, [s](T) { return s; });
}

template <typename T>
Var<T> add_scalar(Var<T> a, T s) {
  return unary(a, [s](T x) { return x + s; }, [](T) { return T(1); });
}

template <typename T>
Var<T> relu(Var<T> a) {
  return unary(a, [](T x) { return x > T(0) ? x : T(0); }, [](T x) { return x > T(0) ? T(1) : T(0); });
}

template <typename T>
Var<T> gelu(Var<T> a) {
  const Tensor<T>& x = a.value();
  Tensor<T> out(x.shape());
  std::vector<T> cdf(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    cdf[i] = normal_cdf(x[i]);
    out[i] = x[i] * cdf[i];
  }
  const std::size_t ia = a.id();
  return a.graph().record(std::move(out), {a}, [ia, cdf = std::move(cdf)](Graph<T>& g, const Tensor<T>& dy) {
    const Tensor<T>& xv = g.value(ia);
    Tensor<T>& dx = g.grad_buffer(ia);
    for (std::size_t i = 0; i < xv.size(); ++i) dx[i] += dy[i] * (cdf[i] + xv[i] * normal_pdf(xv[i]));
  });
}

template <typename T>
Var<T> softplus(Var<T> a) {
  return unary(
      a, [](T x) { return x > T(0) ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); },
      [](T x) { return x >= T(0) ? T(1) / (T(1) + std::exp(-x)) : std::exp(x) / (T(1) + std::exp(x)); });
}

template <typename T>
Var<T> exp(Var<T> a) {
  return unary(a, [](T x) { return std::exp(x); }, [](T x) { return std::exp(x); });
}

template <typename T>
Var<T> log(Var<T> a) {
  for (T v : a.value().values()) {
    if (!(v > T(0))) throw DomainError("log of a non-positive value");
  }
  return unary(a, [](T x) { return std::log(x); }, [](T x) { return T(1) / x; });
}

// Normalization and reductions ----------------------------------------------------

template <typename T>
Var<T> layer_norm(Var<T> x, Var<T> gain, Var<T> bias, T eps) {
  same_graph(x, gain);
  same_graph(x, bias);
  const Tensor<T>& X = x.value();
  const std::size_t n = X.rows(), d = X.cols();
  if (gain.value().size() != d || bias.value().size() != d) throw DimensionError("layer_norm: gain/bias width mismatch");
  const Tensor<T>& G = gain.value();
  const Tensor<T>& B = bias.value();
  Tensor<T> xhat = Tensor<T>::matrix(n, d);
  std::vector<T> inv_std(n);
  Tensor<T> out = Tensor<T>::matrix(n, d);
  for (std::size_t r = 0; r < n; ++r) {
    const T* row = X.data() + r * d;
    T mu = 0;
    for (std::size_t c = 0; c < d; ++c) mu += row[c];
    mu /= T(d);
    T var = 0;
    for (std::size_t c = 0; c < d; ++c) var += (row[c] - mu) * (row[c] - mu);
    var /= T(d);
    const T inv = T(1) / std::sqrt(var + eps);
    inv_std[r] = inv;
    for (std::size_t c = 0; c < d; ++c) {
      const T h = (row[c] - mu) * inv;
      xhat(r, c) = h;
      out(r, c) = h * G[c] + B[c];
    }
  }
  const std::size_t ix = x.id(), ig = gain.id(), ib = bias.id();
  return x.graph().record(
      std::move(out), {x, gain, bias},
      [ix, ig, ib, n, d, xhat = std::move(xhat), inv_std = std::move(inv_std)](Graph<T>& g, const Tensor<T>& dy) {
        if (g.requires_grad(ix)) {
          const Tensor<T>& Gv = g.value(ig);
          Tensor<T>& dx = g.grad_buffer(ix);
          for (std::size_t r = 0; r < n; ++r) {
            T m1 = 0, m2 = 0;
            for (std::size_t c = 0; c < d; ++c) {
              const T dh = dy(r, c) * Gv[c];
              m1 += dh;
              m2 += dh * xhat(r, c);
            }
            m1 /= T(d);
            m2 /= T(d);
            for (std::size_t c = 0; c < d; ++c) {
              const T dh = dy(r, c) * Gv[c];
              dx(r, c) += inv_std[r] * (dh - m1 - xhat(r, c) * m2);
            }
          }
        }
        if (g.requires_grad(ig)) {
          Tensor<T>& dg = g.grad_buffer(ig);
          for (std::size_t r = 0; r < n; ++r)
            for (std::size_t c = 0; c < d; ++c) dg[c] += dy(r, c) * xhat(r, c);
        }
        if (g.requires_grad(ib)) {
          Tensor<T>& db = g.grad_buffer(ib);
          for (std::size_t r = 0; r < n; ++r)
            for (std::size_t c = 0; c < d; ++c) db[c] += dy(r, c);
        }
      });
}

template <typename T>
Var<T> softmax(Var<T> x, int axis) {
  const Tensor<T>& X = x.value();
  const AxisView av = axis_view(X.rows(), X.cols(), axis);
  Tensor<T> out(X.shape());
  for (std::size_t gi = 0; gi < av.groups; ++gi) {
    const std::size_t b = av.base(gi);
    T mx = -std::numeric_limits<T>::infinity();
    for (std::size_t j = 0; j < av.length; ++j) mx = std::max(mx, X[b + j * av.stride]);
    T s = 0;
    for (std::size_t j = 0; j < av.length; ++j) {
      const T e = std::exp(X[b + j * av.stride] - mx);
      out[b + j * av.stride] = e;
      s += e;
    }
    for (std::size_t j = 0; j < av.length; ++j) out[b + j * av.stride] /= s;
  }
  const std::size_t ix = x.id();
  Tensor<T> y = out;
  return x.graph().record(std::move(out), {x}, [ix, av, y = std::move(y)](Graph<T>& g, const Tensor<T>& dy) {
    Tensor<T>& dx = g.grad_buffer(ix);
    for (std::size_t gi = 0; gi < av.groups; ++gi) {
      const std::size_t b = av.base(gi);
      T dot = 0;
      for (std::size_t j = 0; j < av.length; ++j) dot += dy[b + j * av.stride] * y[b + j * av.stride];
      for (std::size_t j = 0; j < av.length; ++j) {
        const std::size_t k = b + j * av.stride;
        dx[k] += y[k] * (dy[k] - dot);
      }
    }
  });
}

template <typename T>
Var<T> log_softmax(Var<T> x, int axis) {
  const Tensor<T>& X = x.value();
  const AxisView av = axis_view(X.rows(), X.cols(), axis);
  Tensor<T> out(X.shape());
  for (std::size_t gi = 0; gi < av.groups; ++gi) {
    const std::size_t b = av.base(gi);
    T mx = -std::numeric_limits<T>::infinity();
    for (std::size_t j = 0; j < av.length; ++j) mx = std::max(mx, X[b + j * av.stride]);
    T s = 0;
    for (std::size_t j = 0; j < av.length; ++j) s += std::exp(X[b + j * av.stride] - mx);
    const T lse = mx + std::log(s);
    for (std::size_t j = 0; j < av.length; ++j) out[b + j * av.stride] = X[b + j * av.stride] - lse;
  }
  const std::size_t ix = x.id();
  const std::size_t iy = x.graph().node_count();
  return x.graph().record(std::move(out), {x}, [ix, iy, av](Graph<T>& g, const Tensor<T>& dy) {
    const Tensor<T>& y = g.value(iy);
    Tensor<T>& dx = g.grad_buffer(ix);
    for (std::size_t gi = 0; gi < av.groups; ++gi) {
      const std::size_t b = av.base(gi);
      T s = 0;
      for (std::size_t j = 0; j < av.length; ++j) s += dy[b + j * av.stride];
      for (std::size_t j = 0; j < av.length; ++j) {
        const std::size_t k = b + j * av.stride;
        dx[k] += dy[k] - std::exp(y[k]) * s;
      }
    }
  });
}

template <typename T>
Var<T> log_sum_exp(Var<T> x, int axis) {
  const Tensor<T>& X = x.value();
  const AxisView av = axis_view(X.rows(), X.cols(), axis);
  Tensor<T> out = reduced_shape<T>(X.rows(), X.cols(), axis);
  for (std::size_t gi = 0; gi < av.groups; ++gi) {
    const std::size_t b = av.base(gi);
    T mx = -std::numeric_limits<T>::infinity();
    for (std::size_t j = 0; j < av.length; ++j) mx = std::max(mx, X[b + j * av.stride]);
    T s = 0;
    for (std::size_t j = 0; j < av.length; ++j) s += std::exp(X[b + j * av.stride] - mx);
    out[gi] = mx + std::log(s);
  }
  const std::size_t ix = x.id();
  const std::size_t iy = x.graph().node_count();
  return x.graph().record(std::move(out), {x}, [ix, iy, av](Graph<T>& g, const Tensor<T>& dy) {
    const Tensor<T>& Xv = g.value(ix);
    const Tensor<T>& y = g.value(iy);
    Tensor<T>& dx = g.grad_buffer(ix);
    for (std::size_t gi = 0; gi < av.groups; ++gi) {
      const std::size_t b = av.base(gi);
      for (std::size_t j = 0; j < av.length; ++j) {
        const std::size_t k = b + j * av.stride;
        dx[k] += dy[gi] * std::exp(Xv[k] - y[gi]);
      }
    }
  });
}

template <typename T>
Var<T> sum(Var<T> x, int axis) {
  const Tensor<T>& X = x.value();
  const AxisView av = axis_view(X.rows(), X.cols(), axis);
  Tensor<T> out = reduced_shape<T>(X.rows(), X.cols(), axis);
  for (std::size_t gi = 0; gi < av.groups; ++gi) {
    T s = 0;
    for (std::size_t j = 0; j < av.length; ++j) s += X[av.base(gi) + j * av.stride];
    out[gi] = s;
  }
  const std::size_t ix = x.id();
  return x.graph().record(std::move(out), {x}, [ix, av](Graph<T>& g, const Tensor<T>& dy) {
    Tensor<T>& dx = g.grad_buffer(ix);
    for (std::size_t gi = 0; gi < av.groups; ++gi)
      for (std::size_t j = 0; j < av.length; ++j) dx[av.base(gi) + j * av.stride] += dy[gi];
  });
}

template <typename T>
Var<T> mean(Var<T> x, int axis) {
  const std::size_t len = axis == 1 ? x.value().cols() : x.value().rows();
  if (len == 0) throw DimensionError("mean over an empty axis");
  return scale(sum(x, axis), T(1) / T(len));
}

template <typename T>
Var<T> sum_all(Var<T> x) {
  const Tensor<T>& X = x.value();
  T s = 0;
  for (T v : X.values()) s += v;
  const std::size_t ix = x.id();
  return x.graph().record(Tensor<T>::scalar(s), {x}, [ix](Graph<T>& g, const Tensor<T>& dy) {
    Tensor<T>& dx = g.grad_buffer(ix);
    for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += dy[0];
  });
}

template <typename T>
Var<T> mean_all(Var<T> x) {
  if (x.value().size() == 0) throw DimensionError("mean over an empty tensor");
  return scale(sum_all(x), T(1) / T(x.value().size()));
}

template <typename T>
Var<T> segment_mean(Var<T> x, const std::vector<std::size_t>& offsets) {
  const Tensor<T>& X = x.value();
  if (offsets.size() < 2 || offsets.front() != 0 || offsets.back() != X.rows()) {
    throw DimensionError("segment_mean: offsets must span all rows");
  }
  const std::size_t segs = offsets.size() - 1, d = X.cols();
  Tensor<T> out = Tensor<T>::matrix(segs, d);
  for (std::size_t s = 0; s < segs; ++s) {
    const std::size_t lo = offsets[s], hi = offsets[s + 1];
    if (hi <= lo) throw DimensionError("segment_mean: empty segment");
    const T inv = T(1) / T(hi - lo);
    for (std::size_t r = lo; r < hi; ++r)
      for (std::size_t c = 0; c < d; ++c) out(s, c) += X(r, c) * inv;
  }
  const std::size_t ix = x.id();
  return x.graph().record(std::move(out), {x}, [ix, offsets, segs, d](Graph<T>& g, const Tensor<T>& dy) {
    Tensor<T>& dx = g.grad_buffer(ix);
    for (std::size_t s = 0; s < segs; ++s) {
      const std::size_t lo = offsets[s], hi = offsets[s + 1];
      const T inv = T(1) / T(hi - lo);
      for (std::size_t r = lo; r < hi; ++r)
        for (std::size_t c = 0; c < d; ++c) dx(r, c) += dy(s, c) * inv;
    }
  });
}

// Indexing ----------------------------------------------------------------------------

template <typename T>
Var<T> concat(const std::vector<Var<T>>& parts, int axis) {
  if (parts.empty()) throw DimensionError("concat of zero tensors");
  for (const auto& p : parts) same_graph(parts.front(), p);
  std::vector<std::size_t> ids;
  std::vector<std::size_t> extents;
  std::size_t rows = 0, cols = 0;
  if (axis == 0) {
    cols = parts.front().value().cols();
    for (const auto& p : parts) {
      if (p.value().cols() != cols) throw DimensionError("concat(axis 0): column mismatch");
      extents.push_back(p.value().rows());
      rows += p.value().rows();
    }
  } else if (axis == 1) {
    rows = parts.front().value().rows();
    for (const auto& p : parts) {
      if (p.value().rows() != rows) throw DimensionError("concat(axis 1): row mismatch");
      extents.push_back(p.value().cols());
      cols += p.value().cols();
    }
  } else {
    throw DimensionError("concat axis must be 0 or 1");
  }
  Tensor<T> out = Tensor<T>::matrix(rows, cols);
  std::size_t off = 0;
  for (const auto& p : parts) {
    const Tensor<T>& v = p.value();
    ids.push_back(p.id());
    if (axis == 0) {
      std::copy(v.data(), v.data() + v.size(), out.data() + off * cols);
      off += v.rows();
    } else {
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < v.cols(); ++c) out(r, off + c) = v(r, c);
      off += v.cols();
    }
  }
  return parts.front().graph().record(
      std::move(out), parts, [ids = std::move(ids), extents = std::move(extents), axis, rows, cols](Graph<T>& g, const Tensor<T>& dy) {
        std::size_t off = 0;
        for (std::size_t k = 0; k < ids.size(); ++k) {
          if (g.requires_grad(ids[k])) {
            Tensor<T>& dp = g.grad_buffer(ids[k]);
            if (axis == 0) {
              for (std::size_t i = 0; i < dp.size(); ++i) dp[i] += dy[off * cols + i];
            } else {
              for (std::size_t r = 0; r < rows; ++r)
                for (std::size_t c = 0; c < extents[k]; ++c) dp(r, c) += dy(r, off + c);
            }
          }
          off += extents[k];
        }
      });
}

template <typename T>
Var<T> gather_rows(Var<T> x, const std::vector<std::size_t>& rows) {
  const Tensor<T>& X = x.value();
  const std::size_t d = X.cols();
  Tensor<T> out = Tensor<T>::matrix(rows.size(), d);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] >= X.rows()) throw IndexError("gather_rows: row " + std::to_string(rows[i]) + " out of range");
    std::copy(X.data() + rows[i] * d, X.data() + (rows[i] + 1) * d, out.data() + i * d);
  }
  const std::size_t ix = x.id();
  return x.graph().record(std::move(out), {x}, [ix, rows, d](Graph<T>& g, const Tensor<T>& dy) {
    Tensor<T>& dx = g.grad_buffer(ix);
    for (std::size_t i = 0; i < rows.size(); ++i)
      for (std::size_t c = 0; c < d; ++c) dx(rows[i], c) += dy(i, c);
  });
}

template <typename T>
Var<T> slice_rows(Var<T> x, std::size_t begin, std::size_t end) {
  const Tensor<T>& X = x.value();
  if (begin > end || end > X.rows()) throw IndexError("slice_rows out of range");
  const std::size_t d = X.cols();
  Tensor<T> out = Tensor<T>::matrix(end - begin, d);
  std::copy(X.data() + begin * d, X.data() + end * d, out.data());
  const std::size_t ix = x.id();
  return x.graph().record(std::move(out), {x}, [ix, begin, d](Graph<T>& g, const Tensor<T>& dy) {
    Tensor<T>& dx = g.grad_buffer(ix);
    for (std::size_t i = 0; i < dy.size(); ++i) dx[begin * d + i] += dy[i];
  });
}

template <typename T>
Var<T> slice_cols(Var<T> x, std::size_t begin, std::size_t end) {
  const Tensor<T>& X = x.value();
  if (begin > end || end > X.cols()) throw IndexError("slice_cols out of range");
  const std::size_t n = X.rows(), w = end - begin;
  Tensor<T> out = Tensor<T>::matrix(n, w);
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < w; ++c) out(r, c) = X(r, begin + c);
  const std::size_t ix = x.id();
  return x.graph().record(std::move(out), {x}, [ix, begin, n, w](Graph<T>& g, const Tensor<T>& dy) {
    Tensor<T>& dx = g.grad_buffer(ix);
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t c = 0; c < w; ++c) dx(r, begin + c) += dy(r, c);
  });
}

template <typename T>
Var<T> pick(Var<T> x, std::size_t row, std::size_t col) {
  const Tensor<T>& X = x.value();
  if (row >= X.rows() || col >= X.cols()) throw IndexError("pick out of range");
  const std::size_t ix = x.id();
  return x.graph().record(Tensor<T>::scalar(X(row, col)), {x}, [ix, row, col](Graph<T>& g, const Tensor<T>& dy) {
    g.grad_buffer(ix)(row, col) += dy[0];
  });
}

// Fused ops ------------------------------------------------------------------------------

namespace {

// Maximal runs of rows that share one contiguous key range. Empty when some
// row's keys are not contiguous.
struct KeyBlock {
  std::size_t r0, r1, k0, k1;
};

std::vector<KeyBlock> key_blocks(const AttentionMask::Compressed& c, std::size_t n) {
  std::vector<KeyBlock> out;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t lo = c.row_begin[i], hi = c.row_begin[i + 1];
    if (lo == hi) continue;
    for (std::size_t e = lo + 1; e < hi; ++e) {
      if (c.keys[e] != c.keys[e - 1] + 1) return {};
    }
    const std::size_t k0 = c.keys[lo], k1 = c.keys[hi - 1] + 1;
    if (!out.empty() && out.back().r1 == i && out.back().k0 == k0 && out.back().k1 == k1) {
      ++out.back().r1;
    } else {
      out.push_back({i, i + 1, k0, k1});
    }
  }
  return out;
}

// Blocks with fewer score entries than this use the scalar loops.
constexpr std::size_t kGemmBlockMin = 64;

template <typename T>
using StridedMap = Eigen::Map<RowMat<T>, 0, Eigen::OuterStride<>>;
template <typename T>
using ConstStridedMap = Eigen::Map<const RowMat<T>, 0, Eigen::OuterStride<>>;

template <typename T>
ConstStridedMap<T> head_block(const T* base, std::size_t row0, std::size_t rows, std::size_t col0, std::size_t cols,
                              std::size_t stride) {
  return {base + row0 * stride + col0, static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols),
          Eigen::OuterStride<>(static_cast<Eigen::Index>(stride))};
}
template <typename T>
StridedMap<T> head_block(T* base, std::size_t row0, std::size_t rows, std::size_t col0, std::size_t cols,
                         std::size_t stride) {
  return {base + row0 * stride + col0, static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols),
          Eigen::OuterStride<>(static_cast<Eigen::Index>(stride))};
}

}  // namespace

template <typename T>
Var<T> attention(Var<T> q, Var<T> k, Var<T> v, std::size_t heads, const AttentionMask& mask) {
  same_graph(q, k);
  same_graph(q, v);
  const Tensor<T>& Q = q.value();
  const Tensor<T>& K = k.value();
  const Tensor<T>& V = v.value();
  const std::size_t n = Q.rows(), m = K.rows(), d = Q.cols(), dv = V.cols();
  if (heads == 0 || K.cols() != d || V.rows() != m || d % heads != 0 || dv % heads != 0) {
    throw DimensionError("attention: q " + shape_string(Q.shape()) + ", k " + shape_string(K.shape()) + ", v " +
                         shape_string(V.shape()) + ", heads " + std::to_string(heads));
  }
  const std::size_t dh = d / heads, dvh = dv / heads;
  const T sc = T(1) / std::sqrt(T(dh));
  auto csr = std::make_shared<const AttentionMask::Compressed>(mask.compress(n, m));
  auto blocks = std::make_shared<const std::vector<KeyBlock>>(key_blocks(*csr, n));
  const std::size_t nnz = csr->keys.size();
  auto probs = std::make_shared<std::vector<T, AlignedAllocator<T>>>(heads * nnz);
  Tensor<T> out = Tensor<T>::matrix(n, dv);

  auto rows_forward = [&](std::size_t h, std::size_t r0, std::size_t r1) {
    T* P = probs->data() + h * nnz;
    for (std::size_t i = r0; i < r1; ++i) {
      const std::size_t lo = csr->row_begin[i], hi = csr->row_begin[i + 1];
      if (lo == hi) continue;
      const T* qi = Q.data() + i * d + h * dh;
      T mx = -std::numeric_limits<T>::infinity();
      for (std::size_t e = lo; e < hi; ++e) {
        const T* kj = K.data() + csr->keys[e] * d + h * dh;
        T s = 0;
        for (std::size_t c = 0; c < dh; ++c) s += qi[c] * kj[c];
        s *= sc;
        P[e] = s;
        mx = std::max(mx, s);
      }
      T z = 0;
      for (std::size_t e = lo; e < hi; ++e) {
        P[e] = std::exp(P[e] - mx);
        z += P[e];
      }
      T* oi = out.data() + i * dv + h * dvh;
      for (std::size_t e = lo; e < hi; ++e) {
        P[e] /= z;
        const T* vj = V.data() + csr->keys[e] * dv + h * dvh;
        for (std::size_t c = 0; c < dvh; ++c) oi[c] += P[e] * vj[c];
      }
    }
  };

  for (std::size_t h = 0; h < heads; ++h) {
    if (blocks->empty()) {
      rows_forward(h, 0, n);
      continue;
    }
    for (const auto& b : *blocks) {
      const std::size_t nb = b.r1 - b.r0, mb = b.k1 - b.k0;
      if (nb * mb < kGemmBlockMin) {
        rows_forward(h, b.r0, b.r1);
        continue;
      }
      auto Qb = head_block(Q.data(), b.r0, nb, h * dh, dh, d);
      auto Kb = head_block(K.data(), b.k0, mb, h * dh, dh, d);
      auto Vb = head_block(V.data(), b.k0, mb, h * dvh, dvh, dv);
      Eigen::Map<RowMat<T>> Pb(probs->data() + h * nnz + csr->row_begin[b.r0], static_cast<Eigen::Index>(nb),
                               static_cast<Eigen::Index>(mb));
      Pb.noalias() = (Qb * Kb.transpose()) * sc;
      for (Eigen::Index r = 0; r < Pb.rows(); ++r) {
        auto row = Pb.row(r).array();
        row = (row - row.maxCoeff()).exp();
        row /= row.sum();
      }
      auto Ob = head_block(out.data(), b.r0, nb, h * dvh, dvh, dv);
      Ob.noalias() += Pb * Vb;
    }
  }

  const std::size_t iq = q.id(), ik = k.id(), iv = v.id();
  return q.graph().record(
      std::move(out), {q, k, v},
      [iq, ik, iv, csr, blocks, probs, heads, n, d, dv, dh, dvh, sc, nnz](Graph<T>& g, const Tensor<T>& dy) {
        const Tensor<T>& Qv = g.value(iq);
        const Tensor<T>& Kv = g.value(ik);
        const Tensor<T>& Vv = g.value(iv);
        const bool gq = g.requires_grad(iq), gk = g.requires_grad(ik), gv = g.requires_grad(iv);
        Tensor<T>* dQ = gq ? &g.grad_buffer(iq) : nullptr;
        Tensor<T>* dK = gk ? &g.grad_buffer(ik) : nullptr;
        Tensor<T>* dV = gv ? &g.grad_buffer(iv) : nullptr;
        std::vector<T> ds;

        auto rows_backward = [&](std::size_t h, std::size_t r0, std::size_t r1) {
          const T* P = probs->data() + h * nnz;
          for (std::size_t i = r0; i < r1; ++i) {
            const std::size_t lo = csr->row_begin[i], hi = csr->row_begin[i + 1];
            if (lo == hi) continue;
            const T* dyi = dy.data() + i * dv + h * dvh;
            ds.assign(hi - lo, T(0));
            T dot = 0;
            for (std::size_t e = lo; e < hi; ++e) {
              const std::size_t j = csr->keys[e];
              const T* vj = Vv.data() + j * dv + h * dvh;
              T dp = 0;
              for (std::size_t c = 0; c < dvh; ++c) dp += dyi[c] * vj[c];
              ds[e - lo] = dp;
              dot += P[e] * dp;
              if (dV) {
                T* dvj = dV->data() + j * dv + h * dvh;
                for (std::size_t c = 0; c < dvh; ++c) dvj[c] += P[e] * dyi[c];
              }
            }
            const T* qi = Qv.data() + i * d + h * dh;
            T* dqi = dQ ? dQ->data() + i * d + h * dh : nullptr;
            for (std::size_t e = lo; e < hi; ++e) {
              const std::size_t j = csr->keys[e];
              const T s = sc * P[e] * (ds[e - lo] - dot);
              const T* kj = Kv.data() + j * d + h * dh;
              if (dqi) {
                for (std::size_t c = 0; c < dh; ++c) dqi[c] += s * kj[c];
              }
              if (dK) {
                T* dkj = dK->data() + j * d + h * dh;
                for (std::size_t c = 0; c < dh; ++c) dkj[c] += s * qi[c];
              }
            }
          }
        };

        RowMat<T> dP;
        for (std::size_t h = 0; h < heads; ++h) {
          if (blocks->empty()) {
            rows_backward(h, 0, n);
            continue;
          }
          for (const auto& b : *blocks) {
            const std::size_t nb = b.r1 - b.r0, mb = b.k1 - b.k0;
            if (nb * mb < kGemmBlockMin) {
              rows_backward(h, b.r0, b.r1);
              continue;
            }
            Eigen::Map<const RowMat<T>> Pb(probs->data() + h * nnz + csr->row_begin[b.r0],
                                           static_cast<Eigen::Index>(nb), static_cast<Eigen::Index>(mb));
            auto dOb = head_block(dy.data(), b.r0, nb, h * dvh, dvh, dv);
            auto Vb = head_block(Vv.data(), b.k0, mb, h * dvh, dvh, dv);
            dP.noalias() = dOb * Vb.transpose();
            if (dV) head_block(dV->data(), b.k0, mb, h * dvh, dvh, dv).noalias() += Pb.transpose() * dOb;
            const Eigen::Array<T, Eigen::Dynamic, 1> rowdot = (dP.array() * Pb.array()).rowwise().sum();
            dP = ((dP.array().colwise() - rowdot) * Pb.array() * sc).matrix();
            if (dQ) {
              head_block(dQ->data(), b.r0, nb, h * dh, dh, d).noalias() +=
                  dP * head_block(Kv.data(), b.k0, mb, h * dh, dh, d);
            }
            if (dK) {
              head_block(dK->data(), b.k0, mb, h * dh, dh, d).noalias() +=
                  dP.transpose() * head_block(Qv.data(), b.r0, nb, h * dh, dh, d);
            }
          }
        }
      });
}

template <typename T>
Tensor<T> attention_weights(const Tensor<T>& q, const Tensor<T>& k, std::size_t heads, const AttentionMask& mask) {
  const std::size_t n = q.rows(), m = k.rows(), d = q.cols();
  if (heads == 0 || k.cols() != d || d % heads != 0) throw DimensionError("attention_weights: shape mismatch");
  const std::size_t dh = d / heads;
  const T sc = T(1) / std::sqrt(T(dh));
  const auto csr = mask.compress(n, m);
  Tensor<T> w = Tensor<T>::matrix(heads * n, m);
  for (std::size_t h = 0; h < heads; ++h) {
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t lo = csr.row_begin[i], hi = csr.row_begin[i + 1];
      if (lo == hi) continue;
      T mx = -std::numeric_limits<T>::infinity();
      std::vector<T> s(hi - lo);
      for (std::size_t e = lo; e < hi; ++e) {
        T acc = 0;
        for (std::size_t c = 0; c < dh; ++c) acc += q(i, h * dh + c) * k(csr.keys[e], h * dh + c);
        s[e - lo] = acc * sc;
        mx = std::max(mx, s[e - lo]);
      }
      T z = 0;
      for (auto& v : s) {
        v = std::exp(v - mx);
        z += v;
      }
      for (std::size_t e = lo; e < hi; ++e) w(h * n + i, csr.keys[e]) = s[e - lo] / z;
    }
  }
  return w;
}

template <typename T>
Var<T> gmm_log_density(Var<T> log_weights, Var<T> means, Var<T> scales, Var<T> y) {
  same_graph(log_weights, means);
  same_graph(log_weights, scales);
  same_graph(log_weights, y);
  const Tensor<T>& LW = log_weights.value();
  const Tensor<T>& MU = means.value();
  const Tensor<T>& SG = scales.value();
  const Tensor<T>& Y = y.value();
  const std::size_t n = LW.rows(), K = LW.cols();
  if (!MU.same_shape(LW) || !SG.same_shape(LW) || Y.rows() != n || Y.cols() != 1) {
    throw DimensionError("gmm_log_density: inconsistent shapes");
  }
  for (T s : SG.values()) {
    if (!(s > T(0))) throw DomainError("gmm_log_density: scales must be strictly positive");
  }
  const T half_log_2pi = T(0.5 * std::log(2.0 * std::numbers::pi));
  Tensor<T> out = Tensor<T>::matrix(n, 1);
  Tensor<T> resp = Tensor<T>::matrix(n, K);
  for (std::size_t i = 0; i < n; ++i) {
    T mx = -std::numeric_limits<T>::infinity();
    for (std::size_t l = 0; l < K; ++l) {
      const T z = (Y[i] - MU(i, l)) / SG(i, l);
      const T a = LW(i, l) - T(0.5) * z * z - std::log(SG(i, l)) - half_log_2pi;
      resp(i, l) = a;
      mx = std::max(mx, a);
    }
    T s = 0;
    for (std::size_t l = 0; l < K; ++l) s += std::exp(resp(i, l) - mx);
    const T lse = mx + std::log(s);
    out[i] = lse;
    for (std::size_t l = 0; l < K; ++l) resp(i, l) = std::exp(resp(i, l) - lse);
  }
  const std::size_t iw = log_weights.id(), im = means.id(), is = scales.id(), iy = y.id();
  return log_weights.graph().record(
      std::move(out), {log_weights, means, scales, y},
      [iw, im, is, iy, n, K, resp = std::move(resp)](Graph<T>& g, const Tensor<T>& dy) {
        const Tensor<T>& MUv = g.value(im);
        const Tensor<T>& SGv = g.value(is);
        const Tensor<T>& Yv = g.value(iy);
        Tensor<T>* dw = g.requires_grad(iw) ? &g.grad_buffer(iw) : nullptr;
        Tensor<T>* dm = g.requires_grad(im) ? &g.grad_buffer(im) : nullptr;
        Tensor<T>* dsg = g.requires_grad(is) ? &g.grad_buffer(is) : nullptr;
        Tensor<T>* dyy = g.requires_grad(iy) ? &g.grad_buffer(iy) : nullptr;
        for (std::size_t i = 0; i < n; ++i) {
          const T gi = dy[i];
          for (std::size_t l = 0; l < K; ++l) {
            const T r = resp(i, l) * gi;
            const T sgm = SGv(i, l);
            const T z = (Yv[i] - MUv(i, l)) / sgm;
            if (dw) (*dw)(i, l) += r;
            if (dm) (*dm)(i, l) += r * z / sgm;
            if (dsg) (*dsg)(i, l) += r * (z * z - T(1)) / sgm;
            if (dyy) (*dyy)[i] -= r * z / sgm;
          }
        }
      });
}

#define TAMO_INSTANTIATE_OPS(T)                                                                        \
  template Var<T> matmul<T>(Var<T>, Var<T>);                                                           \
  template Var<T> linear<T>(Var<T>, Var<T>, Var<T>);                                                   \
  template Var<T> add<T>(Var<T>, Var<T>);                                                              \
  template Var<T> sub<T>(Var<T>, Var<T>);                                                              \
  template Var<T> mul<T>(Var<T>, Var<T>);                                                              \
  template Var<T> add_row<T>(Var<T>, Var<T>);                                                          \
  template Var<T> scale<T>(Var<T>, T);                                                                 \
  template Var<T> add_scalar<T>(Var<T>, T);                                                            \
  template Var<T> relu<T>(Var<T>);                                                                     \
  template Var<T> gelu<T>(Var<T>);                                                                     \
  template Var<T> softplus<T>(Var<T>);                                                                 \
  template Var<T> exp<T>(Var<T>);                                                                      \
  template Var<T> log<T>(Var<T>);                                                                      \
  template Var<T> layer_norm<T>(Var<T>, Var<T>, Var<T>, T);                                            \
  template Var<T> softmax<T>(Var<T>, int);                                                             \
  template Var<T> log_softmax<T>(Var<T>, int);                                                         \
  template Var<T> log_sum_exp<T>(Var<T>, int);                                                         \
  template Var<T> sum<T>(Var<T>, int);                                                                 \
  template Var<T> mean<T>(Var<T>, int);                                                                \
  template Var<T> sum_all<T>(Var<T>);                                                                  \
  template Var<T> mean_all<T>(Var<T>);                                                                 \
  template Var<T> segment_mean<T>(Var<T>, const std::vector<std::size_t>&);                            \
  template Var<T> concat<T>(const std::vector<Var<T>>&, int);                                          \
  template Var<T> gather_rows<T>(Var<T>, const std::vector<std::size_t>&);                             \
  template Var<T> slice_rows<T>(Var<T>, std::size_t, std::size_t);                                    \
  template Var<T> slice_cols<T>(Var<T>, std::size_t, std::size_t);                                    \
  template Var<T> pick<T>(Var<T>, std::size_t, std::size_t);                                          \
  template Var<T> attention<T>(Var<T>, Var<T>, Var<T>, std::size_t, const AttentionMask&);             \
  template Var<T> gmm_log_density<T>(Var<T>, Var<T>, Var<T>, Var<T>);                                  \
  template Tensor<T> attention_weights<T>(const Tensor<T>&, const Tensor<T>&, std::size_t, const AttentionMask&);

TAMO_INSTANTIATE_OPS(float)
TAMO_INSTANTIATE_OPS(double)

}  // namespace tamo::core
