#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "tamo/core/graph.hpp"

namespace tamo::core {

/// Which keys each query row may attend to.
class AttentionMask {
 public:
  /// Every query sees every key.
  static AttentionMask full() { return AttentionMask(); }
  /// Query i sees keys [ranges[i].first, ranges[i].second).
  static AttentionMask ranges(std::vector<std::pair<std::size_t, std::size_t>> ranges);
  /// Row-major rows x cols boolean matrix (nonzero = allowed).
  static AttentionMask dense(std::size_t rows, std::size_t cols, std::vector<std::uint8_t> allowed);
  /// Queries and keys share segment boundaries `offsets` (size n_segments + 1);
  /// each row attends inside its own segment.
  static AttentionMask block_diagonal(const std::vector<std::size_t>& offsets);

  /// Compressed per-row key lists for an n x m problem.
  struct Compressed {
    std::vector<std::size_t> row_begin;  // n + 1
    std::vector<std::size_t> keys;
  };
  Compressed compress(std::size_t n, std::size_t m) const;

 private:
  enum class Kind { full, ranges, dense };
  Kind kind_ = Kind::full;
  std::vector<std::pair<std::size_t, std::size_t>> ranges_;
  std::size_t dense_rows_ = 0, dense_cols_ = 0;
  std::vector<std::uint8_t> dense_;
};

// Linear algebra -----------------------------------------------------------
template <typename T> Var<T> matmul(Var<T> a, Var<T> b);
/// x * w + b, with b a 1 x out row broadcast over rows.
template <typename T> Var<T> linear(Var<T> x, Var<T> w, Var<T> b);

// Elementwise ---------------------------------------------------------------
template <typename T> Var<T> add(Var<T> a, Var<T> b);
template <typename T> Var<T> sub(Var<T> a, Var<T> b);
template <typename T> Var<T> mul(Var<T> a, Var<T> b);
/// x + row, row 1 x cols broadcast over rows.
template <typename T> Var<T> add_row(Var<T> x, Var<T> row);
template <typename T> Var<T> scale(Var<T> a, T s);
template <typename T> Var<T> add_scalar(Var<T> a, T s);
template <typename T> Var<T> relu(Var<T> a);
/// Exact GELU, x * Phi(x).
template <typename T> Var<T> gelu(Var<T> a);
template <typename T> Var<T> softplus(Var<T> a);
template <typename T> Var<T> exp(Var<T> a);
template <typename T> Var<T> log(Var<T> a);

// Normalization and reductions ---------------------------------------------
/// Per-row layer normalization with 1 x cols gain and bias.
template <typename T> Var<T> layer_norm(Var<T> x, Var<T> gain, Var<T> bias, T eps = T(1e-5));
template <typename T> Var<T> softmax(Var<T> x, int axis);
template <typename T> Var<T> log_softmax(Var<T> x, int axis);
template <typename T> Var<T> log_sum_exp(Var<T> x, int axis);
template <typename T> Var<T> sum(Var<T> x, int axis);
template <typename T> Var<T> mean(Var<T> x, int axis);
template <typename T> Var<T> sum_all(Var<T> x);
template <typename T> Var<T> mean_all(Var<T> x);
/// Mean of row blocks [offsets[s], offsets[s+1]) -> one row per segment.
template <typename T> Var<T> segment_mean(Var<T> x, const std::vector<std::size_t>& offsets);

// Indexing ------------------------------------------------------------------
template <typename T> Var<T> concat(const std::vector<Var<T>>& parts, int axis);
template <typename T> Var<T> gather_rows(Var<T> x, const std::vector<std::size_t>& rows);
template <typename T> Var<T> slice_rows(Var<T> x, std::size_t begin, std::size_t end);
template <typename T> Var<T> slice_cols(Var<T> x, std::size_t begin, std::size_t end);
template <typename T> Var<T> pick(Var<T> x, std::size_t row, std::size_t col);

// Model-specific fused ops --------------------------------------------------
/// Multi-head scaled dot-product attention over already-projected q (n x d),
/// k and v (m x d). Logits are divided by sqrt(d / heads). Masked keys get
/// exactly zero weight; a row with no allowed key yields zeros.
template <typename T>
Var<T> attention(Var<T> q, Var<T> k, Var<T> v, std::size_t heads, const AttentionMask& mask = AttentionMask::full());

/// Per-row log of a univariate Gaussian mixture density evaluated at y (n x 1):
/// log sum_l exp(log_weights_l) N(y; means_l, scales_l^2). Inputs are n x K.
template <typename T> Var<T> gmm_log_density(Var<T> log_weights, Var<T> means, Var<T> scales, Var<T> y);

/// Attention weights (heads*n x m, head-major) for inspection; not differentiable.
template <typename T>
Tensor<T> attention_weights(const Tensor<T>& q, const Tensor<T>& k, std::size_t heads,
                            const AttentionMask& mask = AttentionMask::full());

template <typename T> Var<T> operator+(Var<T> a, Var<T> b) { return add(a, b); }
template <typename T> Var<T> operator-(Var<T> a, Var<T> b) { return sub(a, b); }
template <typename T> Var<T> operator*(Var<T> a, Var<T> b) { return mul(a, b); }

}  // namespace tamo::core
