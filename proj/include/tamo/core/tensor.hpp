#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <new>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "tamo/core/error.hpp"

namespace tamo::core {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_string(const Shape& shape);

enum class DType : std::uint8_t { f32 = 0, f64 = 1 };

/// Fixed 64-byte alignment keeps vectorized kernels, and so rounding, identical
/// from run to run.
template <typename T>
struct AlignedAllocator {
  using value_type = T;
  static constexpr std::align_val_t alignment{64};

  AlignedAllocator() = default;
  template <typename U>
  AlignedAllocator(const AlignedAllocator<U>&) noexcept {}

  T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), alignment)); }
  void deallocate(T* p, std::size_t) noexcept { ::operator delete(p, alignment); }
  template <typename U>
  bool operator==(const AlignedAllocator<U>&) const noexcept {
    return true;
  }
};

template <typename T>
constexpr DType dtype_of();
template <>
constexpr DType dtype_of<float>() { return DType::f32; }
template <>
constexpr DType dtype_of<double>() { return DType::f64; }

/// Dense row-major tensor. Graph operations work on rank-2 tensors; rank-0/1
/// tensors are viewed as 1x1 / 1xn.
template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;
  explicit Tensor(Shape shape, T fill = T{}) : shape_(std::move(shape)), data_(shape_size(shape_), fill) {}
  Tensor(Shape shape, const std::vector<T>& data) : shape_(std::move(shape)), data_(data.begin(), data.end()) {
    if (data_.size() != shape_size(shape_)) {
      throw DimensionError("tensor data length " + std::to_string(data_.size()) + " does not match shape " +
                           shape_string(shape_));
    }
  }

  static Tensor matrix(std::size_t rows, std::size_t cols, T fill = T{}) { return Tensor({rows, cols}, fill); }
  static Tensor scalar(T v) { return Tensor({1, 1}, std::vector<T>{v}); }
  static Tensor column(std::vector<T> v) {
    const std::size_t n = v.size();
    return Tensor({n, 1}, std::move(v));
  }
  static Tensor row(std::vector<T> v) {
    const std::size_t n = v.size();
    return Tensor({1, n}, std::move(v));
  }

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  std::size_t rows() const noexcept {
    if (shape_.size() < 2) return 1;
    return shape_[0];
  }
  std::size_t cols() const noexcept {
    if (shape_.empty()) return 1;
    return shape_.back();
  }

  T* data() noexcept { return data_.data(); }
  const T* data() const noexcept { return data_.data(); }
  std::span<T> values() noexcept { return data_; }
  std::span<const T> values() const noexcept { return data_; }
  std::vector<T> vector() const { return {data_.begin(), data_.end()}; }

  T& operator[](std::size_t i) noexcept { return data_[i]; }
  const T& operator[](std::size_t i) const noexcept { return data_[i]; }
  T& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols() + c]; }
  const T& operator()(std::size_t r, std::size_t c) const noexcept { return data_[r * cols() + c]; }

  T item() const {
    if (data_.size() != 1) throw DimensionError("item() on tensor of shape " + shape_string(shape_));
    return data_[0];
  }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

  bool same_shape(const Tensor& other) const noexcept { return rows() == other.rows() && cols() == other.cols(); }

  bool all_finite() const noexcept {
    for (T v : data_) {
      if (!std::isfinite(v)) return false;
    }
    return true;
  }

  template <typename U>
  Tensor<U> cast() const {
    std::vector<U> out(data_.begin(), data_.end());
    return Tensor<U>(shape_, std::move(out));
  }

  Tensor& operator+=(const Tensor& other) {
    if (other.size() != size()) throw DimensionError("tensor += size mismatch");
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
    return *this;
  }

  bool operator==(const Tensor& other) const = default;

 private:
  Shape shape_;
  std::vector<T, AlignedAllocator<T>> data_;
};

using TensorF = Tensor<float>;
using TensorD = Tensor<double>;
using Matrix = Tensor<double>;

}  // namespace tamo::core
