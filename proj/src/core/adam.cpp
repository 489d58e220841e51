#include "tamo/core/adam.hpp"

#include <cmath>

namespace tamo::core {

template <typename T>
void Adam<T>::ensure_state(const ParamStore<T>& params) {
  if (m_.size() == params.size()) {
    for (std::size_t i = 0; i < params.size(); ++i) {
      if (!m_[i].same_shape(params[i].value)) {
        throw DimensionError("optimizer moment shape mismatch for '" + params[i].name + "'");
      }
    }
    return;
  }
  if (!m_.empty()) throw DimensionError("optimizer state does not match parameter count");
  for (const auto& p : params) {
    m_.emplace_back(p.value.shape(), T{});
    v_.emplace_back(p.value.shape(), T{});
  }
}

template <typename T>
bool Adam<T>::step(ParamStore<T>& params, double rate) {
  ensure_state(params);
  ++steps_;
  for (const auto& p : params) {
    if (!p.grad.all_finite()) {
      ++skipped_;
      params.zero_grad();
      return false;
    }
  }
  ++applied_;
  const double b1 = config_.beta1, b2 = config_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(applied_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(applied_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = params[i];
    auto& m = m_[i];
    auto& v = v_[i];
    for (std::size_t j = 0; j < p.value.size(); ++j) {
      const double g = p.grad[j];
      const double mj = b1 * m[j] + (1.0 - b1) * g;
      const double vj = b2 * v[j] + (1.0 - b2) * g * g;
      m[j] = static_cast<T>(mj);
      v[j] = static_cast<T>(vj);
      const double update = rate * (mj / c1) / (std::sqrt(vj / c2) + config_.eps);
      p.value[j] = static_cast<T>(p.value[j] - update);
    }
    p.grad.fill(T{});
  }
  return true;
}

template <typename T>
void Adam<T>::skip(ParamStore<T>& params) {
  ensure_state(params);
  ++steps_;
  ++skipped_;
  params.zero_grad();
}

template <typename T>
void Adam<T>::restore(std::uint64_t steps, std::uint64_t skipped, std::vector<Tensor<T>> m, std::vector<Tensor<T>> v) {
  if (m.size() != v.size()) throw DimensionError("optimizer moment lists differ in length");
  if (skipped > steps) throw FormatError("optimizer skipped count exceeds step count");
  steps_ = steps;
  skipped_ = skipped;
  applied_ = steps - skipped;
  m_ = std::move(m);
  v_ = std::move(v);
}

template class Adam<float>;
template class Adam<double>;

}  // namespace tamo::core
