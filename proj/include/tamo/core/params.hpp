#pragma once

#include <deque>
#include <string>
#include <unordered_map>

#include "tamo/core/tensor.hpp"

namespace tamo::core {

template <typename T>
struct Parameter {
  std::string name;
  Tensor<T> value;
  Tensor<T> grad;  // same shape as value, zero-initialized
};

/// Ordered collection of uniquely named parameters. Addresses are stable for
/// the lifetime of the store.
template <typename T>
class ParamStore {
 public:
  ParamStore() = default;
  ParamStore(const ParamStore&) = default;
  ParamStore& operator=(const ParamStore&) = default;
  ParamStore(ParamStore&&) noexcept = default;
  ParamStore& operator=(ParamStore&&) noexcept = default;

  Parameter<T>& add(const std::string& name, Tensor<T> init) {
    if (index_.count(name)) throw ConfigError("duplicate parameter name '" + name + "'");
    Tensor<T> grad(init.shape(), T{});
    params_.push_back(Parameter<T>{name, std::move(init), std::move(grad)});
    index_.emplace(name, params_.size() - 1);
    return params_.back();
  }

  bool contains(const std::string& name) const { return index_.count(name) != 0; }

  Parameter<T>& get(const std::string& name) {
    auto it = index_.find(name);
    if (it == index_.end()) throw IndexError("unknown parameter '" + name + "'");
    return params_[it->second];
  }
  const Parameter<T>& get(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw IndexError("unknown parameter '" + name + "'");
    return params_[it->second];
  }

  std::size_t size() const noexcept { return params_.size(); }
  Parameter<T>& operator[](std::size_t i) { return params_[i]; }
  const Parameter<T>& operator[](std::size_t i) const { return params_[i]; }
  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

  std::size_t scalar_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p.value.size();
    return n;
  }

  void zero_grad() {
    for (auto& p : params_) p.grad.fill(T{});
  }

  template <typename U>
  ParamStore<U> cast() const {
    ParamStore<U> out;
    for (const auto& p : params_) {
      auto& q = out.add(p.name, p.value.template cast<U>());
      q.grad = p.grad.template cast<U>();
    }
    return out;
  }

 private:
  std::deque<Parameter<T>> params_;
  std::unordered_map<std::string, std::size_t> index_;
};

}  // namespace tamo::core
