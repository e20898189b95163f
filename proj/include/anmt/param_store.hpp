#pragma once

#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "anmt/tensor.hpp"

namespace anmt {

// Named collection of trainable tensors. Iteration order is the sorted name
// order, which makes checkpoints, optimizer sweeps and gradient reports
// deterministic.
template <class S>
class ParameterStore {
 public:
  Tensor<S>& create(const std::string& name, std::vector<std::size_t> shape,
                    bool requires_grad = true) {
    if (params_.count(name)) {
      throw std::invalid_argument("parameter already exists: " + name);
    }
    auto t = Tensor<S>::zeros(std::move(shape), requires_grad);
    return params_.emplace(name, std::move(t)).first->second;
  }

  Tensor<S>& put(const std::string& name, Tensor<S> t) {
    if (params_.count(name)) {
      throw std::invalid_argument("parameter already exists: " + name);
    }
    return params_.emplace(name, std::move(t)).first->second;
  }

  bool has(const std::string& name) const { return params_.count(name) != 0; }

  Tensor<S>& get(const std::string& name) {
    auto it = params_.find(name);
    if (it == params_.end()) {
      throw std::out_of_range("no such parameter: " + name);
    }
    return it->second;
  }

  const Tensor<S>& get(const std::string& name) const {
    auto it = params_.find(name);
    if (it == params_.end()) {
      throw std::out_of_range("no such parameter: " + name);
    }
    return it->second;
  }

  std::size_t count() const { return params_.size(); }

  std::vector<std::string> names() const {
    std::vector<std::string> out;
    out.reserve(params_.size());
    for (const auto& [k, v] : params_) out.push_back(k);
    return out;
  }

  void zero_grads() {
    for (auto& [k, t] : params_) t.zero_grad();
  }

  // Deep copy of values only (fresh nodes, no tape links).
  ParameterStore snapshot_values() const {
    ParameterStore out;
    for (const auto& [k, t] : params_) {
      out.put(k, Tensor<S>::from(t.shape(), t.value(), t.requires_grad()));
    }
    return out;
  }

  // Write the values of a snapshot back into this store's tensors in place,
  // preserving aliases held by models.
  void load_values(const ParameterStore& src) {
    for (auto& [k, t] : params_) {
      const Tensor<S>& s = src.get(k);
      if (s.shape() != t.shape()) {
        throw std::invalid_argument("shape mismatch restoring parameter " + k);
      }
      t.value() = s.value();
    }
  }

  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

 private:
  std::map<std::string, Tensor<S>> params_;
};

}  // namespace anmt
