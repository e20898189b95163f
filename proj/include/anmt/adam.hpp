#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "anmt/param_store.hpp"

namespace anmt {

struct AdamConfig {
  double lr{1e-3};
  double beta1{0.9};
  double beta2{0.999};
  double eps{1e-8};
};

// Per-parameter first and second moment estimates plus the shared step count.
template <class S>
struct AdamState {
  struct Moments {
    std::vector<S> m, v;
  };
  AdamConfig cfg;
  std::map<std::string, Moments> moments;
  std::int64_t t{0};
};

// One Adam update with bias correction over every parameter in the store,
// reading gradients accumulated by backward(). Throws on non-finite
// gradients, naming the offending parameter.
template <class S>
void adam_step(ParameterStore<S>& params, AdamState<S>& state) {
  state.t += 1;
  const double b1 = state.cfg.beta1;
  const double b2 = state.cfg.beta2;
  const double corr1 = 1.0 - std::pow(b1, static_cast<double>(state.t));
  const double corr2 = 1.0 - std::pow(b2, static_cast<double>(state.t));
  for (auto& [name, p] : params) {
    if (!p.requires_grad()) continue;
    auto& slot = state.moments[name];
    if (slot.m.size() != p.size()) {
      slot.m.assign(p.size(), S(0));
      slot.v.assign(p.size(), S(0));
    }
    const std::vector<S>& g = p.grad();
    std::vector<S>& val = p.value();
    for (std::size_t i = 0; i < val.size(); ++i) {
      const double gi = static_cast<double>(g[i]);
      if (!std::isfinite(gi)) {
        throw std::runtime_error("adam: non-finite gradient in parameter '" + name +
                                 "' at element " + std::to_string(i));
      }
      const double m = b1 * static_cast<double>(slot.m[i]) + (1.0 - b1) * gi;
      const double v = b2 * static_cast<double>(slot.v[i]) + (1.0 - b2) * gi * gi;
      slot.m[i] = static_cast<S>(m);
      slot.v[i] = static_cast<S>(v);
      const double mhat = m / corr1;
      const double vhat = v / corr2;
      val[i] = static_cast<S>(static_cast<double>(val[i]) -
                              state.cfg.lr * mhat / (std::sqrt(vhat) + state.cfg.eps));
    }
  }
}

}  // namespace anmt
