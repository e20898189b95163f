#pragma once

// Central finite-difference gradient oracle, independent of the reverse-mode
// path it checks: it only re-runs the forward closure at perturbed parameter
// values.

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "anmt/param_store.hpp"

namespace anmt::testsupport {

struct GradCheckResult {
  double max_rel_err{0.0};
  std::string worst_param;
  std::size_t worst_index{0};
  double analytic{0.0};
  double numeric{0.0};
};

// Compares the gradients currently stored in `params` (from a backward pass
// the caller already ran) against central differences of `loss_fn`.
inline GradCheckResult check_gradients(ParameterStore<double>& params,
                                       const std::function<double()>& loss_fn,
                                       double h = 1e-5) {
  GradCheckResult result;
  for (auto& [name, p] : params) {
    if (!p.requires_grad()) continue;
    auto& values = p.value();
    const auto& grad = p.grad();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double saved = values[i];
      values[i] = saved + h;
      const double up = loss_fn();
      values[i] = saved - h;
      const double down = loss_fn();
      values[i] = saved;
      const double numeric = (up - down) / (2.0 * h);
      const double analytic = grad[i];
      const double denom = std::max({std::abs(numeric), std::abs(analytic), 1e-8});
      const double rel = std::abs(numeric - analytic) / denom;
      if (rel > result.max_rel_err) {
        result.max_rel_err = rel;
        result.worst_param = name;
        result.worst_index = i;
        result.analytic = analytic;
        result.numeric = numeric;
      }
    }
  }
  return result;
}

}  // namespace anmt::testsupport
