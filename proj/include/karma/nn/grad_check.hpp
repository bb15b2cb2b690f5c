#pragma once

#include <algorithm>

#include "karma/nn/core.hpp"

namespace karma::nn {

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::string worst_parameter;
  Eigen::Index worst_index = -1;
  std::size_t checked = 0;
};

/// Compares analytic gradients with central differences.
///
/// `loss(bool with_backward)` must evaluate a scalar from the current
/// parameter values and, when asked, accumulate analytic gradients into the
/// (already zeroed) `grad` slots. The relative error of an entry is
/// |a - n| / max(|a|, |n|, floor); the floor keeps entries that are zero in
/// both from dominating.
template <typename Scalar, typename LossFn>
GradCheckResult grad_check(LossFn&& loss, const ParamList<Scalar>& params, double epsilon = 1e-6,
                           double floor = 1e-7) {
  zero_grads(params);
  loss(true);
  std::vector<Matrix<Scalar>> analytic;
  for (auto* p : params) analytic.push_back(p->grad);

  GradCheckResult result;
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto& value = params[k]->value;
    for (Eigen::Index i = 0; i < value.size(); ++i) {
      const Scalar saved = value.data()[i];
      value.data()[i] = static_cast<Scalar>(static_cast<double>(saved) + epsilon);
      const double up = loss(false);
      value.data()[i] = static_cast<Scalar>(static_cast<double>(saved) - epsilon);
      const double down = loss(false);
      value.data()[i] = saved;
      const double numeric = (up - down) / (2.0 * epsilon);
      const double a = static_cast<double>(analytic[k].data()[i]);
      const double denom = std::max({std::abs(a), std::abs(numeric), floor});
      const double rel = std::abs(a - numeric) / denom;
      ++result.checked;
      if (rel > result.max_relative_error) {
        result.max_relative_error = rel;
        result.worst_parameter = params[k]->name;
        result.worst_index = i;
      }
    }
  }
  return result;
}

}  // namespace karma::nn
