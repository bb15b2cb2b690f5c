#pragma once

#include <algorithm>

#include "karma/nn/core.hpp"

namespace karma::nn {

template <typename Scalar>
struct LossResult {
  double value = 0.0;
  Matrix<Scalar> grad;  // d value / d input
};

/// Row-wise softmax in double precision.
template <typename Scalar>
Matrix<Scalar> softmax_rows(const Matrix<Scalar>& logits) {
  Matrix<Scalar> out(logits.rows(), logits.cols());
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const double top = static_cast<double>(logits.row(i).maxCoeff());
    double sum = 0.0;
    for (Eigen::Index j = 0; j < logits.cols(); ++j)
      sum += std::exp(static_cast<double>(logits(i, j)) - top);
    for (Eigen::Index j = 0; j < logits.cols(); ++j)
      out(i, j) = static_cast<Scalar>(std::exp(static_cast<double>(logits(i, j)) - top) / sum);
  }
  return out;
}

/// Mean over rows of -sum_j target_ij * log softmax(logits)_ij. Each target
/// row must be a probability distribution.
template <typename Scalar>
LossResult<Scalar> cross_entropy(const Matrix<Scalar>& logits, const Matrix<Scalar>& targets) {
  if (logits.rows() != targets.rows() || logits.cols() != targets.cols())
    throw Error("cross_entropy: logits and targets differ in shape");
  if (logits.rows() == 0) throw Error("cross_entropy: empty batch");
  ensure_finite(logits, "cross_entropy logits");
  const Eigen::Index n = logits.rows();
  LossResult<Scalar> out;
  out.grad.resize(n, logits.cols());
  double total = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    double mass = 0.0;
    for (Eigen::Index j = 0; j < targets.cols(); ++j) {
      const double t = static_cast<double>(targets(i, j));
      if (t < 0.0 || !std::isfinite(t))
        throw Error("cross_entropy: target row " + std::to_string(i) + " is not a distribution");
      mass += t;
    }
    if (std::abs(mass - 1.0) > 1e-5)
      throw Error("cross_entropy: target row " + std::to_string(i) + " does not sum to 1");
    const double top = static_cast<double>(logits.row(i).maxCoeff());
    double sum = 0.0;
    for (Eigen::Index j = 0; j < logits.cols(); ++j)
      sum += std::exp(static_cast<double>(logits(i, j)) - top);
    const double log_norm = top + std::log(sum);
    for (Eigen::Index j = 0; j < logits.cols(); ++j) {
      const double logp = static_cast<double>(logits(i, j)) - log_norm;
      const double t = static_cast<double>(targets(i, j));
      if (t > 0.0) total -= t * logp;
      out.grad(i, j) = static_cast<Scalar>((std::exp(logp) - t) / static_cast<double>(n));
    }
  }
  out.value = total / static_cast<double>(n);
  return out;
}

/// Mean squared error over all elements.
template <typename Scalar>
LossResult<Scalar> mse(const Matrix<Scalar>& pred, const Matrix<Scalar>& target) {
  if (pred.rows() != target.rows() || pred.cols() != target.cols())
    throw Error("mse: prediction and target differ in shape");
  if (pred.size() == 0) throw Error("mse: empty batch");
  const double count = static_cast<double>(pred.size());
  LossResult<Scalar> out;
  out.grad.resize(pred.rows(), pred.cols());
  double total = 0.0;
  for (Eigen::Index i = 0; i < pred.size(); ++i) {
    const double diff = static_cast<double>(pred.data()[i]) - static_cast<double>(target.data()[i]);
    total += diff * diff;
    out.grad.data()[i] = static_cast<Scalar>(2.0 * diff / count);
  }
  out.value = total / count;
  return out;
}

/// Index of the largest entry of each row; ties go to the lower index.
template <typename Scalar>
std::vector<int> argmax_rows(const Matrix<Scalar>& m) {
  std::vector<int> out(static_cast<std::size_t>(m.rows()));
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    int best = 0;
    for (Eigen::Index j = 1; j < m.cols(); ++j)
      if (m(i, j) > m(i, best)) best = static_cast<int>(j);
    out[static_cast<std::size_t>(i)] = best;
  }
  return out;
}

}  // namespace karma::nn
