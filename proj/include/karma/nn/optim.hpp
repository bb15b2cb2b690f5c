#pragma once

#include <numbers>

#include "karma/nn/core.hpp"

namespace karma::nn {

struct AdamWConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
};

/// Adam with decoupled weight decay and bias correction. Decay applies only
/// to parameters flagged `decay`.
template <typename Scalar>
class AdamW {
 public:
  AdamW(ParamList<Scalar> params, AdamWConfig config)
      : params_(std::move(params)), config_(config) {
    for (auto* p : params_) {
      first_.push_back(Matrix<Scalar>::Zero(p->value.rows(), p->value.cols()));
      second_.push_back(Matrix<Scalar>::Zero(p->value.rows(), p->value.cols()));
    }
  }

  void zero_grad() { zero_grads(params_); }

  /// One update at learning rate `lr`.
  void step(double lr) {
    for (auto* p : params_) {
      if (p->grad.rows() != p->value.rows() || p->grad.cols() != p->value.cols())
        throw Error("AdamW: gradient shape differs for " + p->name);
      if (!p->grad.allFinite())
        throw TrainingError("AdamW: non-finite gradient in " + p->name + " at step " +
                            std::to_string(steps_ + 1));
    }
    ++steps_;
    const double c1 = 1.0 - std::pow(config_.beta1, static_cast<double>(steps_));
    const double c2 = 1.0 - std::pow(config_.beta2, static_cast<double>(steps_));
    const auto b1 = static_cast<Scalar>(config_.beta1);
    const auto b2 = static_cast<Scalar>(config_.beta2);
    for (std::size_t k = 0; k < params_.size(); ++k) {
      auto& p = *params_[k];
      if (p.decay && config_.weight_decay != 0.0)
        p.value *= static_cast<Scalar>(1.0 - lr * config_.weight_decay);
      first_[k] = b1 * first_[k] + (Scalar(1) - b1) * p.grad;
      second_[k] = b2 * second_[k] + (Scalar(1) - b2) * p.grad.cwiseProduct(p.grad);
      for (Eigen::Index i = 0; i < p.value.size(); ++i) {
        const double m_hat = static_cast<double>(first_[k].data()[i]) / c1;
        const double v_hat = static_cast<double>(second_[k].data()[i]) / c2;
        p.value.data()[i] -= static_cast<Scalar>(lr * m_hat / (std::sqrt(v_hat) + config_.eps));
      }
    }
  }

  long steps() const { return steps_; }
  const AdamWConfig& config() const { return config_; }

 private:
  ParamList<Scalar> params_;
  AdamWConfig config_;
  std::vector<Matrix<Scalar>> first_;
  std::vector<Matrix<Scalar>> second_;
  long steps_ = 0;
};

/// lr0 * (1 + cos(pi * step / total)) / 2 for step in [0, total].
inline double cosine_lr(long step, long total_steps, double lr0 = 1e-3) {
  if (total_steps <= 0) throw Error("cosine_lr: total steps must be positive");
  if (step < 0 || step > total_steps)
    throw Error("cosine_lr: step " + std::to_string(step) + " outside [0, " +
                std::to_string(total_steps) + "]");
  return lr0 * 0.5 *
         (1.0 + std::cos(std::numbers::pi * static_cast<double>(step) /
                         static_cast<double>(total_steps)));
}

/// Rescales gradients so their global L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
template <typename Scalar>
double clip_grad_norm(const ParamList<Scalar>& params, double max_norm) {
  double sq = 0.0;
  for (auto* p : params)
    for (Eigen::Index i = 0; i < p->grad.size(); ++i) {
      const double g = static_cast<double>(p->grad.data()[i]);
      sq += g * g;
    }
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const auto s = static_cast<Scalar>(max_norm / (norm + 1e-12));
    for (auto* p : params) p->grad *= s;
  }
  return norm;
}

}  // namespace karma::nn
