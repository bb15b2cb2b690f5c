#pragma once

#include <span>

#include "karma/nn/core.hpp"

namespace karma::nn {

/// y = x W + b. W is (in x out), b is (1 x out).
template <typename Scalar>
class Linear {
 public:
  Linear() = default;
  Linear(const std::string& name, Eigen::Index in, Eigen::Index out, double init_bound,
         std::mt19937_64& rng)
      : weight(name + ".weight", in, out, true), bias(name + ".bias", 1, out, false) {
    fill_uniform(weight.value, init_bound, rng);
  }

  Matrix<Scalar> forward(const Matrix<Scalar>& x) {
    if (x.cols() != weight.value.rows())
      throw Error(weight.name + ": input has " + std::to_string(x.cols()) +
                  " columns, expected " + std::to_string(weight.value.rows()));
    x_ = x;
    Matrix<Scalar> y = x * weight.value;
    y.rowwise() += bias.value.row(0);
    return y;
  }

  Matrix<Scalar> backward(const Matrix<Scalar>& dy) {
    if (dy.rows() != x_.rows() || dy.cols() != weight.value.cols())
      throw Error(weight.name + ": gradient shape mismatch");
    weight.grad.noalias() += x_.transpose() * dy;
    bias.grad += dy.colwise().sum();
    return dy * weight.value.transpose();
  }

  void collect(ParamList<Scalar>& out) {
    out.push_back(&weight);
    out.push_back(&bias);
  }

  Eigen::Index in_features() const { return weight.value.rows(); }
  Eigen::Index out_features() const { return weight.value.cols(); }

  Parameter<Scalar> weight;
  Parameter<Scalar> bias;

 private:
  Matrix<Scalar> x_;
};

/// Per-row normalization to zero mean and unit variance, then gain and shift.
template <typename Scalar>
class LayerNorm {
 public:
  LayerNorm() = default;
  LayerNorm(const std::string& name, Eigen::Index dim, double eps = 1e-5)
      : gain(name + ".gain", 1, dim, false), shift(name + ".shift", 1, dim, false), eps_(eps) {
    gain.value.setOnes();
  }

  Matrix<Scalar> forward(const Matrix<Scalar>& x) {
    const Eigen::Index n = x.rows(), d = x.cols();
    normalized_.resize(n, d);
    inv_std_.resize(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      double mean = 0.0;
      for (Eigen::Index j = 0; j < d; ++j) mean += static_cast<double>(x(i, j));
      mean /= static_cast<double>(d);
      double var = 0.0;
      for (Eigen::Index j = 0; j < d; ++j) {
        const double c = static_cast<double>(x(i, j)) - mean;
        var += c * c;
      }
      var /= static_cast<double>(d);
      const double rstd = 1.0 / std::sqrt(var + eps_);
      inv_std_[i] = rstd;
      for (Eigen::Index j = 0; j < d; ++j)
        normalized_(i, j) = static_cast<Scalar>((static_cast<double>(x(i, j)) - mean) * rstd);
    }
    Matrix<Scalar> y = normalized_.array().rowwise() * gain.value.row(0).array();
    y.rowwise() += shift.value.row(0);
    return y;
  }

  Matrix<Scalar> backward(const Matrix<Scalar>& dy) {
    const Eigen::Index n = dy.rows(), d = dy.cols();
    gain.grad += (dy.array() * normalized_.array()).colwise().sum().matrix();
    shift.grad += dy.colwise().sum();
    Matrix<Scalar> dx(n, d);
    for (Eigen::Index i = 0; i < n; ++i) {
      double sum_g = 0.0, sum_gx = 0.0;
      for (Eigen::Index j = 0; j < d; ++j) {
        const double g = static_cast<double>(dy(i, j)) * static_cast<double>(gain.value(0, j));
        sum_g += g;
        sum_gx += g * static_cast<double>(normalized_(i, j));
      }
      const double rstd = inv_std_[i];
      const double dd = static_cast<double>(d);
      for (Eigen::Index j = 0; j < d; ++j) {
        const double g = static_cast<double>(dy(i, j)) * static_cast<double>(gain.value(0, j));
        dx(i, j) = static_cast<Scalar>(
            rstd * (g - sum_g / dd - static_cast<double>(normalized_(i, j)) * sum_gx / dd));
      }
    }
    return dx;
  }

  void collect(ParamList<Scalar>& out) {
    out.push_back(&gain);
    out.push_back(&shift);
  }

  /// Pre-gain output of the last forward pass.
  const Matrix<Scalar>& normalized() const { return normalized_; }

  Parameter<Scalar> gain;
  Parameter<Scalar> shift;

 private:
  double eps_ = 1e-5;
  Matrix<Scalar> normalized_;
  std::vector<double> inv_std_;
};

/// Lookup table of learned vectors.
template <typename Scalar>
class Embedding {
 public:
  Embedding() = default;
  Embedding(const std::string& name, Eigen::Index count, Eigen::Index dim, double init_bound,
            std::mt19937_64& rng)
      : table(name + ".table", count, dim, false) {
    fill_uniform(table.value, init_bound, rng);
  }

  Matrix<Scalar> forward(std::span<const int> indices) {
    indices_.assign(indices.begin(), indices.end());
    Matrix<Scalar> out(static_cast<Eigen::Index>(indices.size()), table.value.cols());
    for (std::size_t i = 0; i < indices.size(); ++i) {
      if (indices[i] < 0 || indices[i] >= table.value.rows())
        throw Error(table.name + ": index " + std::to_string(indices[i]) + " out of range");
      out.row(static_cast<Eigen::Index>(i)) = table.value.row(indices[i]);
    }
    return out;
  }

  void backward(const Matrix<Scalar>& dy) {
    for (std::size_t i = 0; i < indices_.size(); ++i)
      table.grad.row(indices_[i]) += dy.row(static_cast<Eigen::Index>(i));
  }

  void collect(ParamList<Scalar>& out) { out.push_back(&table); }

  Eigen::Index count() const { return table.value.rows(); }

  Parameter<Scalar> table;

 private:
  std::vector<int> indices_;
};

template <typename Scalar>
class Relu {
 public:
  Matrix<Scalar> forward(const Matrix<Scalar>& x) {
    active_ = (x.array() > Scalar(0)).template cast<Scalar>();
    return x.cwiseMax(Scalar(0));
  }
  Matrix<Scalar> backward(const Matrix<Scalar>& dy) const {
    return (dy.array() * active_.array()).matrix();
  }

 private:
  Matrix<Scalar> active_;
};

/// Inverted dropout: kept units are scaled by 1 / (1 - rate) while training;
/// identity otherwise.
template <typename Scalar>
class Dropout {
 public:
  Dropout() = default;
  explicit Dropout(double rate) : rate_(rate) {
    if (rate < 0.0 || rate >= 1.0) throw Error("dropout rate must lie in [0, 1)");
  }

  Matrix<Scalar> forward(const Matrix<Scalar>& x, const Context& ctx) {
    active_ = ctx.training && rate_ > 0.0;
    if (!active_) return x;
    if (!ctx.rng) throw Error("dropout needs a random source while training");
    mask_.resize(x.rows(), x.cols());
    std::bernoulli_distribution keep(1.0 - rate_);
    const Scalar scale = static_cast<Scalar>(1.0 / (1.0 - rate_));
    for (Eigen::Index i = 0; i < mask_.size(); ++i)
      mask_.data()[i] = keep(*ctx.rng) ? scale : Scalar(0);
    return (x.array() * mask_.array()).matrix();
  }

  Matrix<Scalar> backward(const Matrix<Scalar>& dy) const {
    if (!active_) return dy;
    return (dy.array() * mask_.array()).matrix();
  }

  double rate() const { return rate_; }

 private:
  double rate_ = 0.0;
  bool active_ = false;
  Matrix<Scalar> mask_;
};

}  // namespace karma::nn
