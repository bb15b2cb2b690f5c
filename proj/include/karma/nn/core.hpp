#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "karma/error.hpp"

namespace karma::nn {

/// Row-major dense matrix; rows are samples or tokens.
template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename Scalar>
struct Parameter {
  std::string name;
  Matrix<Scalar> value;
  Matrix<Scalar> grad;
  bool decay = true;  // subject to decoupled weight decay

  Parameter() = default;
  Parameter(std::string n, Eigen::Index rows, Eigen::Index cols, bool d = true)
      : name(std::move(n)),
        value(Matrix<Scalar>::Zero(rows, cols)),
        grad(Matrix<Scalar>::Zero(rows, cols)),
        decay(d) {}

  void zero_grad() { grad.setZero(); }
  Eigen::Index size() const { return value.size(); }
};

template <typename Scalar>
using ParamList = std::vector<Parameter<Scalar>*>;

/// Forward-pass mode. Dropout draws from `rng` only while training.
struct Context {
  bool training = false;
  std::mt19937_64* rng = nullptr;
};

template <typename Derived>
void ensure_finite(const Eigen::DenseBase<Derived>& m, const char* where) {
  if (!m.allFinite()) throw Error(std::string("non-finite values in ") + where);
}

/// Fills `m` with U(-bound, bound).
template <typename Scalar>
void fill_uniform(Matrix<Scalar>& m, double bound, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (Eigen::Index i = 0; i < m.size(); ++i)
    m.data()[i] = static_cast<Scalar>(dist(rng));
}

/// U(-b, b) with standard deviation `stddev`.
inline double uniform_bound_for_stddev(double stddev) { return stddev * std::sqrt(3.0); }

inline double fan_in_bound(Eigen::Index fan_in) {
  return 1.0 / std::sqrt(static_cast<double>(fan_in));
}

template <typename Scalar>
void zero_grads(const ParamList<Scalar>& params) {
  for (auto* p : params) p->zero_grad();
}

template <typename Scalar>
std::size_t parameter_count(const ParamList<Scalar>& params) {
  std::size_t n = 0;
  for (auto* p : params) n += static_cast<std::size_t>(p->size());
  return n;
}

}  // namespace karma::nn
