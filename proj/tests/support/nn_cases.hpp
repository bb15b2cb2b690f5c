#pragma once

#include <functional>
#include <random>
#include <string>
#include <vector>

#include "karma/dt_model.hpp"
#include "karma/nn/attention.hpp"
#include "karma/nn/grad_check.hpp"
#include "karma/nn/layers.hpp"
#include "karma/nn/loss.hpp"

namespace karma::testing {

using Mat = nn::Matrix<double>;
using Param = nn::Parameter<double>;

inline Mat random_matrix(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng,
                         double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  Mat m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
  return m;
}

inline Param input_param(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng) {
  Param p("input", rows, cols);
  p.value = random_matrix(rows, cols, rng);
  return p;
}

/// Scalar head sum(probe .* y); its gradient with respect to y is the probe.
inline double probe_loss(const Mat& y, const Mat& probe) { return (y.array() * probe.array()).sum(); }

/// Central-difference step and the denominator floor of the relative error.
inline double grad_epsilon = 1e-5;
inline double grad_floor = 1e-6;

struct GradCase {
  std::string name;
  double tolerance = 1e-4;
  std::function<nn::GradCheckResult(unsigned long long seed)> run;
};

inline nn::GradCheckResult check_linear(unsigned long long seed) {
  std::mt19937_64 rng(seed);
  nn::Linear<double> layer("lin", 5, 4, 0.5, rng);
  Param x = input_param(3, 5, rng);
  const Mat probe = random_matrix(3, 4, rng);
  nn::ParamList<double> params{&x};
  layer.collect(params);
  return nn::grad_check<double>(
      [&](bool backward) {
        const Mat y = layer.forward(x.value);
        if (backward) x.grad += layer.backward(probe);
        return probe_loss(y, probe);
      },
      params, grad_epsilon, grad_floor);
}

inline nn::GradCheckResult check_layer_norm(unsigned long long seed) {
  std::mt19937_64 rng(seed);
  nn::LayerNorm<double> layer("ln", 6);
  layer.gain.value = random_matrix(1, 6, rng);
  layer.shift.value = random_matrix(1, 6, rng);
  Param x = input_param(4, 6, rng);
  const Mat probe = random_matrix(4, 6, rng);
  nn::ParamList<double> params{&x};
  layer.collect(params);
  return nn::grad_check<double>(
      [&](bool backward) {
        const Mat y = layer.forward(x.value);
        if (backward) x.grad += layer.backward(probe);
        return probe_loss(y, probe);
      },
      params, grad_epsilon, grad_floor);
}

inline nn::GradCheckResult check_embedding(unsigned long long seed) {
  std::mt19937_64 rng(seed);
  nn::Embedding<double> layer("emb", 7, 3, 0.5, rng);
  const std::vector<int> idx{0, 3, 3, 6, 1};
  const Mat probe = random_matrix(5, 3, rng);
  nn::ParamList<double> params;
  layer.collect(params);
  return nn::grad_check<double>(
      [&](bool backward) {
        const Mat y = layer.forward(idx);
        if (backward) layer.backward(probe);
        return probe_loss(y, probe);
      },
      params, grad_epsilon, grad_floor);
}

inline nn::GradCheckResult check_relu(unsigned long long seed) {
  std::mt19937_64 rng(seed);
  nn::Relu<double> relu;
  Param x = input_param(4, 5, rng);
  // Keep inputs away from the kink so central differences stay on one side.
  for (Eigen::Index i = 0; i < x.value.size(); ++i)
    if (std::abs(x.value.data()[i]) < 0.05) x.value.data()[i] += 0.1;
  const Mat probe = random_matrix(4, 5, rng);
  nn::ParamList<double> params{&x};
  return nn::grad_check<double>(
      [&](bool backward) {
        const Mat y = relu.forward(x.value);
        if (backward) x.grad += relu.backward(probe);
        return probe_loss(y, probe);
      },
      params, grad_epsilon, grad_floor);
}

inline nn::GradCheckResult check_dropout(unsigned long long seed) {
  std::mt19937_64 rng(seed);
  nn::Dropout<double> drop(0.3);
  Param x = input_param(4, 5, rng);
  const Mat probe = random_matrix(4, 5, rng);
  nn::ParamList<double> params{&x};
  return nn::grad_check<double>(
      [&](bool backward) {
        std::mt19937_64 mask_rng(seed + 100);
        const Mat y = drop.forward(x.value, {true, &mask_rng});
        if (backward) x.grad += drop.backward(probe);
        return probe_loss(y, probe);
      },
      params, grad_epsilon, grad_floor);
}

inline nn::GradCheckResult check_cross_entropy(unsigned long long seed) {
  std::mt19937_64 rng(seed);
  Param logits = input_param(5, 6, rng);
  Mat targets = Mat::Zero(5, 6);
  std::uniform_int_distribution<int> pick(0, 5);
  for (Eigen::Index i = 0; i < 4; ++i) targets(i, pick(rng)) = 1.0;
  targets.row(4).setConstant(1.0 / 6.0);
  nn::ParamList<double> params{&logits};
  return nn::grad_check<double>(
      [&](bool backward) {
        const auto r = nn::cross_entropy(logits.value, targets);
        if (backward) logits.grad += r.grad;
        return r.value;
      },
      params, grad_epsilon, grad_floor);
}

inline nn::GradCheckResult check_mse(unsigned long long seed) {
  std::mt19937_64 rng(seed);
  Param pred = input_param(6, 2, rng);
  const Mat target = random_matrix(6, 2, rng);
  nn::ParamList<double> params{&pred};
  return nn::grad_check<double>(
      [&](bool backward) {
        const auto r = nn::mse(pred.value, target);
        if (backward) pred.grad += r.grad;
        return r.value;
      },
      params, grad_epsilon, grad_floor);
}

inline nn::GradCheckResult check_attention(unsigned long long seed, double dropout = 0.0) {
  std::mt19937_64 rng(seed);
  nn::CausalSelfAttention<double> attn("attn", 8, 2, dropout, 0.4, rng);
  const Eigen::Index seq = 5, batch = 2;
  Param x = input_param(batch * seq, 8, rng);
  const Mat probe = random_matrix(batch * seq, 8, rng);
  nn::ParamList<double> params{&x};
  attn.collect(params);
  return nn::grad_check<double>(
      [&](bool backward) {
        std::mt19937_64 mask_rng(seed + 200);
        const Mat y = attn.forward(x.value, seq, {dropout > 0.0, &mask_rng});
        if (backward) x.grad += attn.backward(probe);
        return probe_loss(y, probe);
      },
      params, grad_epsilon, grad_floor);
}

inline nn::GradCheckResult check_block(unsigned long long seed) {
  std::mt19937_64 rng(seed);
  nn::TransformerBlock<double> block("blk", 8, 1, 0.1, 2, 0.4, rng);
  const Eigen::Index seq = 4, batch = 2;
  Param x = input_param(batch * seq, 8, rng);
  const Mat probe = random_matrix(batch * seq, 8, rng);
  nn::ParamList<double> params{&x};
  block.collect(params);
  return nn::grad_check<double>(
      [&](bool backward) {
        std::mt19937_64 mask_rng(seed + 300);
        const Mat y = block.forward(x.value, seq, {true, &mask_rng});
        if (backward) x.grad += block.backward(probe);
        return probe_loss(y, probe);
      },
      params, grad_epsilon, grad_floor);
}

inline DtShape tiny_dt_shape() {
  DtShape s;
  s.context_len = 3;
  s.embed_dim = 8;
  s.blocks = 2;
  s.heads = 1;
  s.dropout = 0.1;
  s.action_count = 4;
  s.obs_dim = 5;
  s.max_timestep = 10;
  s.mlp_ratio = 2;
  return s;
}

template <typename Scalar>
DtBatch<Scalar> random_dt_batch(const DtShape& shape, Eigen::Index batch, Eigen::Index steps,
                                bool pending_last, std::mt19937_64& rng) {
  DtBatch<Scalar> b;
  b.batch = batch;
  b.steps = steps;
  b.pending_last = pending_last;
  const Eigen::Index ka = pending_last ? steps - 1 : steps;
  b.returns = random_matrix(batch * steps, 1, rng).template cast<Scalar>();
  b.observations = random_matrix(batch * steps, shape.obs_dim, rng).template cast<Scalar>();
  b.actions = nn::Matrix<Scalar>::Zero(batch * ka, shape.action_count);
  std::uniform_int_distribution<int> act(0, shape.action_count - 1);
  for (Eigen::Index i = 0; i < b.actions.rows(); ++i) b.actions(i, act(rng)) = Scalar(1);
  std::uniform_int_distribution<int> start(0, shape.max_timestep - static_cast<int>(steps));
  for (Eigen::Index w = 0; w < batch; ++w) {
    const int t0 = start(rng);
    for (Eigen::Index j = 0; j < steps; ++j) b.timesteps.push_back(t0 + static_cast<int>(j));
  }
  return b;
}

/// Cross-entropy of the transformer's action logits against the batch's own
/// actions, with dropout active under a fixed mask.
inline nn::GradCheckResult check_dt_loss(unsigned long long seed) {
  const DtShape shape = tiny_dt_shape();
  DecisionTransformer<double> net(shape, seed);
  std::mt19937_64 rng(seed + 1);
  const DtBatch<double> batch = random_dt_batch<double>(shape, 2, shape.context_len, false, rng);
  return nn::grad_check<double>(
      [&](bool backward) {
        std::mt19937_64 mask_rng(seed + 400);
        const Mat logits = net.forward(batch, {true, &mask_rng});
        const auto r = nn::cross_entropy(logits, batch.actions);
        if (backward) net.backward(r.grad);
        return r.value;
      },
      net.parameters(), grad_epsilon, grad_floor);
}

inline std::vector<GradCase> grad_cases() {
  return {
      {"linear", 1e-4, check_linear},
      {"layer_norm", 1e-4, check_layer_norm},
      {"embedding", 1e-4, check_embedding},
      {"relu", 1e-4, check_relu},
      {"dropout", 1e-4, check_dropout},
      {"cross_entropy", 1e-4, check_cross_entropy},
      {"mse", 1e-4, check_mse},
      {"attention", 1e-3, [](unsigned long long s) { return check_attention(s); }},
      {"attention_dropout", 1e-3, [](unsigned long long s) { return check_attention(s, 0.2); }},
      {"transformer_block", 1e-3, check_block},
      {"dt_loss", 1e-3, check_dt_loss},
  };
}

/// Largest change of any past-timestep logit when every token after
/// timestep `cut` is randomized.
template <typename Scalar>
double future_influence(DecisionTransformer<Scalar>& net, const DtShape& shape, std::mt19937_64& rng) {
  const Eigen::Index steps = shape.context_len;
  const bool pending = std::bernoulli_distribution(0.5)(rng);
  DtBatch<Scalar> a = random_dt_batch<Scalar>(shape, 1, steps, pending, rng);
  const int cut = std::uniform_int_distribution<int>(0, static_cast<int>(steps) - 2)(rng);
  DtBatch<Scalar> b = a;
  const Eigen::Index ka = a.action_steps();
  for (Eigen::Index j = cut + 1; j < steps; ++j) {
    b.returns.row(j) = random_matrix(1, 1, rng).template cast<Scalar>();
    b.observations.row(j) = random_matrix(1, shape.obs_dim, rng).template cast<Scalar>();
  }
  // The action at `cut` follows its logits, so it counts as future too.
  for (Eigen::Index j = cut; j < ka; ++j) {
    b.actions.row(j).setZero();
    b.actions(j, std::uniform_int_distribution<int>(0, shape.action_count - 1)(rng)) = Scalar(1);
  }
  const nn::Matrix<Scalar> la = net.forward(a, {});
  const nn::Matrix<Scalar> lb = net.forward(b, {});
  return static_cast<double>((la.topRows(cut + 1) - lb.topRows(cut + 1)).cwiseAbs().maxCoeff());
}

}  // namespace karma::testing
