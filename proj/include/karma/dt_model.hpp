#pragma once

#include <optional>
#include <vector>

#include "karma/nn/attention.hpp"
#include "karma/nn/layers.hpp"

namespace karma {

/// Architecture of the causal decision transformer.
struct DtShape {
  int context_len = 4;  // K
  int embed_dim = 128;
  int blocks = 3;
  int heads = 1;
  double dropout = 0.1;
  int action_count = 6;
  int obs_dim = 10;
  int max_timestep = 48;
  int mlp_ratio = 4;

  void validate() const;
};

/// A minibatch of equally long windows, flattened sequence-major.
///
/// Row b * steps + j of `returns`, `observations` and `timesteps` describes
/// timestep j of window b. With `pending_last` the newest action of every
/// window is absent (decision time) and `actions` has steps - 1 rows per
/// window.
template <typename Scalar>
struct DtBatch {
  Eigen::Index batch = 0;
  Eigen::Index steps = 0;
  bool pending_last = false;
  nn::Matrix<Scalar> returns;       // (batch * steps) x 1
  nn::Matrix<Scalar> observations;  // (batch * steps) x obs_dim
  nn::Matrix<Scalar> actions;       // (batch * action_steps) x action_count
  std::vector<int> timesteps;       // batch * steps, absolute chunk indices

  Eigen::Index action_steps() const { return pending_last ? steps - 1 : steps; }
  /// Tokens per window: 3K with every action present, 3K - 1 at decision time.
  Eigen::Index tokens_per_window() const { return 2 * steps + action_steps(); }
};

/// Token position of a modality within a window. Each timestep contributes
/// (R-hat, o, a) in that order.
inline Eigen::Index return_token(Eigen::Index step) { return 3 * step; }
inline Eigen::Index observation_token(Eigen::Index step) { return 3 * step + 1; }
inline Eigen::Index action_token(Eigen::Index step) { return 3 * step + 2; }

/// GPT-style decoder over interleaved (R-hat, o, a) tokens. Each token is
/// its modality embedding plus a learned embedding of its absolute
/// timestep. Action logits for timestep t are read from the final hidden
/// state of the o_t token.
template <typename Scalar>
class DecisionTransformer {
 public:
  using Mat = nn::Matrix<Scalar>;

  DecisionTransformer() = default;
  DecisionTransformer(const DtShape& shape, unsigned long long seed) : shape_(shape) {
    shape.validate();
    std::mt19937_64 rng(seed);
    const double bound = nn::uniform_bound_for_stddev(0.02);
    const auto d = shape.embed_dim;
    embed_return_ = nn::Linear<Scalar>("embed_return", 1, d, bound, rng);
    embed_obs_ = nn::Linear<Scalar>("embed_obs", shape.obs_dim, d, bound, rng);
    embed_action_ = nn::Linear<Scalar>("embed_action", shape.action_count, d, bound, rng);
    embed_time_ = nn::Embedding<Scalar>("embed_time", shape.max_timestep, d, bound, rng);
    embed_ln_ = nn::LayerNorm<Scalar>("embed_ln", d);
    for (int i = 0; i < shape.blocks; ++i)
      blocks_.emplace_back("block" + std::to_string(i), d, shape.heads, shape.dropout,
                           shape.mlp_ratio, bound, rng);
    final_ln_ = nn::LayerNorm<Scalar>("final_ln", d);
    head_ = nn::Linear<Scalar>("pred_action", d, shape.action_count, bound, rng);
  }

  const DtShape& shape() const { return shape_; }

  /// Interleaved token embeddings, (batch * tokens_per_window) x embed_dim.
  Mat embed(const DtBatch<Scalar>& batch) {
    check(batch);
    const Eigen::Index k = batch.steps, ka = batch.action_steps(), n = batch.tokens_per_window();
    const Mat er = embed_return_.forward(batch.returns);
    const Mat eo = embed_obs_.forward(batch.observations);
    const Mat et = embed_time_.forward(batch.timesteps);
    Mat ea;
    if (ka > 0) ea = embed_action_.forward(batch.actions);
    Mat tokens(batch.batch * n, shape_.embed_dim);
    for (Eigen::Index b = 0; b < batch.batch; ++b) {
      for (Eigen::Index j = 0; j < k; ++j) {
        const Eigen::Index row = b * k + j;
        tokens.row(b * n + return_token(j)) = er.row(row) + et.row(row);
        tokens.row(b * n + observation_token(j)) = eo.row(row) + et.row(row);
        if (j < ka) tokens.row(b * n + action_token(j)) = ea.row(b * ka + j) + et.row(row);
      }
    }
    return tokens;
  }

  /// Action logits, (batch * steps) x action_count.
  Mat forward(const DtBatch<Scalar>& batch, const nn::Context& ctx) {
    batch_ = batch.batch;
    steps_ = batch.steps;
    action_steps_ = batch.action_steps();
    const Eigen::Index n = batch.tokens_per_window();
    Mat x = embed_ln_.forward(embed(batch));
    for (auto& block : blocks_) x = block.forward(x, n, ctx);
    x = final_ln_.forward(x);
    Mat hidden(batch.batch * batch.steps, shape_.embed_dim);
    for (Eigen::Index b = 0; b < batch.batch; ++b)
      for (Eigen::Index j = 0; j < batch.steps; ++j)
        hidden.row(b * batch.steps + j) = x.row(b * n + observation_token(j));
    Mat logits = head_.forward(hidden);
    nn::ensure_finite(logits, "decision transformer logits");
    return logits;
  }

  /// Accumulates parameter gradients for d loss / d logits.
  void backward(const Mat& dlogits) {
    const Eigen::Index k = steps_, ka = action_steps_, n = 2 * k + ka;
    const Mat dhidden = head_.backward(dlogits);
    Mat dx = Mat::Zero(batch_ * n, shape_.embed_dim);
    for (Eigen::Index b = 0; b < batch_; ++b)
      for (Eigen::Index j = 0; j < k; ++j)
        dx.row(b * n + observation_token(j)) = dhidden.row(b * k + j);
    dx = final_ln_.backward(dx);
    for (auto it = blocks_.rbegin(); it != blocks_.rend(); ++it) dx = it->backward(dx);
    dx = embed_ln_.backward(dx);

    Mat der(batch_ * k, shape_.embed_dim), deo(batch_ * k, shape_.embed_dim),
        det(batch_ * k, shape_.embed_dim), dea(batch_ * ka, shape_.embed_dim);
    for (Eigen::Index b = 0; b < batch_; ++b) {
      for (Eigen::Index j = 0; j < k; ++j) {
        const Eigen::Index row = b * k + j;
        der.row(row) = dx.row(b * n + return_token(j));
        deo.row(row) = dx.row(b * n + observation_token(j));
        det.row(row) = der.row(row) + deo.row(row);
        if (j < ka) {
          dea.row(b * ka + j) = dx.row(b * n + action_token(j));
          det.row(row) += dea.row(b * ka + j);
        }
      }
    }
    embed_return_.backward(der);
    embed_obs_.backward(deo);
    if (ka > 0) embed_action_.backward(dea);
    embed_time_.backward(det);
  }

  nn::ParamList<Scalar> parameters() {
    nn::ParamList<Scalar> out;
    embed_return_.collect(out);
    embed_obs_.collect(out);
    embed_action_.collect(out);
    embed_time_.collect(out);
    embed_ln_.collect(out);
    for (auto& block : blocks_) block.collect(out);
    final_ln_.collect(out);
    head_.collect(out);
    return out;
  }

  const nn::TransformerBlock<Scalar>& block(int i) const { return blocks_.at(i); }

 private:
  void check(const DtBatch<Scalar>& batch) const {
    const Eigen::Index rows = batch.batch * batch.steps;
    if (batch.batch < 1 || batch.steps < 1) throw Error("empty decision transformer batch");
    if (batch.steps > shape_.context_len)
      throw Error("window of " + std::to_string(batch.steps) + " steps exceeds context length " +
                  std::to_string(shape_.context_len));
    if (batch.returns.rows() != rows || batch.returns.cols() != 1)
      throw Error("return batch has the wrong shape");
    if (batch.observations.rows() != rows || batch.observations.cols() != shape_.obs_dim)
      throw Error("observation batch has the wrong shape");
    if (batch.actions.rows() != batch.batch * batch.action_steps() ||
        (batch.action_steps() > 0 && batch.actions.cols() != shape_.action_count))
      throw Error("action batch has the wrong shape");
    if (static_cast<Eigen::Index>(batch.timesteps.size()) != rows)
      throw Error("timestep batch has the wrong length");
    for (Eigen::Index b = 0; b < batch.batch; ++b)
      for (Eigen::Index j = 1; j < batch.steps; ++j)
        if (batch.timesteps[b * batch.steps + j] != batch.timesteps[b * batch.steps + j - 1] + 1)
          throw Error("window timesteps are not consecutive");
  }

  DtShape shape_;
  nn::Linear<Scalar> embed_return_;
  nn::Linear<Scalar> embed_obs_;
  nn::Linear<Scalar> embed_action_;
  nn::Embedding<Scalar> embed_time_;
  nn::LayerNorm<Scalar> embed_ln_;
  std::vector<nn::TransformerBlock<Scalar>> blocks_;
  nn::LayerNorm<Scalar> final_ln_;
  nn::Linear<Scalar> head_;
  Eigen::Index batch_ = 0, steps_ = 0, action_steps_ = 0;
};

inline void DtShape::validate() const {
  if (context_len < 1) throw Error("context length must be at least 1");
  if (embed_dim < 1 || blocks < 0 || heads < 1 || action_count < 1 || obs_dim < 1 ||
      max_timestep < 1 || mlp_ratio < 1)
    throw Error("decision transformer dimensions must be positive");
  if (embed_dim % heads != 0) throw Error("embed_dim must be divisible by heads");
  if (dropout < 0.0 || dropout >= 1.0) throw Error("dropout must lie in [0, 1)");
}

}  // namespace karma
