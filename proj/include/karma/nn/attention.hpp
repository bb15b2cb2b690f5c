#pragma once

#include <algorithm>
#include <limits>

#include "karma/nn/layers.hpp"

namespace karma::nn {

/// Multi-head scaled dot-product self-attention where position i attends
/// to positions <= i. Input rows hold `batch` sequences of `seq_len`
/// tokens each, stored back to back.
template <typename Scalar>
class CausalSelfAttention {
 public:
  CausalSelfAttention() = default;
  CausalSelfAttention(const std::string& name, Eigen::Index dim, int heads, double dropout,
                      double init_bound, std::mt19937_64& rng)
      : qkv_(name + ".qkv", dim, 3 * dim, init_bound, rng),
        proj_(name + ".proj", dim, dim, init_bound, rng),
        dim_(dim),
        heads_(heads),
        dropout_(dropout) {
    if (heads < 1 || dim % heads != 0)
      throw Error(name + ": embedding dim must be divisible by head count");
  }

  Matrix<Scalar> forward(const Matrix<Scalar>& x, Eigen::Index seq_len, const Context& ctx) {
    if (seq_len < 1 || x.rows() % seq_len != 0)
      throw Error("attention input rows are not a whole number of sequences");
    seq_len_ = seq_len;
    batch_ = x.rows() / seq_len;
    qkv_out_ = qkv_.forward(x);
    const Eigen::Index hd = dim_ / heads_;
    const double scale = 1.0 / std::sqrt(static_cast<double>(hd));
    const Eigen::Index blocks = batch_ * heads_;
    probs_.resize(blocks * seq_len, seq_len);
    dropped_.resize(blocks * seq_len, seq_len);
    drop_active_ = ctx.training && dropout_ > 0.0;
    std::bernoulli_distribution keep(1.0 - dropout_);
    const Scalar keep_scale = static_cast<Scalar>(1.0 / (1.0 - dropout_));

    Matrix<Scalar> y(x.rows(), dim_);
    std::vector<double> row(static_cast<std::size_t>(seq_len));
    for (Eigen::Index b = 0; b < batch_; ++b) {
      for (int h = 0; h < heads_; ++h) {
        const auto q = qkv_out_.block(b * seq_len, h * hd, seq_len, hd);
        const auto k = qkv_out_.block(b * seq_len, dim_ + h * hd, seq_len, hd);
        const auto v = qkv_out_.block(b * seq_len, 2 * dim_ + h * hd, seq_len, hd);
        const Matrix<Scalar> scores = q * k.transpose();
        auto p = probs_.block((b * heads_ + h) * seq_len, 0, seq_len, seq_len);
        for (Eigen::Index i = 0; i < seq_len; ++i) {
          double top = -std::numeric_limits<double>::infinity();
          for (Eigen::Index j = 0; j <= i; ++j) {
            row[j] = static_cast<double>(scores(i, j)) * scale;
            top = std::max(top, row[j]);
          }
          double sum = 0.0;
          for (Eigen::Index j = 0; j <= i; ++j) {
            row[j] = std::exp(row[j] - top);
            sum += row[j];
          }
          for (Eigen::Index j = 0; j < seq_len; ++j)
            p(i, j) = j <= i ? static_cast<Scalar>(row[j] / sum) : Scalar(0);
        }
        auto pd = dropped_.block((b * heads_ + h) * seq_len, 0, seq_len, seq_len);
        if (drop_active_) {
          if (!ctx.rng) throw Error("attention dropout needs a random source");
          for (Eigen::Index i = 0; i < seq_len; ++i)
            for (Eigen::Index j = 0; j < seq_len; ++j)
              pd(i, j) = (j <= i && keep(*ctx.rng)) ? p(i, j) * keep_scale : Scalar(0);
        } else {
          pd = p;
        }
        y.block(b * seq_len, h * hd, seq_len, hd).noalias() = pd * v;
      }
    }
    return proj_.forward(y);
  }

  Matrix<Scalar> backward(const Matrix<Scalar>& dout) {
    const Matrix<Scalar> dy = proj_.backward(dout);
    const Eigen::Index hd = dim_ / heads_;
    const Eigen::Index n = seq_len_;
    const Scalar scale = static_cast<Scalar>(1.0 / std::sqrt(static_cast<double>(hd)));
    const Scalar keep_scale = static_cast<Scalar>(1.0 / (1.0 - dropout_));
    Matrix<Scalar> dqkv = Matrix<Scalar>::Zero(qkv_out_.rows(), qkv_out_.cols());
    Matrix<Scalar> dp(n, n), ds(n, n);
    for (Eigen::Index b = 0; b < batch_; ++b) {
      for (int h = 0; h < heads_; ++h) {
        const auto q = qkv_out_.block(b * n, h * hd, n, hd);
        const auto k = qkv_out_.block(b * n, dim_ + h * hd, n, hd);
        const auto v = qkv_out_.block(b * n, 2 * dim_ + h * hd, n, hd);
        const auto p = probs_.block((b * heads_ + h) * n, 0, n, n);
        const auto pd = dropped_.block((b * heads_ + h) * n, 0, n, n);
        const auto dyh = dy.block(b * n, h * hd, n, hd);

        dqkv.block(b * n, 2 * dim_ + h * hd, n, hd).noalias() = pd.transpose() * dyh;
        dp.noalias() = dyh * v.transpose();
        if (drop_active_) {
          // Kept entries satisfy pd = p * keep_scale.
          for (Eigen::Index i = 0; i < n; ++i)
            for (Eigen::Index j = 0; j < n; ++j)
              dp(i, j) = pd(i, j) != Scalar(0) ? dp(i, j) * keep_scale : Scalar(0);
        }
        for (Eigen::Index i = 0; i < n; ++i) {
          double dot = 0.0;
          for (Eigen::Index j = 0; j <= i; ++j)
            dot += static_cast<double>(p(i, j)) * static_cast<double>(dp(i, j));
          for (Eigen::Index j = 0; j < n; ++j)
            ds(i, j) = j <= i ? static_cast<Scalar>(static_cast<double>(p(i, j)) *
                                                    (static_cast<double>(dp(i, j)) - dot))
                              : Scalar(0);
        }
        ds *= scale;
        dqkv.block(b * n, h * hd, n, hd).noalias() = ds * k;
        dqkv.block(b * n, dim_ + h * hd, n, hd).noalias() = ds.transpose() * q;
      }
    }
    return qkv_.backward(dqkv);
  }

  /// Attention weights of the last forward pass for sequence `b`, head `h`.
  Matrix<Scalar> weights(Eigen::Index b, int h) const {
    return probs_.block((b * heads_ + h) * seq_len_, 0, seq_len_, seq_len_);
  }

  void collect(ParamList<Scalar>& out) {
    qkv_.collect(out);
    proj_.collect(out);
  }

 private:
  Linear<Scalar> qkv_;
  Linear<Scalar> proj_;
  Eigen::Index dim_ = 0;
  int heads_ = 1;
  double dropout_ = 0.0;
  bool drop_active_ = false;
  Eigen::Index seq_len_ = 0;
  Eigen::Index batch_ = 0;
  Matrix<Scalar> qkv_out_;
  Matrix<Scalar> probs_;
  Matrix<Scalar> dropped_;
};

/// Pre-norm transformer block:
///   h   = x + drop(attn(ln1(x)))
///   out = h + drop(fc2(relu(fc1(ln2(h)))))
template <typename Scalar>
class TransformerBlock {
 public:
  TransformerBlock() = default;
  TransformerBlock(const std::string& name, Eigen::Index dim, int heads, double dropout,
                   int mlp_ratio, double init_bound, std::mt19937_64& rng)
      : ln1_(name + ".ln1", dim),
        attn_(name + ".attn", dim, heads, dropout, init_bound, rng),
        drop1_(dropout),
        ln2_(name + ".ln2", dim),
        fc1_(name + ".fc1", dim, mlp_ratio * dim, init_bound, rng),
        fc2_(name + ".fc2", mlp_ratio * dim, dim, init_bound, rng),
        drop2_(dropout) {}

  Matrix<Scalar> forward(const Matrix<Scalar>& x, Eigen::Index seq_len, const Context& ctx) {
    Matrix<Scalar> h = x + drop1_.forward(attn_.forward(ln1_.forward(x), seq_len, ctx), ctx);
    Matrix<Scalar> m = fc2_.forward(relu_.forward(fc1_.forward(ln2_.forward(h))));
    return h + drop2_.forward(m, ctx);
  }

  Matrix<Scalar> backward(const Matrix<Scalar>& dout) {
    Matrix<Scalar> dh =
        dout + ln2_.backward(fc1_.backward(relu_.backward(fc2_.backward(drop2_.backward(dout)))));
    return dh + ln1_.backward(attn_.backward(drop1_.backward(dh)));
  }

  void collect(ParamList<Scalar>& out) {
    ln1_.collect(out);
    attn_.collect(out);
    ln2_.collect(out);
    fc1_.collect(out);
    fc2_.collect(out);
  }

  const CausalSelfAttention<Scalar>& attention() const { return attn_; }

 private:
  LayerNorm<Scalar> ln1_;
  CausalSelfAttention<Scalar> attn_;
  Dropout<Scalar> drop1_;
  LayerNorm<Scalar> ln2_;
  Linear<Scalar> fc1_;
  Relu<Scalar> relu_;
  Linear<Scalar> fc2_;
  Dropout<Scalar> drop2_;
};

}  // namespace karma::nn
