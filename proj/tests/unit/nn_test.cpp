#include <cmath>
#include <numbers>

#include <gtest/gtest.h>

#include "karma/nn/checkpoint.hpp"
#include "karma/nn/optim.hpp"
#include "../support/nn_cases.hpp"

using namespace karma;
using karma::testing::Mat;

TEST(GradCheck, EveryOpAndFullLoss) {
  for (const auto& c : karma::testing::grad_cases()) {
    const auto r = c.run(1);
    EXPECT_LT(r.max_relative_error, c.tolerance)
        << c.name << " worst " << r.worst_parameter << "[" << r.worst_index << "]";
    EXPECT_GT(r.checked, 0u) << c.name;
  }
}

TEST(GradCheck, DetectsWrongGradient) {
  nn::Parameter<double> p("p", 1, 3);
  p.value << 1.0, 2.0, 3.0;
  const auto r = nn::grad_check<double>(
      [&](bool backward) {
        if (backward) p.grad = 3.0 * p.value;  // true gradient is 2x
        return p.value.squaredNorm();
      },
      nn::ParamList<double>{&p});
  EXPECT_GT(r.max_relative_error, 0.3);
}

TEST(Causality, FutureTokensDoNotMovePastLogits) {
  const DtShape shape = karma::testing::tiny_dt_shape();
  DecisionTransformer<double> net(shape, 5);
  std::mt19937_64 rng(9);
  for (int i = 0; i < 20; ++i) EXPECT_LE(karma::testing::future_influence(net, shape, rng), 1e-6);
}

TEST(Causality, PresentTokensDoMoveLogits) {
  const DtShape shape = karma::testing::tiny_dt_shape();
  DecisionTransformer<double> net(shape, 5);
  std::mt19937_64 rng(2);
  auto a = karma::testing::random_dt_batch<double>(shape, 1, shape.context_len, true, rng);
  auto b = a;
  b.observations.row(shape.context_len - 1).array() += 1.0;
  const Mat la = net.forward(a, {}), lb = net.forward(b, {});
  EXPECT_GT((la.bottomRows(1) - lb.bottomRows(1)).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(CrossEntropy, UniformLogitsGiveLogClassCount) {
  const Mat logits = Mat::Zero(3, 6);
  Mat targets = Mat::Zero(3, 6);
  targets(0, 1) = targets(1, 5) = targets(2, 0) = 1.0;
  EXPECT_NEAR(nn::cross_entropy(logits, targets).value, std::log(6.0), 1e-12);
}

TEST(CrossEntropy, RejectsBadTargets) {
  const Mat logits = Mat::Zero(1, 3);
  Mat t = Mat::Zero(1, 3);
  EXPECT_THROW(nn::cross_entropy(logits, t), Error);
  t << 0.5, 0.7, -0.2;
  EXPECT_THROW(nn::cross_entropy(logits, t), Error);
  EXPECT_THROW(nn::cross_entropy(logits, Mat(Mat::Zero(2, 3))), Error);
}

TEST(Argmax, TiesGoToLowerIndex) {
  Mat m(3, 4);
  m << 1, 3, 3, 0,
       2, 2, 2, 2,
       0, 0, 0, 5;
  EXPECT_EQ(nn::argmax_rows(m), (std::vector<int>{1, 0, 3}));
}

TEST(Softmax, RowsSumToOne) {
  std::mt19937_64 rng(4);
  const Mat p = nn::softmax_rows(karma::testing::random_matrix(5, 6, rng, 30.0));
  for (Eigen::Index i = 0; i < p.rows(); ++i) EXPECT_NEAR(p.row(i).sum(), 1.0, 1e-12);
}

TEST(Dropout, InferenceIsIdentityAndTrainingRescales) {
  nn::Dropout<double> drop(0.5);
  std::mt19937_64 rng(1);
  const Mat x = Mat::Ones(200, 50);
  EXPECT_EQ(drop.forward(x, {}), x);
  const Mat y = drop.forward(x, {true, &rng});
  for (Eigen::Index i = 0; i < y.size(); ++i)
    EXPECT_TRUE(y.data()[i] == 0.0 || y.data()[i] == 2.0);
  EXPECT_NEAR(y.mean(), 1.0, 0.05);
  EXPECT_THROW(nn::Dropout<double>(1.0), Error);
}

TEST(AdamW, FirstStepMovesByLearningRate) {
  nn::Parameter<double> p("w", 1, 2);
  p.value << 1.0, -1.0;
  nn::Parameter<double> b("b", 1, 1, false);
  b.value << 0.5;
  nn::AdamW<double> opt({&p, &b}, {0.1, 0.9, 0.999, 1e-8, 0.1});
  p.grad << 4.0, -0.01;
  b.grad << 2.0;
  opt.step(0.1);
  // Bias-corrected first step is lr * sign(g); decay applies to `w` only.
  EXPECT_NEAR(p.value(0, 0), 1.0 * (1 - 0.01) - 0.1, 1e-6);
  EXPECT_NEAR(p.value(0, 1), -1.0 * (1 - 0.01) + 0.1, 1e-5);
  EXPECT_NEAR(b.value(0, 0), 0.4, 1e-6);
  EXPECT_EQ(opt.steps(), 1);
}

TEST(AdamW, MinimizesQuadratic) {
  nn::Parameter<double> p("w", 1, 3);
  p.value << 3.0, -2.0, 1.0;
  nn::AdamW<double> opt({&p}, {0.05, 0.9, 0.999, 1e-8, 0.0});
  for (int i = 0; i < 2000; ++i) {
    p.grad = 2.0 * p.value;
    opt.step(0.05);
  }
  EXPECT_LT(p.value.norm(), 1e-2);
}

TEST(AdamW, RejectsNonFiniteGradient) {
  nn::Parameter<double> p("w", 1, 1);
  nn::AdamW<double> opt({&p}, {});
  p.grad(0, 0) = std::nan("");
  EXPECT_THROW(opt.step(1e-3), Error);
}

TEST(CosineLr, EndpointsAndMidpoint) {
  EXPECT_DOUBLE_EQ(nn::cosine_lr(0, 100, 1e-3), 1e-3);
  EXPECT_NEAR(nn::cosine_lr(50, 100, 1e-3), 5e-4, 1e-15);
  EXPECT_NEAR(nn::cosine_lr(100, 100, 1e-3), 0.0, 1e-18);
  EXPECT_NEAR(nn::cosine_lr(25, 100, 1.0), 0.5 * (1 + std::cos(std::numbers::pi / 4)), 1e-15);
  EXPECT_THROW(nn::cosine_lr(101, 100), Error);
  EXPECT_THROW(nn::cosine_lr(0, 0), Error);
}

TEST(ClipGradNorm, ScalesToMaxNorm) {
  nn::Parameter<double> a("a", 1, 2), b("b", 1, 1);
  a.grad << 3.0, 0.0;
  b.grad << 4.0;
  const nn::ParamList<double> ps{&a, &b};
  EXPECT_DOUBLE_EQ(nn::clip_grad_norm(ps, 1.0), 5.0);
  EXPECT_NEAR(std::sqrt(a.grad.squaredNorm() + b.grad.squaredNorm()), 1.0, 1e-9);
  EXPECT_NEAR(nn::clip_grad_norm(ps, 10.0), 1.0, 1e-9);
}

TEST(Checkpoint, TensorsRoundTrip) {
  const DtShape shape = karma::testing::tiny_dt_shape();
  DecisionTransformer<float> a(shape, 1), b(shape, 2);
  nn::tensors_from_json(nn::tensors_to_json(a.parameters()), b.parameters());
  const auto pa = a.parameters(), pb = b.parameters();
  ASSERT_EQ(pa.size(), pb.size());
  for (std::size_t i = 0; i < pa.size(); ++i) EXPECT_EQ(pa[i]->value, pb[i]->value) << pa[i]->name;
}

TEST(Checkpoint, ShapeMismatchThrows) {
  DtShape small = karma::testing::tiny_dt_shape(), wide = small;
  wide.embed_dim = 16;
  DecisionTransformer<float> a(small, 1), b(wide, 1);
  EXPECT_THROW(nn::tensors_from_json(nn::tensors_to_json(a.parameters()), b.parameters()),
               Error);
}

TEST(Checkpoint, KindIsChecked) {
  const auto doc = nn::make_checkpoint("estimator", nlohmann::json::object(), nlohmann::json::array());
  EXPECT_NO_THROW(nn::checkpoint_section(doc, "estimator", "config"));
  EXPECT_THROW(nn::checkpoint_section(doc, "decision-transformer", "config"), Error);
}

TEST(DecisionTransformer, InitialLossNearLogActionCount) {
  DtShape shape = karma::testing::tiny_dt_shape();
  shape.action_count = 6;
  DecisionTransformer<double> net(shape, 3);
  std::mt19937_64 rng(3);
  const auto batch = karma::testing::random_dt_batch<double>(shape, 16, shape.context_len, false, rng);
  const auto r = nn::cross_entropy(net.forward(batch, {}), batch.actions);
  EXPECT_NEAR(r.value, std::log(6.0), 0.2);
}
