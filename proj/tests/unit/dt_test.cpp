#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>

#include "karma/dt.hpp"

using namespace karma;

namespace {

Observation make_obs(double buffer, double mbps, double remaining) {
  Observation o;
  o.buffer_s = buffer;
  o.throughput_mbps = mbps;
  o.download_s = 2.0;
  o.next_sizes_bytes = {1e5, 2e5, 3e5, 4e5, 5e5, 6e5};
  o.remaining_frac = remaining;
  return o;
}

// Actions follow the buffer level, so the mapping is learnable from o alone.
std::vector<Trajectory> toy_trajectories(std::size_t count, std::size_t length, unsigned long long seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> buf(0.0, 60.0);
  std::vector<Trajectory> out;
  for (std::size_t n = 0; n < count; ++n) {
    Trajectory tr;
    tr.trace_tag = "toy" + std::to_string(n);
    tr.action_count = 6;
    for (std::size_t t = 0; t < length; ++t) {
      const double b = buf(rng);
      tr.observations.push_back(make_obs(b, 2.0, 1.0 - static_cast<double>(t) / length));
      tr.returns.push_back(0.5);
      tr.actions.push_back(std::min(5, static_cast<int>(b / 10.0)));
    }
    out.push_back(tr);
  }
  return out;
}

DtConfig small_config(int k = 4, unsigned long long seed = 1) {
  DtConfig c = default_dt_config(6, k, 16);
  c.shape.embed_dim = 16;
  c.shape.blocks = 1;
  c.shape.mlp_ratio = 2;
  c.seed = seed;
  return c;
}

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / ("karma_dt_" + name)).string();
}

}  // namespace

TEST(Observation, ScaledVectorOrder) {
  const auto v = observation_vector(make_obs(30.0, 3.0, 0.5), {});
  ASSERT_EQ(v.size(), 10u);
  EXPECT_DOUBLE_EQ(v[0], 0.5);
  EXPECT_DOUBLE_EQ(v[1], 0.5);
  EXPECT_DOUBLE_EQ(v[2], 0.5);
  EXPECT_DOUBLE_EQ(v[3], 0.1);
  EXPECT_DOUBLE_EQ(v[8], 0.6);
  EXPECT_DOUBLE_EQ(v[9], 0.5);
}

TEST(Config, DefaultsAndJsonRoundTrip) {
  const DtConfig c = default_dt_config(6);
  EXPECT_EQ(c.shape.context_len, 4);
  EXPECT_EQ(c.shape.embed_dim, 128);
  EXPECT_EQ(c.shape.blocks, 3);
  EXPECT_EQ(c.shape.heads, 1);
  EXPECT_DOUBLE_EQ(c.shape.dropout, 0.1);
  EXPECT_EQ(c.shape.obs_dim, 10);
  EXPECT_EQ(c.shape.max_timestep, 48);
  const DtConfig back = dt_config_from_json(to_json(small_config(3, 9)));
  EXPECT_EQ(back.shape.context_len, 3);
  EXPECT_EQ(back.shape.embed_dim, 16);
  EXPECT_EQ(back.seed, 9u);
}

TEST(Window, AppendCompleteEvict) {
  TrajectoryWindow w(2);
  EXPECT_TRUE(w.empty());
  w.append(0, make_obs(1, 1, 1), 0.1);
  EXPECT_TRUE(w.pending());
  EXPECT_EQ(w.token_count(), 2u);
  EXPECT_THROW(w.append(1, make_obs(1, 1, 1), 0.1), Error);
  w.complete(3);
  EXPECT_FALSE(w.pending());
  EXPECT_EQ(w.token_count(), 3u);
  EXPECT_THROW(w.complete(1), Error);
  EXPECT_THROW(w.append(2, make_obs(1, 1, 1), 0.1), Error);
  w.append(1, make_obs(2, 1, 1), 0.2);
  w.update(4, make_obs(3, 1, 1), 0.3);
  EXPECT_EQ(w.size(), 2u);
  EXPECT_EQ(w.steps().front().timestep, 1);
  EXPECT_EQ(*w.steps().front().action, 4);
  EXPECT_EQ(w.steps().back().timestep, 2);
  EXPECT_EQ(w.token_count(), 5u);
  w.clear();
  EXPECT_TRUE(w.empty());
  EXPECT_THROW(TrajectoryWindow(0), Error);
}

TEST(Window, BatchLayout) {
  DtModel model(small_config(3));
  TrajectoryWindow w(3);
  w.append(5, make_obs(30, 3, 0.5), 0.7);
  w.update(2, make_obs(60, 6, 0.4), 0.6);
  const auto b = model.window_batch(w);
  EXPECT_EQ(b.steps, 2);
  EXPECT_TRUE(b.pending_last);
  EXPECT_EQ(b.action_steps(), 1);
  EXPECT_EQ(b.tokens_per_window(), 5);
  EXPECT_EQ(b.timesteps, (std::vector<int>{5, 6}));
  EXPECT_FLOAT_EQ(b.returns(1, 0), 0.6f);
  EXPECT_FLOAT_EQ(b.observations(1, 0), 1.0f);
  EXPECT_FLOAT_EQ(b.actions(0, 2), 1.0f);
  EXPECT_FLOAT_EQ(b.actions.sum(), 1.0f);
  EXPECT_EQ(model.tokenize(w).rows(), 5);
  EXPECT_EQ(model.logits(w).rows(), 2);
  EXPECT_THROW(model.window_batch(TrajectoryWindow(3)), Error);
}

TEST(Window, RejectsWrongObservationWidth) {
  DtModel model(small_config());
  TrajectoryWindow w(4);
  Observation o = make_obs(1, 1, 1);
  o.next_sizes_bytes.pop_back();
  w.append(0, o, 0.0);
  EXPECT_THROW(model.decide(w), Error);
}

TEST(Window, TimestepBeyondTableThrows) {
  DtModel model(small_config());
  TrajectoryWindow w(4);
  w.append(16, make_obs(1, 1, 1), 0.0);
  EXPECT_THROW(model.decide(w), Error);
}

TEST(Model, CheckpointRoundTrip) {
  DtModel a(small_config(4, 3));
  const auto path = temp_path("ckpt.json");
  a.save(path);
  DtModel b = DtModel::load(path);
  TrajectoryWindow w(4);
  w.append(0, make_obs(12, 2, 1), 0.4);
  EXPECT_EQ(a.logits(w), b.logits(w));
  EXPECT_EQ(b.config().shape.embed_dim, 16);
  std::filesystem::remove(path);
}

TEST(Segments, BatchFromTrajectories) {
  const auto trs = toy_trajectories(2, 6, 1);
  const DtConfig cfg = small_config(3);
  const std::vector<SegmentRef> segs{{1, 2}, {0, 0}};
  const auto b = make_segment_batch(trs, segs, cfg);
  EXPECT_EQ(b.batch, 2);
  EXPECT_FALSE(b.pending_last);
  EXPECT_EQ(b.timesteps, (std::vector<int>{2, 3, 4, 0, 1, 2}));
  EXPECT_FLOAT_EQ(b.actions(0, trs[1].actions[2]), 1.0f);
  EXPECT_FLOAT_EQ(b.observations(3, 0), static_cast<float>(trs[0].observations[0].buffer_s / 60.0));
  const std::vector<SegmentRef> bad{{0, 4}};
  EXPECT_THROW(make_segment_batch(trs, bad, cfg), Error);
}

TEST(Training, InitialLossNearLogSixAndDecreases) {
  const auto trs = toy_trajectories(6, 12, 2);
  DtTrainConfig t;
  t.steps = 300;
  t.batch_size = 32;
  t.lr = 3e-3;
  DtTrainReport rep;
  DtModel model = train_dt(trs, small_config(), t, &rep);
  ASSERT_EQ(rep.step_loss.size(), 300u);
  EXPECT_NEAR(rep.step_loss.front(), std::log(6.0), 0.2);
  EXPECT_LT(rep.step_loss.back(), 0.5 * rep.step_loss.front());
  EXPECT_GT(expert_action_accuracy(model, trs), 0.8);
}

TEST(Training, DeterministicForSeed) {
  const auto trs = toy_trajectories(2, 6, 3);
  DtTrainConfig t;
  t.steps = 5;
  t.batch_size = 4;
  DtTrainReport r1, r2;
  DtModel a = train_dt(trs, small_config(), t, &r1);
  DtModel b = train_dt(trs, small_config(), t, &r2);
  EXPECT_EQ(r1.step_loss, r2.step_loss);
  EXPECT_EQ(a.to_checkpoint().dump(), b.to_checkpoint().dump());
}

TEST(Training, RejectsBadInputs) {
  const DtConfig cfg = small_config();
  EXPECT_THROW(train_dt({}, cfg, {}), Error);
  EXPECT_THROW(train_dt(toy_trajectories(1, 3, 1), cfg, {}), Error);
  auto trs = toy_trajectories(1, 6, 1);
  trs[0].action_count = 5;
  EXPECT_THROW(train_dt(trs, cfg, {}), Error);
}

TEST(Policy, StreamsWithBoundedWindow) {
  const auto m = VideoManifest::standard();
  DtModel dt(default_dt_config(6, 4, m.chunk_count));
  auto cfg = dt.config();
  cfg.shape.embed_dim = 16;
  cfg.shape.blocks = 1;
  KarmaPolicy policy(DtModel(cfg), EstimatorModel(8, 1), 4);
  const SessionLog log = run_policy(policy, m, gen_synthetic_trace({2.0, 0.5, 320, 1, 1}), {}, {});
  EXPECT_EQ(static_cast<int>(log.records.size()), m.chunk_count);
  EXPECT_EQ(policy.window().size(), 4u);
  EXPECT_TRUE(policy.window().pending());
  EXPECT_EQ(policy.window().steps().back().timestep, m.chunk_count - 1);
  // A second session starts from an empty window.
  const SessionLog again = run_policy(policy, m, gen_synthetic_trace({2.0, 0.5, 320, 1, 1}), {}, {});
  EXPECT_EQ(again.records, log.records);
}
