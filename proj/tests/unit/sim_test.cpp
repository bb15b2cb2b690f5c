#include <gtest/gtest.h>

#include <random>

#include "karma/sim.hpp"

using namespace karma;

namespace {

NetworkTrace constant(double mbps) { return gen_synthetic_trace({mbps, 0.0, 30, 1, 0}); }

SessionState steady(double buffer) {
  SessionState s;
  s.buffer_s = buffer;
  s.last_level = 0;
  return s;
}

}  // namespace

TEST(Init, FreshState) {
  const auto m = VideoManifest::standard();
  const auto s = init_session(m, constant(1.0), {});
  EXPECT_EQ(s.buffer_s, 0.0);
  EXPECT_EQ(s.next_chunk, 0);
  EXPECT_FALSE(s.last_level);
  EXPECT_EQ(initial_observation(m, {}).remaining_frac, 1.0);
  EXPECT_THROW(init_session(m, parse_cooked_trace("0 1\n0.25 1"), {}), Error);
}

TEST(Step, FluidDownloadWithoutStall) {
  const auto m = VideoManifest::standard();
  const auto r = step(steady(4.0), 0, m, constant(1.0), {}, {});
  EXPECT_NEAR(r.record.download_s, 1.2, 1e-12);
  EXPECT_EQ(r.record.rebuffer_s, 0.0);
  EXPECT_NEAR(r.state.buffer_s, 6.8, 1e-12);
  EXPECT_NEAR(r.record.throughput_mbps, 1.0, 1e-12);
}

TEST(Step, StallWhenBufferRunsDry) {
  const auto m = VideoManifest::standard();
  const auto r = step(steady(0.5), 0, m, constant(1.0), {}, {});
  EXPECT_NEAR(r.record.rebuffer_s, 0.7, 1e-12);
  EXPECT_NEAR(r.state.buffer_s, 4.0, 1e-12);
}

TEST(BufferDynamics, SleepsAtCap) {
  const auto out = buffer_dynamics(59.0, 1.0, 4.0, 60.0, false);
  EXPECT_NEAR(out.sleep_s, 2.0, 1e-12);
  EXPECT_NEAR(out.buffer_after_s, 60.0, 1e-12);
  EXPECT_EQ(out.rebuffer_s, 0.0);
}

TEST(BufferDynamics, StartupIsNotRebuffer) {
  const auto out = buffer_dynamics(0.0, 3.0, 4.0, 60.0, true);
  EXPECT_EQ(out.rebuffer_s, 0.0);
  EXPECT_EQ(out.buffer_after_s, 4.0);
}

TEST(TransferTime, CrossesSegmentsAndLoops) {
  // 1 Mbps for 1 s then 3 Mbps for 1 s, repeating.
  const auto t = parse_cooked_trace("0 1\n1 3");
  EXPECT_NEAR(transfer_time(t, 0.0, 2e6), 1.0 + 1.0 / 3.0, 1e-12);
  EXPECT_NEAR(transfer_time(t, 1.5, 2e6), 1.0, 1e-12);
  // Several whole loops of 4 Mb each.
  EXPECT_NEAR(transfer_time(t, 0.0, 4e6 * 10 + 1e6), 21.0, 1e-9);
  EXPECT_NEAR(transfer_time(t, 0.0, 2e6, 0.5), 2.0, 1e-12);
}

TEST(TransferTime, DoublingBandwidthHalvesTime) {
  const auto t = gen_synthetic_trace({2.0, 1.0, 60, 1, 3});
  const auto fast = t.scaled(2.0, 0.5);
  for (double bits : {1e5, 2.4e6, 3.3e7})
    for (double at : {0.0, 7.25, 31.5}) {
      const double d = transfer_time(t, at, bits);
      EXPECT_NEAR(transfer_time(fast, at / 2.0, bits), d / 2.0, 1e-9 * d);
    }
}

TEST(RunPolicy, LowestLevelOnFastLinkNeverStalls) {
  const auto m = VideoManifest::standard();
  FunctionPolicy lowest("lowest", [](const DecisionContext&) { return 0; });
  const auto log = run_policy(lowest, m, constant(10.0), {}, {});
  ASSERT_EQ(log.records.size(), 48u);
  for (const auto& r : log.records) EXPECT_EQ(r.rebuffer_s, 0.0);
  EXPECT_EQ(run_policy(lowest, m, constant(10.0), {}, {}).records, log.records);
}

TEST(RunPolicy, InvalidLevelNamesChunk) {
  const auto m = VideoManifest::standard();
  FunctionPolicy bad("bad", [](const DecisionContext& c) { return c.state.next_chunk == 3 ? 9 : 0; });
  try {
    run_policy(bad, m, constant(5.0), {}, {});
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("chunk 3"), std::string::npos);
  }
}

TEST(RunPolicy, ObservationsFollowRecords) {
  const auto m = VideoManifest::standard();
  FunctionPolicy alt("alt", [](const DecisionContext& c) { return c.state.next_chunk % 6; });
  const auto log = run_policy(alt, m, gen_synthetic_trace({2, 1, 100, 1, 2}), {}, {});
  for (std::size_t t = 1; t < log.records.size(); ++t) {
    const auto& o = log.observations[t];
    EXPECT_EQ(o.buffer_s, log.records[t - 1].buffer_after_s);
    EXPECT_EQ(o.download_s, log.records[t - 1].download_s);
    EXPECT_DOUBLE_EQ(o.remaining_frac, (48.0 - t) / 48.0);
    EXPECT_EQ(o.next_sizes_bytes.size(), 6u);
  }
}

TEST(Conservation, RandomSessions) {
  const auto m = VideoManifest::standard(0.2, 1);
  std::mt19937_64 rng(5);
  for (int n = 0; n < 50; ++n) {
    const auto trace = gen_synthetic_trace({0.3 + 0.2 * n, 0.3 * (n % 5), 200, 1, static_cast<unsigned long long>(n)});
    FunctionPolicy random("random", [&](const DecisionContext&) {
      return std::uniform_int_distribution<int>(0, 5)(rng);
    });
    const auto log = run_policy(random, m, trace, {}, {});
    const auto& s = log.final_state;
    double elapsed = 0.0, rebuffer = 0.0;
    for (const auto& r : log.records) {
      EXPECT_GE(r.rebuffer_s, 0.0);
      EXPECT_LE(r.buffer_after_s, 60.0);
      elapsed += r.download_s + r.sleep_s;
      rebuffer += r.rebuffer_s;
    }
    EXPECT_NEAR(s.wall_clock_s, elapsed, 1e-6);
    const double played = s.wall_clock_s - rebuffer - s.startup_delay_s;
    EXPECT_NEAR(48 * 4.0, s.buffer_s + played, 1e-6);
  }
}

TEST(SessionLog, JsonLinesRoundTrip) {
  const auto m = VideoManifest::standard();
  FunctionPolicy top("top", [](const DecisionContext&) { return 5; });
  const auto log = run_policy(top, m, gen_synthetic_trace({3, 1, 100, 1, 2}), {}, {});
  EXPECT_EQ(parse_session_log_jsonl(session_log_jsonl(log)), log.records);
  EXPECT_THROW(parse_session_log_jsonl("{\"chunk_index\": 0}\nnot json"), ParseError);
}
