#include "karma/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace karma {

void BbConfig::validate() const {
  if (reservoir_s < 0.0) throw Error("BB reservoir must be non-negative");
  if (!(cushion_s > 0.0)) throw Error("BB cushion must be positive");
}

int bb_decide(double buffer_s, const BitrateLadder& ladder, const BbConfig& config) {
  if (buffer_s < 0.0) throw Error("buffer level must be non-negative");
  const int top = static_cast<int>(ladder.size()) - 1;
  if (buffer_s < config.reservoir_s) return 0;
  if (buffer_s > config.reservoir_s + config.cushion_s) return top;
  const double frac = (buffer_s - config.reservoir_s) / config.cushion_s;
  const double target = ladder.lowest() + frac * (ladder.highest() - ladder.lowest());
  return ladder.highest_at_most(target);
}

double harmonic_mean(std::span<const double> values) {
  if (values.empty()) throw Error("harmonic mean of an empty window");
  double inv = 0.0;
  for (double v : values) {
    if (!(v > 0.0)) throw Error("harmonic mean needs positive values");
    inv += 1.0 / v;
  }
  return static_cast<double>(values.size()) / inv;
}

int rb_decide(double predicted_mbps, const BitrateLadder& ladder) {
  return ladder.highest_at_most(predicted_mbps * 1000.0);
}

void MpcConfig::validate() const {
  if (horizon < 1) throw Error("MPC horizon must be at least 1");
  if (error_window < 1 || history_window < 1) throw Error("MPC windows must be at least 1");
}

RobustPrediction robust_prediction(std::span<const double> history,
                                   std::span<const double> past_errors,
                                   const MpcConfig& config) {
  if (history.empty()) throw Error("robust MPC needs at least one throughput measurement");
  RobustPrediction p;
  const auto window = std::min<std::size_t>(history.size(), config.history_window);
  p.harmonic_mbps = harmonic_mean(history.subspan(history.size() - window));
  const auto errs = std::min<std::size_t>(past_errors.size(), config.error_window);
  for (double e : past_errors.subspan(past_errors.size() - errs)) p.max_error = std::max(p.max_error, e);
  p.effective_mbps = p.harmonic_mbps / (1.0 + p.max_error);
  return p;
}

namespace {

struct SearchState {
  const VideoManifest& manifest;
  const QoeParams& params;
  const SimConfig& sim;
  double rate_bps;
  int first_chunk;
  int depth;
  std::vector<int> seq;
  std::vector<int> best_seq;
  double best = -std::numeric_limits<double>::infinity();

  void run(int i, double buffer, int last_level, double acc) {
    if (i == depth) {
      if (acc > best) {
        best = acc;
        best_seq = seq;
      }
      return;
    }
    const int chunk = first_chunk + i;
    for (int level = 0; level < manifest.level_count(); ++level) {
      const double d = manifest.chunk_bytes(chunk, level) * 8.0 / rate_bps;
      const bool startup = last_level < 0;
      const ChunkOutcome out =
          buffer_dynamics(buffer, d, manifest.chunk_duration_s, sim.buffer_cap_s, startup);
      const std::optional<double> previous =
          startup ? std::nullopt : std::optional<double>(manifest.ladder[last_level]);
      const double q = chunk_qoe(manifest.ladder[level], previous, out.rebuffer_s, params);
      seq[static_cast<std::size_t>(i)] = level;
      run(i + 1, out.buffer_after_s, level, acc + q);
    }
  }
};

}  // namespace

int mpc_search(const SessionState& state, const VideoManifest& manifest, double effective_mbps,
               int horizon, const QoeParams& params, const SimConfig& sim) {
  if (!(effective_mbps > 0.0)) throw Error("MPC throughput prediction must be positive");
  const int remaining = manifest.chunk_count - state.next_chunk;
  if (remaining <= 0) throw Error("MPC called after the last chunk");
  SearchState s{manifest, params, sim, effective_mbps * 1e6, state.next_chunk,
                std::min(horizon, remaining), {}, {}};
  s.seq.assign(static_cast<std::size_t>(s.depth), 0);
  s.run(0, state.buffer_s, state.last_level ? *state.last_level : -1, 0.0);
  return s.best_seq.front();
}

int robust_mpc_decide(const SessionState& state, const VideoManifest& manifest,
                      std::span<const double> history, std::span<const double> past_errors,
                      const MpcConfig& config, const QoeParams& params, const SimConfig& sim) {
  const RobustPrediction p = robust_prediction(history, past_errors, config);
  return mpc_search(state, manifest, p.effective_mbps, config.horizon, params, sim);
}

std::vector<double> recent_throughputs(std::span<const ChunkRecord> history, int count) {
  const auto n = std::min<std::size_t>(history.size(), static_cast<std::size_t>(std::max(count, 0)));
  std::vector<double> out;
  out.reserve(n);
  for (std::size_t i = history.size() - n; i < history.size(); ++i)
    out.push_back(history[i].throughput_mbps);
  return out;
}

int BufferBasedPolicy::choose(const DecisionContext& ctx) {
  return bb_decide(ctx.state.buffer_s, ctx.manifest.ladder, config_);
}

int RateBasedPolicy::choose(const DecisionContext& ctx) {
  if (ctx.history.empty()) return 0;
  const auto recent = recent_throughputs(ctx.history, window_);
  return rb_decide(harmonic_mean(recent), ctx.manifest.ladder);
}

void RobustMpcPolicy::begin_session(const VideoManifest&, const NetworkTrace&) {
  errors_.clear();
  last_prediction_.reset();
}

int RobustMpcPolicy::choose(const DecisionContext& ctx) {
  if (ctx.history.empty()) return 0;
  const double actual = ctx.history.back().throughput_mbps;
  if (last_prediction_) errors_.push_back(std::abs(*last_prediction_ - actual) / actual);
  const auto recent = recent_throughputs(ctx.history, config_.history_window);
  const RobustPrediction p = robust_prediction(recent, errors_, config_);
  last_prediction_ = p.harmonic_mbps;
  return mpc_search(ctx.state, ctx.manifest, p.effective_mbps, config_.horizon, params_, sim_);
}

void OfflineOptimalPolicy::begin_session(const VideoManifest& manifest,
                                         const NetworkTrace& trace) {
  const SessionState start = init_session(manifest, trace, sim_);
  actions_ = dp_plan(manifest, trace, params_, sim_, start, dp_).actions;
}

int OfflineOptimalPolicy::choose(const DecisionContext& ctx) {
  return actions_.at(static_cast<std::size_t>(ctx.state.next_chunk));
}

}  // namespace karma
