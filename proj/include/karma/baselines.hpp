#pragma once

#include <deque>
#include <span>
#include <vector>

#include "karma/expert.hpp"
#include "karma/qoe.hpp"
#include "karma/sim.hpp"

namespace karma {

struct BbConfig {
  double reservoir_s = 5.0;
  double cushion_s = 10.0;

  void validate() const;
};

/// Buffer-based rule: lowest level inside the reservoir, highest above the
/// cushion, and in between the highest level not above a rate that grows
/// linearly from the lowest to the highest bitrate across the cushion.
int bb_decide(double buffer_s, const BitrateLadder& ladder, const BbConfig& config = {});

double harmonic_mean(std::span<const double> values);

/// Highest level whose bitrate fits under `predicted_mbps`; level 0 if none.
int rb_decide(double predicted_mbps, const BitrateLadder& ladder);

struct MpcConfig {
  int horizon = 5;        // chunks searched ahead
  int error_window = 5;   // past prediction errors considered
  int history_window = 5; // measurements in the harmonic mean

  void validate() const;
};

struct RobustPrediction {
  double harmonic_mbps = 0.0;
  double max_error = 0.0;
  double effective_mbps = 0.0;  // harmonic / (1 + max_error)
};

RobustPrediction robust_prediction(std::span<const double> throughput_history_mbps,
                                   std::span<const double> past_errors,
                                   const MpcConfig& config = {});

/// First action of the QoE-maximizing level sequence over the horizon,
/// found by exhaustive search under a constant throughput of
/// `effective_mbps`. Ties go to the lexicographically lowest sequence.
int mpc_search(const SessionState& state, const VideoManifest& manifest, double effective_mbps,
               int horizon, const QoeParams& params, const SimConfig& sim);

int robust_mpc_decide(const SessionState& state, const VideoManifest& manifest,
                      std::span<const double> throughput_history_mbps,
                      std::span<const double> past_errors, const MpcConfig& config,
                      const QoeParams& params, const SimConfig& sim);

class BufferBasedPolicy final : public AbrPolicy {
 public:
  explicit BufferBasedPolicy(BbConfig config = {}) : config_(config) { config_.validate(); }
  std::string name() const override { return "bb"; }
  int choose(const DecisionContext& ctx) override;

 private:
  BbConfig config_;
};

class RateBasedPolicy final : public AbrPolicy {
 public:
  explicit RateBasedPolicy(int history_window = 5) : window_(history_window) {}
  std::string name() const override { return "rb"; }
  int choose(const DecisionContext& ctx) override;

 private:
  int window_;
};

class RobustMpcPolicy final : public AbrPolicy {
 public:
  RobustMpcPolicy(MpcConfig config, QoeParams params, SimConfig sim)
      : config_(config), params_(params), sim_(sim) {
    config_.validate();
  }
  std::string name() const override { return "robust_mpc"; }
  void begin_session(const VideoManifest&, const NetworkTrace&) override;
  int choose(const DecisionContext& ctx) override;

 private:
  MpcConfig config_;
  QoeParams params_;
  SimConfig sim_;
  std::vector<double> errors_;
  std::optional<double> last_prediction_;
};

/// Offline optimum: plans the whole session on the known trace.
class OfflineOptimalPolicy final : public AbrPolicy {
 public:
  OfflineOptimalPolicy(QoeParams params, SimConfig sim, DpConfig dp = {})
      : params_(params), sim_(sim), dp_(dp) {}
  std::string name() const override { return "dp"; }
  void begin_session(const VideoManifest& manifest, const NetworkTrace& trace) override;
  int choose(const DecisionContext& ctx) override;

 private:
  QoeParams params_;
  SimConfig sim_;
  DpConfig dp_;
  std::vector<int> actions_;
};

/// Last `count` measured throughputs, oldest first.
std::vector<double> recent_throughputs(std::span<const ChunkRecord> history, int count);

}  // namespace karma
