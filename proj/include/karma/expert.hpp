#pragma once

#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "karma/qoe.hpp"
#include "karma/sim.hpp"
#include "karma/trace.hpp"

namespace karma {

/// Discretization of the planner's state space.
///
/// States are bucketed by (quantized buffer, last level, quantized wall
/// time); each bucket keeps its best-valued exact state. The planner is
/// exact whenever distinct reachable states never share a bucket, e.g. when
/// every reachable buffer and wall time is a multiple of the quanta.
struct DpConfig {
  double buffer_quantum_s = 0.5;
  double time_quantum_s = 0.5;
  double max_time_s = 0.0;            // 0: unlimited
  std::size_t max_states = 4'000'000;  // per chunk stage

  void validate() const;
};

/// Upper bound on how far below the exhaustive optimum a plan may land on
/// instances whose states do not fall on the quantization grid:
/// remaining * rebuffer_penalty * (buffer_quantum + time_quantum * (1 + r)),
/// where r is the trace's max/min throughput ratio. Each merge moves the
/// surviving state's playback deadline by under one buffer plus one time
/// quantum and its download finish by under r time quanta.
double dp_discretization_bound(int remaining_chunks, const QoeParams& params,
                               const DpConfig& config, const NetworkTrace& trace);

struct Plan {
  std::vector<int> actions;  // one per remaining chunk
  double total_qoe = 0.0;    // unscaled sum over remaining chunks
  /// value_to_go[i] is the QoE still to come before remaining chunk i is
  /// fetched; the last entry is 0.
  std::vector<double> value_to_go;
  std::size_t peak_states = 0;
};

/// Forward dynamic program over the simulator's fluid model from
/// `start`. Maximizes the unscaled QoE sum of the remaining chunks.
Plan dp_plan(const VideoManifest& manifest, const NetworkTrace& trace,
             const QoeParams& params, const SimConfig& sim, const SessionState& start,
             const DpConfig& config = {});

/// lambda * optimal remaining QoE (chunk `state.next_chunk` included).
double qoe_to_go_truth(const VideoManifest& manifest, const NetworkTrace& trace,
                       const QoeParams& params, const SimConfig& sim,
                       const SessionState& state, const DpConfig& config = {});

/// Replays a plan from `start` and returns the records it produces.
std::vector<ChunkRecord> simulate_plan(std::span<const int> actions,
                                       const VideoManifest& manifest,
                                       const NetworkTrace& trace, const QoeParams& params,
                                       const SimConfig& sim, const SessionState& start);

/// Source of the return modality of expert trajectories.
class ReturnEstimator {
 public:
  virtual ~ReturnEstimator() = default;
  /// R-hat for the decision that follows `history`, made on `observation`.
  virtual double estimate_return(std::span<const ChunkRecord> history,
                                 const Observation& observation) const = 0;
};

/// (observation, estimated QoE-to-go, optimal action) per chunk.
struct Trajectory {
  std::string trace_tag;
  std::vector<Observation> observations;
  std::vector<double> returns;
  std::vector<int> actions;
  int action_count = 0;

  std::size_t length() const { return actions.size(); }
  std::size_t token_count() const { return 3 * actions.size(); }
  std::vector<double> one_hot(std::size_t t) const;
};

nlohmann::json to_json(const Trajectory& trajectory);
Trajectory trajectory_from_json(const nlohmann::json& doc);
void save_trajectories(const std::vector<Trajectory>& trajectories, const std::string& path);
std::vector<Trajectory> load_trajectories(const std::string& path);

/// DP-optimal session on every trace, planned once from the initial state.
std::vector<SessionLog> expert_sessions(std::span<const NetworkTrace> traces,
                                        const VideoManifest& manifest, const QoeParams& params,
                                        const SimConfig& sim, const DpConfig& config = {});

/// One trajectory per session; R-hat at chunk t sees only records before t.
std::vector<Trajectory> trajectories_from_sessions(std::span<const SessionLog> sessions,
                                                   int action_count,
                                                   const ReturnEstimator& estimator);

/// Runs the DP-optimal session on every trace, labelling each step with
/// the estimator's R-hat (not the DP truth).
std::vector<Trajectory> build_expert_trajectories(std::span<const NetworkTrace> traces,
                                                  const VideoManifest& manifest,
                                                  const QoeParams& params,
                                                  const SimConfig& sim,
                                                  const ReturnEstimator& estimator,
                                                  const DpConfig& config = {});

}  // namespace karma
