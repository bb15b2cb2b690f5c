#pragma once

#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "karma/qoe.hpp"
#include "karma/trace.hpp"

namespace karma {

struct SimConfig {
  double buffer_cap_s = 60.0;
  double link_efficiency = 1.0;
  /// c_0 reported before any chunk has been measured.
  double initial_throughput_mbps = 1.0;

  void validate() const;
};

nlohmann::json to_json(const SimConfig& config);
SimConfig sim_config_from_json(const nlohmann::json& doc);

struct SessionState {
  int next_chunk = 0;
  double buffer_s = 0.0;
  std::optional<int> last_level;  // empty until chunk 0 is fetched
  double wall_clock_s = 0.0;
  double trace_offset_s = 0.0;  // trace time at wall clock 0
  double total_rebuffer_s = 0.0;
  double total_sleep_s = 0.0;
  double startup_delay_s = 0.0;

  /// Position within one loop of `trace`.
  double trace_cursor(const NetworkTrace& trace) const;
  bool done(const VideoManifest& manifest) const {
    return next_chunk >= manifest.chunk_count;
  }
};

/// What a policy sees before choosing the next chunk's level.
struct Observation {
  double buffer_s = 0.0;           // b_t
  double throughput_mbps = 0.0;    // c_t, last measured
  double download_s = 0.0;         // d_t, last chunk
  std::vector<double> next_sizes_bytes;  // e_t, zeros after the last chunk
  double remaining_frac = 0.0;     // f_t

  bool operator==(const Observation&) const = default;
};

nlohmann::json to_json(const Observation& obs);
Observation observation_from_json(const nlohmann::json& doc);

/// Seconds to move `bits` starting at trace-relative time `trace_time_s`,
/// under the fluid model; the trace wraps when exhausted.
double transfer_time(const NetworkTrace& trace, double trace_time_s, double bits,
                     double link_efficiency = 1.0);

struct ChunkOutcome {
  double download_s = 0.0;
  double rebuffer_s = 0.0;
  double sleep_s = 0.0;
  double buffer_after_s = 0.0;
};

/// Buffer dynamics for one chunk given its download time. During startup
/// the download is not counted as rebuffering.
ChunkOutcome buffer_dynamics(double buffer_s, double download_s,
                             double chunk_duration_s, double buffer_cap_s,
                             bool startup);

SessionState init_session(const VideoManifest& manifest, const NetworkTrace& trace,
                          const SimConfig& config);
Observation initial_observation(const VideoManifest& manifest,
                                const SimConfig& config);

struct StepResult {
  Observation observation;  // for the next decision
  ChunkRecord record;
  SessionState state;
};

StepResult step(const SessionState& state, int level, const VideoManifest& manifest,
                const NetworkTrace& trace, const SimConfig& config,
                const QoeParams& params);

struct DecisionContext {
  const SessionState& state;
  const Observation& observation;
  std::span<const ChunkRecord> history;
  const VideoManifest& manifest;
};

/// A bitrate controller. One instance drives one session at a time.
class AbrPolicy {
 public:
  virtual ~AbrPolicy() = default;
  virtual std::string name() const = 0;
  virtual void begin_session(const VideoManifest&, const NetworkTrace&) {}
  virtual int choose(const DecisionContext& context) = 0;
};

class FunctionPolicy final : public AbrPolicy {
 public:
  using Fn = std::function<int(const DecisionContext&)>;
  FunctionPolicy(std::string name, Fn fn) : name_(std::move(name)), fn_(std::move(fn)) {}

  std::string name() const override { return name_; }
  int choose(const DecisionContext& context) override { return fn_(context); }

 private:
  std::string name_;
  Fn fn_;
};

struct SessionLog {
  std::string algorithm;
  std::string trace_tag;
  std::vector<ChunkRecord> records;
  std::vector<Observation> observations;  // observations[t] preceded decision t
  SessionState final_state;
};

SessionLog run_policy(AbrPolicy& policy, const VideoManifest& manifest,
                      const NetworkTrace& trace, const SimConfig& config,
                      const QoeParams& params);

/// Replays a fixed action sequence.
SessionLog run_actions(std::span<const int> actions, const VideoManifest& manifest,
                       const NetworkTrace& trace, const SimConfig& config,
                       const QoeParams& params);

std::string session_log_jsonl(const SessionLog& log);
std::vector<ChunkRecord> parse_session_log_jsonl(const std::string& text);

}  // namespace karma
