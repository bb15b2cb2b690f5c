#include "karma/sim.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace karma {

void SimConfig::validate() const {
  if (!(buffer_cap_s > 0.0)) throw Error("buffer cap must be positive");
  if (!(link_efficiency > 0.0 && link_efficiency <= 1.0))
    throw Error("link efficiency must lie in (0, 1]");
  if (!(initial_throughput_mbps > 0.0))
    throw Error("initial throughput prior must be positive");
}

nlohmann::json to_json(const SimConfig& c) {
  return {{"buffer_cap_s", c.buffer_cap_s},
          {"link_efficiency", c.link_efficiency},
          {"initial_throughput_mbps", c.initial_throughput_mbps}};
}

SimConfig sim_config_from_json(const nlohmann::json& doc) {
  SimConfig c;
  c.buffer_cap_s = doc.value("buffer_cap_s", c.buffer_cap_s);
  c.link_efficiency = doc.value("link_efficiency", c.link_efficiency);
  c.initial_throughput_mbps =
      doc.value("initial_throughput_mbps", c.initial_throughput_mbps);
  c.validate();
  return c;
}

double SessionState::trace_cursor(const NetworkTrace& trace) const {
  return std::fmod(trace_offset_s + wall_clock_s, trace.period_s());
}

nlohmann::json to_json(const Observation& o) {
  return {{"buffer_s", o.buffer_s},
          {"throughput_mbps", o.throughput_mbps},
          {"download_s", o.download_s},
          {"next_sizes_bytes", o.next_sizes_bytes},
          {"remaining_frac", o.remaining_frac}};
}

Observation observation_from_json(const nlohmann::json& doc) {
  Observation o;
  o.buffer_s = doc.at("buffer_s").get<double>();
  o.throughput_mbps = doc.at("throughput_mbps").get<double>();
  o.download_s = doc.at("download_s").get<double>();
  o.next_sizes_bytes = doc.at("next_sizes_bytes").get<std::vector<double>>();
  o.remaining_frac = doc.at("remaining_frac").get<double>();
  return o;
}

double transfer_time(const NetworkTrace& trace, double trace_time_s, double bits,
                     double link_efficiency) {
  const auto& pts = trace.points();
  const double period = trace.period_s();
  double pos = std::fmod(trace_time_s, period);
  std::size_t seg = trace.segment_at(pos);
  double elapsed = 0.0;
  double remaining = bits;
  while (true) {
    const double rate = pts[seg].throughput_mbps * 1e6 * link_efficiency;
    const double span = trace.segment_end(seg) - pos;
    const double capacity = span * rate;
    if (capacity >= remaining) return elapsed + remaining / rate;
    remaining -= capacity;
    elapsed += span;
    if (++seg == pts.size()) {
      seg = 0;
      pos = 0.0;
      // Skip whole loops in one go for long transfers on short traces.
      double loop_bits = 0.0;
      for (std::size_t i = 0; i < pts.size(); ++i)
        loop_bits += (trace.segment_end(i) - pts[i].time_s) *
                     pts[i].throughput_mbps * 1e6 * link_efficiency;
      if (remaining > loop_bits) {
        const double loops = std::floor(remaining / loop_bits);
        remaining -= loops * loop_bits;
        elapsed += loops * period;
        if (remaining <= 0.0) return elapsed;
      }
    } else {
      pos = pts[seg].time_s;
    }
  }
}

ChunkOutcome buffer_dynamics(double buffer_s, double download_s,
                             double chunk_duration_s, double buffer_cap_s,
                             bool startup) {
  ChunkOutcome out;
  out.download_s = download_s;
  out.rebuffer_s = startup ? 0.0 : std::max(0.0, download_s - buffer_s);
  double after = std::max(buffer_s - download_s, 0.0) + chunk_duration_s;
  if (after > buffer_cap_s) {
    out.sleep_s = after - buffer_cap_s;
    after = buffer_cap_s;
  }
  out.buffer_after_s = after;
  return out;
}

SessionState init_session(const VideoManifest& manifest, const NetworkTrace& trace,
                          const SimConfig& config) {
  manifest.validate();
  config.validate();
  if (trace.size() < 2 || trace.period_s() < 1.0)
    throw Error("trace holds less than 1 s of content");
  return SessionState{};
}

Observation initial_observation(const VideoManifest& manifest,
                                const SimConfig& config) {
  Observation o;
  o.buffer_s = 0.0;
  o.throughput_mbps = config.initial_throughput_mbps;
  o.download_s = 0.0;
  o.next_sizes_bytes.resize(manifest.ladder.size());
  for (int l = 0; l < manifest.level_count(); ++l)
    o.next_sizes_bytes[l] = manifest.chunk_bytes(0, l);
  o.remaining_frac = 1.0;
  return o;
}

StepResult step(const SessionState& state, int level, const VideoManifest& manifest,
                const NetworkTrace& trace, const SimConfig& config,
                const QoeParams& params) {
  if (state.next_chunk >= manifest.chunk_count)
    throw Error("session already downloaded every chunk");
  if (level < 0 || level >= manifest.level_count())
    throw Error("level " + std::to_string(level) + " outside the ladder");

  const int chunk = state.next_chunk;
  const double bytes = manifest.chunk_bytes(chunk, level);
  const double bits = bytes * 8.0;
  const bool startup = !state.last_level.has_value();
  const double d =
      transfer_time(trace, state.trace_cursor(trace), bits, config.link_efficiency);
  const ChunkOutcome out = buffer_dynamics(state.buffer_s, d, manifest.chunk_duration_s,
                                           config.buffer_cap_s, startup);

  StepResult r;
  r.state = state;
  r.state.next_chunk = chunk + 1;
  r.state.buffer_s = out.buffer_after_s;
  r.state.wall_clock_s = state.wall_clock_s + d + out.sleep_s;
  r.state.total_rebuffer_s += out.rebuffer_s;
  r.state.total_sleep_s += out.sleep_s;
  if (startup) r.state.startup_delay_s = d;
  r.state.last_level = level;

  const std::optional<double> previous =
      state.last_level ? std::optional<double>(manifest.ladder[*state.last_level])
                       : std::nullopt;
  r.record.chunk_index = chunk;
  r.record.chosen_level = level;
  r.record.bitrate_kbps = manifest.ladder[level];
  r.record.rebuffer_s = out.rebuffer_s;
  r.record.download_s = d;
  r.record.throughput_mbps = bits / d / 1e6;
  r.record.buffer_after_s = out.buffer_after_s;
  r.record.sleep_s = out.sleep_s;
  r.record.qoe_value =
      chunk_qoe(r.record.bitrate_kbps, previous, out.rebuffer_s, params);

  Observation& o = r.observation;
  o.buffer_s = out.buffer_after_s;
  o.throughput_mbps = r.record.throughput_mbps;
  o.download_s = d;
  o.next_sizes_bytes.assign(manifest.ladder.size(), 0.0);
  if (chunk + 1 < manifest.chunk_count)
    for (int l = 0; l < manifest.level_count(); ++l)
      o.next_sizes_bytes[l] = manifest.chunk_bytes(chunk + 1, l);
  o.remaining_frac = static_cast<double>(manifest.chunk_count - (chunk + 1)) /
                     static_cast<double>(manifest.chunk_count);
  return r;
}

SessionLog run_policy(AbrPolicy& policy, const VideoManifest& manifest,
                      const NetworkTrace& trace, const SimConfig& config,
                      const QoeParams& params) {
  SessionLog log;
  log.algorithm = policy.name();
  log.trace_tag = trace.source_tag();
  SessionState state = init_session(manifest, trace, config);
  Observation obs = initial_observation(manifest, config);
  policy.begin_session(manifest, trace);
  log.records.reserve(manifest.chunk_count);
  log.observations.reserve(manifest.chunk_count);
  while (!state.done(manifest)) {
    log.observations.push_back(obs);
    const int level = policy.choose({state, obs, log.records, manifest});
    if (level < 0 || level >= manifest.level_count())
      throw Error(policy.name() + " chose invalid level " + std::to_string(level) +
                  " at chunk " + std::to_string(state.next_chunk));
    StepResult r = step(state, level, manifest, trace, config, params);
    log.records.push_back(r.record);
    obs = std::move(r.observation);
    state = r.state;
  }
  log.final_state = state;
  return log;
}

SessionLog run_actions(std::span<const int> actions, const VideoManifest& manifest,
                       const NetworkTrace& trace, const SimConfig& config,
                       const QoeParams& params) {
  if (actions.size() != static_cast<std::size_t>(manifest.chunk_count))
    throw Error("action sequence length differs from chunk count");
  FunctionPolicy replay("replay", [&](const DecisionContext& ctx) {
    return actions[static_cast<std::size_t>(ctx.state.next_chunk)];
  });
  return run_policy(replay, manifest, trace, config, params);
}

std::string session_log_jsonl(const SessionLog& log) {
  std::string out;
  for (const auto& r : log.records) {
    out += to_json(r).dump();
    out += '\n';
  }
  return out;
}

std::vector<ChunkRecord> parse_session_log_jsonl(const std::string& text) {
  std::vector<ChunkRecord> records;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      records.push_back(chunk_record_from_json(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(e.what(), line_no);
    }
  }
  return records;
}

}  // namespace karma
