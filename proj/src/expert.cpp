#include "karma/expert.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <unordered_map>

namespace karma {

void DpConfig::validate() const {
  if (!(buffer_quantum_s > 0.0) || !(time_quantum_s > 0.0))
    throw Error("DP quanta must be positive");
  if (max_time_s < 0.0) throw Error("DP max_time_s must be non-negative");
  if (max_states == 0) throw Error("DP state budget must be positive");
}

double dp_discretization_bound(int remaining_chunks, const QoeParams& params,
                               const DpConfig& config, const NetworkTrace& trace) {
  double hi = 0.0;
  for (const auto& p : trace.points()) hi = std::max(hi, p.throughput_mbps);
  const double ratio = hi / trace.min_mbps();
  return remaining_chunks * params.rebuffer_penalty *
         (config.buffer_quantum_s + config.time_quantum_s * (1.0 + ratio));
}

namespace {

struct Node {
  double value;
  double buffer_s;
  double wall_s;
  int last_level;  // -1 before the first chunk
  int parent;      // index into the previous stage
  int action;
  double qoe;
};

struct BucketKey {
  long long buffer;
  long long time;
  int level;
  bool operator==(const BucketKey&) const = default;
};

struct BucketHash {
  std::size_t operator()(const BucketKey& k) const noexcept {
    std::size_t h = std::hash<long long>{}(k.buffer);
    h ^= std::hash<long long>{}(k.time) + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
    h ^= std::hash<int>{}(k.level) + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
    return h;
  }
};

}  // namespace

Plan dp_plan(const VideoManifest& manifest, const NetworkTrace& trace,
             const QoeParams& params, const SimConfig& sim, const SessionState& start,
             const DpConfig& config) {
  config.validate();
  sim.validate();
  Plan plan;
  const int first = start.next_chunk;
  const int remaining = manifest.chunk_count - first;
  if (remaining < 0) throw Error("DP start state lies beyond the last chunk");
  if (remaining == 0) {
    plan.value_to_go = {0.0};
    return plan;
  }

  const int levels = manifest.level_count();
  const double period = trace.period_s();
  std::vector<std::vector<Node>> stages(static_cast<std::size_t>(remaining) + 1);
  stages[0].push_back({0.0, start.buffer_s, start.wall_clock_s,
                       start.last_level ? *start.last_level : -1, -1, -1, 0.0});

  std::unordered_map<BucketKey, int, BucketHash> index;
  for (int s = 0; s < remaining; ++s) {
    const int chunk = first + s;
    const auto& current = stages[static_cast<std::size_t>(s)];
    auto& next = stages[static_cast<std::size_t>(s) + 1];
    index.clear();
    index.reserve(current.size() * static_cast<std::size_t>(levels));
    for (int n = 0; n < static_cast<int>(current.size()); ++n) {
      const Node& node = current[static_cast<std::size_t>(n)];
      const double cursor = std::fmod(start.trace_offset_s + node.wall_s, period);
      const bool startup = node.last_level < 0;
      const std::optional<double> previous =
          startup ? std::nullopt : std::optional<double>(manifest.ladder[node.last_level]);
      for (int level = 0; level < levels; ++level) {
        const double bits = manifest.chunk_bytes(chunk, level) * 8.0;
        const double d = transfer_time(trace, cursor, bits, sim.link_efficiency);
        const ChunkOutcome out = buffer_dynamics(node.buffer_s, d, manifest.chunk_duration_s,
                                                 sim.buffer_cap_s, startup);
        const double q = chunk_qoe(manifest.ladder[level], previous, out.rebuffer_s, params);
        const double wall = node.wall_s + d + out.sleep_s;
        if (config.max_time_s > 0.0 && wall > config.max_time_s)
          throw Error("DP state exceeded max_time_s at chunk " + std::to_string(chunk) +
                      "; raise the horizon cap");
        const Node child{node.value + q, out.buffer_after_s, wall, level, n, level, q};
        const BucketKey key{std::llround(out.buffer_after_s / config.buffer_quantum_s),
                            std::llround(wall / config.time_quantum_s), level};
        auto [it, inserted] = index.try_emplace(key, static_cast<int>(next.size()));
        if (inserted) {
          next.push_back(child);
        } else if (child.value > next[static_cast<std::size_t>(it->second)].value) {
          next[static_cast<std::size_t>(it->second)] = child;
        }
      }
    }
    if (next.size() > config.max_states)
      throw Error("DP state count " + std::to_string(next.size()) + " at chunk " +
                  std::to_string(chunk) + " exceeds the budget of " +
                  std::to_string(config.max_states) + "; use coarser quanta");
    plan.peak_states = std::max(plan.peak_states, next.size());
  }

  const auto& last = stages.back();
  std::size_t best = 0;
  for (std::size_t i = 1; i < last.size(); ++i)
    if (last[i].value > last[best].value) best = i;
  plan.total_qoe = last[best].value;

  plan.actions.assign(static_cast<std::size_t>(remaining), 0);
  std::vector<double> gains(static_cast<std::size_t>(remaining));
  int at = static_cast<int>(best);
  for (int s = remaining; s > 0; --s) {
    const Node& node = stages[static_cast<std::size_t>(s)][static_cast<std::size_t>(at)];
    plan.actions[static_cast<std::size_t>(s) - 1] = node.action;
    gains[static_cast<std::size_t>(s) - 1] = node.qoe;
    at = node.parent;
  }
  plan.value_to_go.assign(static_cast<std::size_t>(remaining) + 1, 0.0);
  for (int s = remaining - 1; s >= 0; --s)
    plan.value_to_go[static_cast<std::size_t>(s)] =
        gains[static_cast<std::size_t>(s)] + plan.value_to_go[static_cast<std::size_t>(s) + 1];
  return plan;
}

double qoe_to_go_truth(const VideoManifest& manifest, const NetworkTrace& trace,
                       const QoeParams& params, const SimConfig& sim,
                       const SessionState& state, const DpConfig& config) {
  if (state.done(manifest)) return 0.0;
  return params.qoe_to_go_scale *
         dp_plan(manifest, trace, params, sim, state, config).total_qoe;
}

std::vector<ChunkRecord> simulate_plan(std::span<const int> actions,
                                       const VideoManifest& manifest,
                                       const NetworkTrace& trace, const QoeParams& params,
                                       const SimConfig& sim, const SessionState& start) {
  std::vector<ChunkRecord> records;
  SessionState state = start;
  for (int level : actions) {
    StepResult r = step(state, level, manifest, trace, sim, params);
    records.push_back(r.record);
    state = r.state;
  }
  return records;
}

std::vector<double> Trajectory::one_hot(std::size_t t) const {
  std::vector<double> v(static_cast<std::size_t>(action_count), 0.0);
  v.at(static_cast<std::size_t>(actions.at(t))) = 1.0;
  return v;
}

nlohmann::json to_json(const Trajectory& tr) {
  nlohmann::json o = nlohmann::json::array();
  for (const auto& obs : tr.observations) o.push_back(to_json(obs));
  nlohmann::json a = nlohmann::json::array();
  for (std::size_t t = 0; t < tr.actions.size(); ++t) a.push_back(tr.one_hot(t));
  return {{"trace", tr.trace_tag}, {"o", std::move(o)}, {"r_hat", tr.returns},
          {"a", std::move(a)}};
}

Trajectory trajectory_from_json(const nlohmann::json& doc) {
  Trajectory tr;
  tr.trace_tag = doc.value("trace", std::string());
  for (const auto& o : doc.at("o")) tr.observations.push_back(observation_from_json(o));
  tr.returns = doc.at("r_hat").get<std::vector<double>>();
  for (const auto& a : doc.at("a")) {
    const auto dist = a.get<std::vector<double>>();
    if (tr.action_count == 0) tr.action_count = static_cast<int>(dist.size());
    if (static_cast<int>(dist.size()) != tr.action_count)
      throw Error("trajectory actions have inconsistent widths");
    const auto hot = std::find(dist.begin(), dist.end(), 1.0);
    if (hot == dist.end()) throw Error("trajectory action is not one-hot");
    tr.actions.push_back(static_cast<int>(hot - dist.begin()));
  }
  if (tr.observations.size() != tr.actions.size() || tr.returns.size() != tr.actions.size())
    throw Error("trajectory modalities have different lengths");
  return tr;
}

void save_trajectories(const std::vector<Trajectory>& trajectories, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write trajectories " + path);
  for (const auto& tr : trajectories) out << to_json(tr).dump() << '\n';
}

std::vector<Trajectory> load_trajectories(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open trajectories " + path);
  std::vector<Trajectory> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      out.push_back(trajectory_from_json(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(path + ": " + e.what(), line_no);
    }
  }
  return out;
}

std::vector<SessionLog> expert_sessions(std::span<const NetworkTrace> traces,
                                        const VideoManifest& manifest, const QoeParams& params,
                                        const SimConfig& sim, const DpConfig& config) {
  std::vector<SessionLog> out;
  out.reserve(traces.size());
  for (const auto& trace : traces) {
    const SessionState start = init_session(manifest, trace, sim);
    const Plan plan = dp_plan(manifest, trace, params, sim, start, config);
    out.push_back(run_actions(plan.actions, manifest, trace, sim, params));
    out.back().algorithm = "dp";
  }
  return out;
}

std::vector<Trajectory> trajectories_from_sessions(std::span<const SessionLog> sessions,
                                                   int action_count,
                                                   const ReturnEstimator& estimator) {
  std::vector<Trajectory> out;
  out.reserve(sessions.size());
  for (const auto& log : sessions) {
    Trajectory tr;
    tr.trace_tag = log.trace_tag;
    tr.action_count = action_count;
    tr.observations = log.observations;
    for (std::size_t t = 0; t < log.records.size(); ++t) {
      tr.actions.push_back(log.records[t].chosen_level);
      tr.returns.push_back(estimator.estimate_return(
          std::span<const ChunkRecord>(log.records.data(), t), log.observations[t]));
    }
    out.push_back(std::move(tr));
  }
  return out;
}

std::vector<Trajectory> build_expert_trajectories(std::span<const NetworkTrace> traces,
                                                  const VideoManifest& manifest,
                                                  const QoeParams& params,
                                                  const SimConfig& sim,
                                                  const ReturnEstimator& estimator,
                                                  const DpConfig& config) {
  const auto sessions = expert_sessions(traces, manifest, params, sim, config);
  return trajectories_from_sessions(sessions, manifest.level_count(), estimator);
}

}  // namespace karma
