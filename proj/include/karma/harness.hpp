#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "karma/baselines.hpp"
#include "karma/dt.hpp"
#include "karma/estimator.hpp"
#include "karma/expert.hpp"
#include "karma/sim.hpp"
#include "karma/trace.hpp"

namespace karma {

/// One evaluated algorithm. `name` selects the implementation (bb, rb,
/// robust_mpc, karma, dp); `label` names its report row.
struct AlgorithmSpec {
  std::string name;
  std::string label;
  nlohmann::json settings = nlohmann::json::object();
};

struct RunConfig {
  std::string manifest = "builtin";  // or a manifest JSON path
  std::string corpus_index;          // empty: use `synthetic`
  SyntheticCorpusSpec synthetic;
  double train_fraction = 0.7;
  bool evaluate_all = false;  // false: test split only
  std::vector<AlgorithmSpec> algorithms;
  QoeParams qoe;
  SimConfig sim;
  DpConfig dp{1.0, 1.0};
  unsigned long long seed = 7;
  std::string output_dir = "out";
  int threads = 1;

  void validate() const;
};

/// Relative paths inside the document resolve against `base_dir`.
RunConfig run_config_from_json(const nlohmann::json& doc, const std::string& base_dir = ".");
nlohmann::json to_json(const RunConfig& config);
RunConfig load_run_config(const std::string& path);

VideoManifest resolve_manifest(const RunConfig& config);
TraceCorpus resolve_corpus(const RunConfig& config);
std::vector<NetworkTrace> evaluation_traces(const RunConfig& config);

using PolicyFactory = std::function<std::unique_ptr<AbrPolicy>()>;

/// Loads whatever the algorithm needs (checkpoints) once; errors name the
/// algorithm.
PolicyFactory make_policy_factory(const AlgorithmSpec& spec, const RunConfig& config);

struct SessionRow {
  std::string algorithm;
  std::string trace;
  int chunks = 0;
  double total_qoe = 0.0;
  double mean_qoe = 0.0;  // per chunk
  double utility = 0.0;
  double rebuffer_penalty = 0.0;
  double smooth_penalty = 0.0;
  double rebuffer_s = 0.0;

  bool operator==(const SessionRow&) const = default;
};

struct CdfPoint {
  double qoe = 0.0;
  double probability = 0.0;

  bool operator==(const CdfPoint&) const = default;
};

struct AlgorithmSummary {
  std::string algorithm;
  std::size_t sessions = 0;
  double mean_qoe = 0.0;  // mean over sessions of per-chunk mean QoE
  double stddev_qoe = 0.0;
  double utility = 0.0;
  double rebuffer_penalty = 0.0;
  double smooth_penalty = 0.0;
  std::vector<CdfPoint> cdf;

  bool operator==(const AlgorithmSummary&) const = default;
};

struct EvalReport {
  std::vector<SessionRow> sessions;
  std::vector<AlgorithmSummary> algorithms;  // in configuration order
  std::vector<SessionLog> logs;              // not part of the JSON dump

  const AlgorithmSummary& summary(const std::string& algorithm) const;
};

/// Aggregates session logs; algorithm order follows first appearance.
EvalReport summarize_sessions(std::vector<SessionLog> logs, const QoeParams& params);

/// Every policy on every trace. Each (policy, trace) pair gets a fresh policy.
EvalReport evaluate_policies(std::span<const std::pair<std::string, PolicyFactory>> policies,
                             std::span<const NetworkTrace> traces, const VideoManifest& manifest,
                             const SimConfig& sim, const QoeParams& params, int threads = 1);

EvalReport evaluate_corpus(const RunConfig& config);

nlohmann::json to_json(const EvalReport& report);
EvalReport eval_report_from_json(const nlohmann::json& doc);

struct ReportFormats {
  bool csv = true;
  bool json = true;
  bool cdf = true;
  bool sessions = true;
};

/// Writes summary.csv, report.json, cdf.csv and sessions.jsonl under `dir`.
void emit_report(const EvalReport& report, const std::string& dir, const ReportFormats& formats = {});

void save_session_logs(std::span<const SessionLog> logs, const std::string& path);
std::vector<SessionLog> load_session_logs(const std::string& path);

/// Settings for the estimator and transformer training stages.
struct PipelineConfig {
  SyntheticCorpusSpec corpus;
  double train_fraction = 0.7;
  unsigned long long split_seed = 3;
  double grid_mu_step = 0.5;
  double grid_sigma_step = 0.5;
  unsigned long long grid_seed = 1;
  EstimatorTrainConfig estimator;
  DtTrainConfig dt;
  int context_len = 4;     // K
  int history_window = 4;  // L
  QoeParams qoe;
  SimConfig sim;
  DpConfig dp{1.0, 1.0};
};

nlohmann::json to_json(const PipelineConfig& config);
PipelineConfig pipeline_config_from_json(const nlohmann::json& doc);

using Progress = std::function<void(const std::string&)>;

EstimatorModel train_estimator_stage(const VideoManifest& manifest, const PipelineConfig& config,
                                     EstimatorTrainReport* report = nullptr,
                                     const Progress& progress = {});

DtModel train_dt_stage(std::span<const Trajectory> trajectories, const VideoManifest& manifest,
                       const PipelineConfig& config, DtTrainReport* report = nullptr,
                       const Progress& progress = {});

enum class AblationParameter { ContextLength, HistoryWindow };

struct AblationRow {
  int value = 0;
  double mean_qoe = 0.0;
  double stddev_qoe = 0.0;
  std::size_t sessions = 0;
};

/// Retrains the transformer for each value of K (or L) on the train split
/// and evaluates Karma on the test split. The estimator is shared; expert
/// DP sessions are planned once.
std::vector<AblationRow> ablation_sweep(AblationParameter parameter, std::span<const int> values,
                                        const VideoManifest& manifest, const TraceCorpus& corpus,
                                        const EstimatorModel& estimator,
                                        const PipelineConfig& config,
                                        const Progress& progress = {});

}  // namespace karma
