#include "karma/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <thread>

#include "karma/stats.hpp"

namespace fs = std::filesystem;

namespace karma {

namespace {

std::string resolve_path(const std::string& path, const std::string& base_dir) {
  if (path.empty() || fs::path(path).is_absolute()) return path;
  return (fs::path(base_dir) / path).lexically_normal().string();
}

nlohmann::json to_json(const SyntheticCorpusSpec& s) {
  return {{"count", s.count},         {"mu_min", s.mu_min},
          {"mu_max", s.mu_max},       {"sigma_max", s.sigma_max},
          {"regime_s", s.regime_s},   {"duration_s", s.duration_s},
          {"seed", s.seed}};
}

SyntheticCorpusSpec synthetic_corpus_from_json(const nlohmann::json& doc) {
  SyntheticCorpusSpec s;
  s.count = doc.value("count", s.count);
  s.mu_min = doc.value("mu_min", s.mu_min);
  s.mu_max = doc.value("mu_max", s.mu_max);
  s.sigma_max = doc.value("sigma_max", s.sigma_max);
  s.regime_s = doc.value("regime_s", s.regime_s);
  s.duration_s = doc.value("duration_s", s.duration_s);
  s.seed = doc.value("seed", s.seed);
  s.validate();
  return s;
}

nlohmann::json to_json(const DpConfig& c) {
  return {{"buffer_quantum_s", c.buffer_quantum_s},
          {"time_quantum_s", c.time_quantum_s},
          {"max_time_s", c.max_time_s},
          {"max_states", c.max_states}};
}

DpConfig dp_config_from_json(const nlohmann::json& doc, DpConfig c) {
  c.buffer_quantum_s = doc.value("buffer_quantum_s", c.buffer_quantum_s);
  c.time_quantum_s = doc.value("time_quantum_s", c.time_quantum_s);
  c.max_time_s = doc.value("max_time_s", c.max_time_s);
  c.max_states = doc.value("max_states", c.max_states);
  c.validate();
  return c;
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path);
  out << text;
  if (!out) throw Error("failed writing " + path);
}

std::string fmt_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

void RunConfig::validate() const {
  if (algorithms.empty()) throw ConfigError("run configuration lists no algorithms");
  if (!(train_fraction > 0.0 && train_fraction < 1.0))
    throw ConfigError("train_fraction must lie in (0, 1)");
  if (threads < 1) throw ConfigError("threads must be at least 1");
  for (const auto& a : algorithms)
    if (a.name.empty()) throw ConfigError("algorithm entry without a name");
  if (!corpus_index.empty() && !fs::exists(corpus_index))
    throw ConfigError("corpus index not found: " + corpus_index);
  if (manifest != "builtin" && !fs::exists(manifest))
    throw ConfigError("manifest not found: " + manifest);
  qoe.validate();
  sim.validate();
  dp.validate();
}

RunConfig run_config_from_json(const nlohmann::json& doc, const std::string& base_dir) {
  RunConfig c;
  try {
    c.manifest = doc.value("manifest", c.manifest);
    if (c.manifest != "builtin") c.manifest = resolve_path(c.manifest, base_dir);
    if (doc.contains("corpus")) {
      const auto& corpus = doc.at("corpus");
      if (corpus.contains("index"))
        c.corpus_index = resolve_path(corpus.at("index").get<std::string>(), base_dir);
      else if (corpus.contains("synthetic"))
        c.synthetic = synthetic_corpus_from_json(corpus.at("synthetic"));
      else
        throw ConfigError("corpus needs an \"index\" or \"synthetic\" entry");
    }
    c.train_fraction = doc.value("train_fraction", c.train_fraction);
    const std::string evaluate = doc.value("evaluate", std::string("test"));
    if (evaluate != "test" && evaluate != "all")
      throw ConfigError("evaluate must be \"test\" or \"all\"");
    c.evaluate_all = evaluate == "all";
    for (const auto& a : doc.at("algorithms")) {
      AlgorithmSpec spec;
      spec.name = a.at("name").get<std::string>();
      spec.label = a.value("label", spec.name);
      spec.settings = a;
      spec.settings.erase("name");
      spec.settings.erase("label");
      for (const char* key : {"dt", "estimator"})
        if (spec.settings.contains(key))
          spec.settings[key] = resolve_path(spec.settings[key].get<std::string>(), base_dir);
      c.algorithms.push_back(std::move(spec));
    }
    if (doc.contains("qoe")) c.qoe = qoe_params_from_json(doc.at("qoe"));
    if (doc.contains("sim")) c.sim = sim_config_from_json(doc.at("sim"));
    if (doc.contains("dp")) c.dp = dp_config_from_json(doc.at("dp"), c.dp);
    c.seed = doc.value("seed", c.seed);
    c.output_dir = resolve_path(doc.value("output_dir", c.output_dir), base_dir);
    c.threads = doc.value("threads", c.threads);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("run configuration: ") + e.what());
  }
  c.validate();
  return c;
}

nlohmann::json to_json(const RunConfig& c) {
  nlohmann::json algorithms = nlohmann::json::array();
  for (const auto& a : c.algorithms) {
    nlohmann::json entry = a.settings;
    entry["name"] = a.name;
    entry["label"] = a.label;
    algorithms.push_back(std::move(entry));
  }
  nlohmann::json corpus = c.corpus_index.empty()
                              ? nlohmann::json{{"synthetic", to_json(c.synthetic)}}
                              : nlohmann::json{{"index", c.corpus_index}};
  return {{"manifest", c.manifest},
          {"corpus", std::move(corpus)},
          {"train_fraction", c.train_fraction},
          {"evaluate", c.evaluate_all ? "all" : "test"},
          {"algorithms", std::move(algorithms)},
          {"qoe", to_json(c.qoe)},
          {"sim", to_json(c.sim)},
          {"dp", to_json(c.dp)},
          {"seed", c.seed},
          {"output_dir", c.output_dir},
          {"threads", c.threads}};
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open run configuration " + path);
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path + ": " + e.what());
  }
  return run_config_from_json(doc, fs::path(path).parent_path().string());
}

VideoManifest resolve_manifest(const RunConfig& config) {
  if (config.manifest == "builtin") return VideoManifest::standard();
  return load_manifest(config.manifest);
}

TraceCorpus resolve_corpus(const RunConfig& config) {
  if (!config.corpus_index.empty()) return load_corpus(config.corpus_index);
  return split_corpus(gen_synthetic_corpus(config.synthetic), config.train_fraction, config.seed);
}

std::vector<NetworkTrace> evaluation_traces(const RunConfig& config) {
  TraceCorpus corpus = resolve_corpus(config);
  if (config.evaluate_all) return std::move(corpus.traces);
  return corpus.subset(Split::Test);
}

PolicyFactory make_policy_factory(const AlgorithmSpec& spec, const RunConfig& config) {
  const nlohmann::json s = spec.settings.is_null() ? nlohmann::json::object() : spec.settings;
  if (!s.is_object()) throw ConfigError("algorithm '" + spec.label + "': settings must be an object");
  try {
    if (spec.name == "bb") {
      BbConfig bb;
      bb.reservoir_s = s.value("reservoir_s", bb.reservoir_s);
      bb.cushion_s = s.value("cushion_s", bb.cushion_s);
      bb.validate();
      return [bb] { return std::make_unique<BufferBasedPolicy>(bb); };
    }
    if (spec.name == "rb") {
      const int window = s.value("history_window", 5);
      return [window] { return std::make_unique<RateBasedPolicy>(window); };
    }
    if (spec.name == "robust_mpc") {
      MpcConfig mpc;
      mpc.horizon = s.value("horizon", mpc.horizon);
      mpc.error_window = s.value("error_window", mpc.error_window);
      mpc.history_window = s.value("history_window", mpc.history_window);
      mpc.validate();
      return [mpc, q = config.qoe, sim = config.sim] {
        return std::make_unique<RobustMpcPolicy>(mpc, q, sim);
      };
    }
    if (spec.name == "dp") {
      return [q = config.qoe, sim = config.sim, dp = config.dp] {
        return std::make_unique<OfflineOptimalPolicy>(q, sim, dp);
      };
    }
    if (spec.name == "karma") {
      for (const char* key : {"dt", "estimator"}) {
        if (!s.contains(key))
          throw ConfigError("algorithm '" + spec.label + "': no \"" + key + "\" checkpoint given");
        const auto path = s.at(key).get<std::string>();
        if (!fs::exists(path))
          throw ConfigError("algorithm '" + spec.label + "': checkpoint not found: " + path);
      }
      auto dt = std::make_shared<const DtModel>(DtModel::load(s.at("dt").get<std::string>()));
      auto est = std::make_shared<const EstimatorModel>(
          EstimatorModel::load(s.at("estimator").get<std::string>()));
      const int window = s.value("history_window", 4);
      return [dt, est, window] { return std::make_unique<KarmaPolicy>(*dt, *est, window); };
    }
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError("algorithm '" + spec.label + "': " + e.what());
  }
  throw ConfigError("unknown algorithm '" + spec.name + "'");
}

const AlgorithmSummary& EvalReport::summary(const std::string& algorithm) const {
  for (const auto& a : algorithms)
    if (a.algorithm == algorithm) return a;
  throw Error("report has no algorithm " + algorithm);
}

EvalReport summarize_sessions(std::vector<SessionLog> logs, const QoeParams& params) {
  EvalReport report;
  std::vector<std::string> order;
  std::map<std::string, std::vector<const SessionRow*>> by_algorithm;
  report.sessions.reserve(logs.size());
  for (const auto& log : logs) {
    const SessionQoe q = session_qoe(log.records, params);
    const double n = static_cast<double>(log.records.size());
    SessionRow row;
    row.algorithm = log.algorithm;
    row.trace = log.trace_tag;
    row.chunks = static_cast<int>(log.records.size());
    row.total_qoe = q.total;
    row.mean_qoe = q.mean;
    row.utility = q.sums.utility / n;
    row.rebuffer_penalty = q.sums.rebuffer_penalty / n;
    row.smooth_penalty = q.sums.smooth_penalty / n;
    for (const auto& r : log.records) row.rebuffer_s += r.rebuffer_s;
    report.sessions.push_back(std::move(row));
    if (std::find(order.begin(), order.end(), log.algorithm) == order.end())
      order.push_back(log.algorithm);
  }
  for (const auto& row : report.sessions) by_algorithm[row.algorithm].push_back(&row);

  for (const auto& name : order) {
    const auto& rows = by_algorithm[name];
    AlgorithmSummary s;
    s.algorithm = name;
    s.sessions = rows.size();
    std::vector<double> qoe, util, rebuf, smooth;
    for (const auto* r : rows) {
      qoe.push_back(r->mean_qoe);
      util.push_back(r->utility);
      rebuf.push_back(r->rebuffer_penalty);
      smooth.push_back(r->smooth_penalty);
    }
    s.mean_qoe = stats::mean(qoe);
    s.stddev_qoe = stats::sample_stddev(qoe);
    s.utility = stats::mean(util);
    s.rebuffer_penalty = stats::mean(rebuf);
    s.smooth_penalty = stats::mean(smooth);
    std::sort(qoe.begin(), qoe.end());
    for (std::size_t i = 0; i < qoe.size(); ++i)
      s.cdf.push_back({qoe[i], static_cast<double>(i + 1) / static_cast<double>(qoe.size())});
    report.algorithms.push_back(std::move(s));
  }
  report.logs = std::move(logs);
  return report;
}

EvalReport evaluate_policies(std::span<const std::pair<std::string, PolicyFactory>> policies,
                             std::span<const NetworkTrace> traces, const VideoManifest& manifest,
                             const SimConfig& sim, const QoeParams& params, int threads) {
  if (policies.empty()) throw ConfigError("no algorithms to evaluate");
  if (traces.empty()) throw ConfigError("no traces to evaluate on");
  const std::size_t total = policies.size() * traces.size();
  std::vector<SessionLog> logs(total);
  std::vector<std::exception_ptr> failures(total);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t task = next++; task < total; task = next++) {
      const auto& [label, factory] = policies[task / traces.size()];
      try {
        auto policy = factory();
        logs[task] = run_policy(*policy, manifest, traces[task % traces.size()], sim, params);
        logs[task].algorithm = label;
      } catch (...) {
        failures[task] = std::current_exception();
      }
    }
  };
  const int n = std::max(1, std::min<int>(threads, static_cast<int>(total)));
  if (n == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int i = 0; i < n; ++i) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  for (const auto& f : failures)
    if (f) std::rethrow_exception(f);
  return summarize_sessions(std::move(logs), params);
}

EvalReport evaluate_corpus(const RunConfig& config) {
  config.validate();
  const VideoManifest manifest = resolve_manifest(config);
  std::vector<std::pair<std::string, PolicyFactory>> policies;
  for (const auto& spec : config.algorithms)
    policies.emplace_back(spec.label, make_policy_factory(spec, config));
  const auto traces = evaluation_traces(config);
  return evaluate_policies(policies, traces, manifest, config.sim, config.qoe, config.threads);
}

nlohmann::json to_json(const EvalReport& report) {
  nlohmann::json algorithms = nlohmann::json::array();
  for (const auto& a : report.algorithms) {
    nlohmann::json cdf = nlohmann::json::array();
    for (const auto& p : a.cdf) cdf.push_back({p.qoe, p.probability});
    algorithms.push_back({{"algorithm", a.algorithm},
                          {"sessions", a.sessions},
                          {"mean_qoe", a.mean_qoe},
                          {"stddev_qoe", a.stddev_qoe},
                          {"utility", a.utility},
                          {"rebuffer_penalty", a.rebuffer_penalty},
                          {"smooth_penalty", a.smooth_penalty},
                          {"cdf", std::move(cdf)}});
  }
  nlohmann::json sessions = nlohmann::json::array();
  for (const auto& s : report.sessions)
    sessions.push_back({{"algorithm", s.algorithm},
                        {"trace", s.trace},
                        {"chunks", s.chunks},
                        {"total_qoe", s.total_qoe},
                        {"mean_qoe", s.mean_qoe},
                        {"utility", s.utility},
                        {"rebuffer_penalty", s.rebuffer_penalty},
                        {"smooth_penalty", s.smooth_penalty},
                        {"rebuffer_s", s.rebuffer_s}});
  return {{"algorithms", std::move(algorithms)}, {"sessions", std::move(sessions)}};
}

EvalReport eval_report_from_json(const nlohmann::json& doc) {
  EvalReport report;
  try {
    for (const auto& a : doc.at("algorithms")) {
      AlgorithmSummary s;
      s.algorithm = a.at("algorithm").get<std::string>();
      s.sessions = a.at("sessions").get<std::size_t>();
      s.mean_qoe = a.at("mean_qoe").get<double>();
      s.stddev_qoe = a.at("stddev_qoe").get<double>();
      s.utility = a.at("utility").get<double>();
      s.rebuffer_penalty = a.at("rebuffer_penalty").get<double>();
      s.smooth_penalty = a.at("smooth_penalty").get<double>();
      for (const auto& p : a.at("cdf")) s.cdf.push_back({p.at(0).get<double>(), p.at(1).get<double>()});
      report.algorithms.push_back(std::move(s));
    }
    for (const auto& j : doc.at("sessions")) {
      SessionRow s;
      s.algorithm = j.at("algorithm").get<std::string>();
      s.trace = j.at("trace").get<std::string>();
      s.chunks = j.at("chunks").get<int>();
      s.total_qoe = j.at("total_qoe").get<double>();
      s.mean_qoe = j.at("mean_qoe").get<double>();
      s.utility = j.at("utility").get<double>();
      s.rebuffer_penalty = j.at("rebuffer_penalty").get<double>();
      s.smooth_penalty = j.at("smooth_penalty").get<double>();
      s.rebuffer_s = j.at("rebuffer_s").get<double>();
      report.sessions.push_back(std::move(s));
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("malformed report: ") + e.what());
  }
  return report;
}

void save_session_logs(std::span<const SessionLog> logs, const std::string& path) {
  std::string text;
  for (const auto& log : logs) {
    for (const auto& r : log.records) {
      nlohmann::json line = to_json(r);
      line["algorithm"] = log.algorithm;
      line["trace"] = log.trace_tag;
      text += line.dump();
      text += '\n';
    }
  }
  write_text(path, text);
}

std::vector<SessionLog> load_session_logs(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open session logs " + path);
  std::vector<SessionLog> logs;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      ChunkRecord r = chunk_record_from_json(j);
      const auto algorithm = j.at("algorithm").get<std::string>();
      const auto trace = j.at("trace").get<std::string>();
      if (logs.empty() || r.chunk_index == 0 || logs.back().algorithm != algorithm ||
          logs.back().trace_tag != trace) {
        logs.emplace_back();
        logs.back().algorithm = algorithm;
        logs.back().trace_tag = trace;
      }
      logs.back().records.push_back(r);
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(path + ": " + e.what(), line_no);
    }
  }
  return logs;
}

void emit_report(const EvalReport& report, const std::string& dir, const ReportFormats& formats) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error("cannot create report directory " + dir + ": " + ec.message());
  const fs::path root(dir);
  if (formats.csv) {
    std::string csv = "algorithm,sessions,mean_qoe,stddev_qoe,utility,rebuffer_penalty,smooth_penalty\n";
    for (const auto& a : report.algorithms)
      csv += a.algorithm + ',' + std::to_string(a.sessions) + ',' + fmt_double(a.mean_qoe) + ',' +
             fmt_double(a.stddev_qoe) + ',' + fmt_double(a.utility) + ',' +
             fmt_double(a.rebuffer_penalty) + ',' + fmt_double(a.smooth_penalty) + '\n';
    write_text((root / "summary.csv").string(), csv);
  }
  if (formats.json) write_text((root / "report.json").string(), to_json(report).dump(2) + "\n");
  if (formats.cdf) {
    std::string csv = "algorithm,mean_qoe,probability\n";
    for (const auto& a : report.algorithms)
      for (const auto& p : a.cdf)
        csv += a.algorithm + ',' + fmt_double(p.qoe) + ',' + fmt_double(p.probability) + '\n';
    write_text((root / "cdf.csv").string(), csv);
  }
  if (formats.sessions) save_session_logs(report.logs, (root / "sessions.jsonl").string());
}

nlohmann::json to_json(const PipelineConfig& c) {
  return {{"corpus", to_json(c.corpus)},
          {"train_fraction", c.train_fraction},
          {"split_seed", c.split_seed},
          {"grid", {{"mu_step", c.grid_mu_step}, {"sigma_step", c.grid_sigma_step}, {"seed", c.grid_seed}}},
          {"estimator",
           {{"epochs", c.estimator.epochs},
            {"batch_size", c.estimator.batch_size},
            {"lr", c.estimator.lr},
            {"weight_decay", c.estimator.weight_decay},
            {"holdout_fraction", c.estimator.holdout_fraction},
            {"hidden", c.estimator.hidden},
            {"seed", c.estimator.seed}}},
          {"dt",
           {{"steps", c.dt.steps},
            {"batch_size", c.dt.batch_size},
            {"lr", c.dt.lr},
            {"weight_decay", c.dt.weight_decay},
            {"grad_clip", c.dt.grad_clip},
            {"dropout", c.dt.dropout},
            {"seed", c.dt.seed}}},
          {"context_len", c.context_len},
          {"history_window", c.history_window},
          {"qoe", to_json(c.qoe)},
          {"sim", to_json(c.sim)},
          {"dp", to_json(c.dp)}};
}

PipelineConfig pipeline_config_from_json(const nlohmann::json& doc) {
  PipelineConfig c;
  try {
    if (doc.contains("corpus")) c.corpus = synthetic_corpus_from_json(doc.at("corpus"));
    c.train_fraction = doc.value("train_fraction", c.train_fraction);
    c.split_seed = doc.value("split_seed", c.split_seed);
    if (doc.contains("grid")) {
      const auto& g = doc.at("grid");
      c.grid_mu_step = g.value("mu_step", c.grid_mu_step);
      c.grid_sigma_step = g.value("sigma_step", c.grid_sigma_step);
      c.grid_seed = g.value("seed", c.grid_seed);
    }
    if (doc.contains("estimator")) {
      const auto& e = doc.at("estimator");
      c.estimator.epochs = e.value("epochs", c.estimator.epochs);
      c.estimator.batch_size = e.value("batch_size", c.estimator.batch_size);
      c.estimator.lr = e.value("lr", c.estimator.lr);
      c.estimator.weight_decay = e.value("weight_decay", c.estimator.weight_decay);
      c.estimator.holdout_fraction = e.value("holdout_fraction", c.estimator.holdout_fraction);
      c.estimator.hidden = e.value("hidden", c.estimator.hidden);
      c.estimator.seed = e.value("seed", c.estimator.seed);
    }
    if (doc.contains("dt")) {
      const auto& d = doc.at("dt");
      c.dt.steps = d.value("steps", c.dt.steps);
      c.dt.batch_size = d.value("batch_size", c.dt.batch_size);
      c.dt.lr = d.value("lr", c.dt.lr);
      c.dt.weight_decay = d.value("weight_decay", c.dt.weight_decay);
      c.dt.grad_clip = d.value("grad_clip", c.dt.grad_clip);
      c.dt.dropout = d.value("dropout", c.dt.dropout);
      c.dt.seed = d.value("seed", c.dt.seed);
    }
    c.context_len = doc.value("context_len", c.context_len);
    c.history_window = doc.value("history_window", c.history_window);
    if (doc.contains("qoe")) c.qoe = qoe_params_from_json(doc.at("qoe"));
    if (doc.contains("sim")) c.sim = sim_config_from_json(doc.at("sim"));
    if (doc.contains("dp")) c.dp = dp_config_from_json(doc.at("dp"), c.dp);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("pipeline configuration: ") + e.what());
  }
  if (c.context_len < 1 || c.history_window < 1)
    throw ConfigError("context_len and history_window must be at least 1");
  return c;
}

EstimatorModel train_estimator_stage(const VideoManifest& manifest, const PipelineConfig& config,
                                     EstimatorTrainReport* report, const Progress& progress) {
  const auto grid = synthetic_grid(config.grid_mu_step, config.grid_sigma_step, config.grid_seed);
  if (progress) progress("planning " + std::to_string(grid.size()) + " grid traces");
  const auto data = make_estimator_dataset(grid, manifest, config.qoe, config.sim, config.dp);
  if (progress) progress("training estimator on " + std::to_string(data.size()) + " samples");
  return train_estimator(data, config.estimator, report);
}

DtModel train_dt_stage(std::span<const Trajectory> trajectories, const VideoManifest& manifest,
                       const PipelineConfig& config, DtTrainReport* report,
                       const Progress& progress) {
  DtConfig dt = default_dt_config(manifest.level_count(), config.context_len, manifest.chunk_count);
  dt.seed = config.dt.seed;
  const long every = std::max<long>(1, config.dt.steps / 10);
  return train_dt(trajectories, dt, config.dt, report, [&](long step, double loss) {
    if (progress && (step % every == 0 || step + 1 == config.dt.steps))
      progress("step " + std::to_string(step) + " loss " + fmt_double(loss));
  });
}

std::vector<AblationRow> ablation_sweep(AblationParameter parameter, std::span<const int> values,
                                        const VideoManifest& manifest, const TraceCorpus& corpus,
                                        const EstimatorModel& estimator,
                                        const PipelineConfig& config, const Progress& progress) {
  const auto train = corpus.subset(Split::Train);
  const auto test = corpus.subset(Split::Test);
  if (progress) progress("planning " + std::to_string(train.size()) + " expert sessions");
  const auto sessions = expert_sessions(train, manifest, config.qoe, config.sim, config.dp);

  std::vector<AblationRow> rows;
  for (int value : values) {
    PipelineConfig run = config;
    (parameter == AblationParameter::ContextLength ? run.context_len : run.history_window) = value;
    if (progress)
      progress(std::string(parameter == AblationParameter::ContextLength ? "K" : "L") + " = " +
               std::to_string(value));
    const EstimatorReturn returns(estimator, run.history_window);
    const auto trajectories = trajectories_from_sessions(sessions, manifest.level_count(), returns);
    const DtModel model = train_dt_stage(trajectories, manifest, run, nullptr, progress);
    const std::vector<std::pair<std::string, PolicyFactory>> policies{
        {"karma", [&] { return std::make_unique<KarmaPolicy>(model, estimator, run.history_window); }}};
    const EvalReport report = evaluate_policies(policies, test, manifest, run.sim, run.qoe);
    const auto& s = report.summary("karma");
    rows.push_back({value, s.mean_qoe, s.stddev_qoe, s.sessions});
  }
  return rows;
}

}  // namespace karma
