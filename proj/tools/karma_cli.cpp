#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "karma/harness.hpp"
#include "karma/nn/checkpoint.hpp"
#include "karma/service.hpp"

namespace fs = std::filesystem;
using namespace karma;

namespace {

void log_line(const std::string& msg) { std::cerr << msg << '\n'; }

VideoManifest manifest_arg(const std::string& path) {
  return path == "builtin" ? VideoManifest::standard() : load_manifest(path);
}

nlohmann::json read_json(const std::string& path) {
  if (path.empty()) return nlohmann::json::object();
  return nn::read_json_file(path);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Karma adaptive-bitrate lab"};
  app.require_subcommand(1);

  // gen-traces
  auto* gen = app.add_subcommand("gen-traces", "Write a synthetic corpus and its index");
  SyntheticCorpusSpec corpus;
  std::string gen_out = "traces";
  double gen_train_fraction = 0.7;
  unsigned long long gen_split_seed = 3;
  gen->add_option("--out", gen_out, "Output directory")->capture_default_str();
  gen->add_option("--count", corpus.count, "Number of traces")->capture_default_str();
  gen->add_option("--mu-min", corpus.mu_min)->capture_default_str();
  gen->add_option("--mu-max", corpus.mu_max)->capture_default_str();
  gen->add_option("--sigma-max", corpus.sigma_max)->capture_default_str();
  gen->add_option("--regime", corpus.regime_s, "Seconds between (mu, sigma) redraws; 0 keeps one pair")
      ->capture_default_str();
  gen->add_option("--duration", corpus.duration_s)->capture_default_str();
  gen->add_option("--seed", corpus.seed)->capture_default_str();
  gen->add_option("--train-fraction", gen_train_fraction)->capture_default_str();
  gen->add_option("--split-seed", gen_split_seed)->capture_default_str();

  // make-expert
  auto* expert = app.add_subcommand("make-expert", "Plan DP-optimal sessions and write trajectories");
  std::string ex_corpus, ex_estimator, ex_out = "trajectories.jsonl", ex_manifest = "builtin";
  std::string ex_split = "train", ex_pipeline;
  int ex_history = 0;
  expert->add_option("--corpus", ex_corpus, "Corpus index")->required();
  expert->add_option("--estimator", ex_estimator, "Estimator checkpoint")->required();
  expert->add_option("--out", ex_out)->capture_default_str();
  expert->add_option("--manifest", ex_manifest)->capture_default_str();
  expert->add_option("--split", ex_split, "train, test or all")->capture_default_str();
  expert->add_option("--pipeline", ex_pipeline, "Pipeline configuration JSON");
  expert->add_option("--history-window", ex_history, "L; defaults to the pipeline's");

  // train-estimator
  auto* test = app.add_subcommand("train-estimator", "Train the QoE-to-go estimator");
  std::string te_pipeline, te_dataset, te_dataset_out, te_out = "estimator.json", te_manifest = "builtin";
  test->add_option("--pipeline", te_pipeline, "Pipeline configuration JSON");
  test->add_option("--dataset", te_dataset, "Existing dataset (JSON lines); generated when absent");
  test->add_option("--dataset-out", te_dataset_out, "Where to save a generated dataset");
  test->add_option("--out", te_out)->capture_default_str();
  test->add_option("--manifest", te_manifest)->capture_default_str();

  // train-dt
  auto* tdt = app.add_subcommand("train-dt", "Train the decision transformer on trajectories");
  std::string td_pipeline, td_traj, td_out = "dt.json", td_manifest = "builtin";
  tdt->add_option("--pipeline", td_pipeline, "Pipeline configuration JSON");
  tdt->add_option("--trajectories", td_traj)->required();
  tdt->add_option("--out", td_out)->capture_default_str();
  tdt->add_option("--manifest", td_manifest)->capture_default_str();

  // eval
  auto* eval = app.add_subcommand("eval", "Evaluate algorithms on a corpus and emit a report");
  std::string ev_config;
  eval->add_option("--config", ev_config, "Run configuration JSON")->required();

  // sweep
  auto* sweep = app.add_subcommand("sweep", "Retrain and evaluate Karma over values of K or L");
  std::string sw_param, sw_pipeline, sw_estimator, sw_out = "sweep.json", sw_manifest = "builtin";
  std::vector<int> sw_values;
  sweep->add_option("--param", sw_param, "K or L")->required()->check(CLI::IsMember({"K", "L"}));
  sweep->add_option("--values", sw_values)->required()->delimiter(',');
  sweep->add_option("--pipeline", sw_pipeline, "Pipeline configuration JSON");
  sweep->add_option("--estimator", sw_estimator, "Estimator checkpoint; trained when absent");
  sweep->add_option("--out", sw_out)->capture_default_str();
  sweep->add_option("--manifest", sw_manifest)->capture_default_str();

  // serve
  auto* serve = app.add_subcommand("serve", "Serve POST /decide");
  std::string sv_dt, sv_estimator, sv_host = "127.0.0.1";
  int sv_port = 8080, sv_history = 4;
  std::vector<std::string> sv_manifests;
  serve->add_option("--dt", sv_dt)->required();
  serve->add_option("--estimator", sv_estimator)->required();
  serve->add_option("--host", sv_host)->capture_default_str();
  serve->add_option("--port", sv_port)->capture_default_str();
  serve->add_option("--history-window", sv_history)->capture_default_str();
  serve->add_option("--manifest", sv_manifests, "name=path of an extra manifest");

  // report
  auto* rep = app.add_subcommand("report", "Rebuild a report from session logs");
  std::string rp_sessions, rp_out = "report", rp_qoe;
  rep->add_option("--sessions", rp_sessions, "sessions.jsonl")->required();
  rep->add_option("--out", rp_out)->capture_default_str();
  rep->add_option("--qoe", rp_qoe, "QoE parameter JSON");

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) {
      const auto traces = gen_synthetic_corpus(corpus);
      const TraceCorpus split = split_corpus(traces, gen_train_fraction, gen_split_seed);
      fs::create_directories(gen_out);
      std::vector<CorpusEntry> entries;
      for (std::size_t i = 0; i < split.traces.size(); ++i) {
        const std::string name = split.traces[i].source_tag() + ".txt";
        save_cooked_trace(split.traces[i], (fs::path(gen_out) / name).string());
        entries.push_back({name, split.splits[i]});
      }
      save_corpus_index(entries, (fs::path(gen_out) / "index.json").string());
      std::cout << "wrote " << entries.size() << " traces (" << split.count(Split::Train)
                << " train, " << split.count(Split::Test) << " test) to " << gen_out << '\n';
    } else if (expert->parsed()) {
      const PipelineConfig pc = pipeline_config_from_json(read_json(ex_pipeline));
      const VideoManifest manifest = manifest_arg(ex_manifest);
      const TraceCorpus c = load_corpus(ex_corpus);
      const auto traces = ex_split == "all" ? c.traces : c.subset(split_from_string(ex_split));
      const EstimatorModel est = EstimatorModel::load(ex_estimator);
      const EstimatorReturn returns(est, ex_history > 0 ? ex_history : pc.history_window);
      const auto trajectories = build_expert_trajectories(traces, manifest, pc.qoe, pc.sim, returns, pc.dp);
      save_trajectories(trajectories, ex_out);
      std::cout << "wrote " << trajectories.size() << " trajectories to " << ex_out << '\n';
    } else if (test->parsed()) {
      const PipelineConfig pc = pipeline_config_from_json(read_json(te_pipeline));
      const VideoManifest manifest = manifest_arg(te_manifest);
      EstimatorDataset data;
      if (!te_dataset.empty()) {
        data = load_estimator_dataset(te_dataset);
      } else {
        const auto grid = synthetic_grid(pc.grid_mu_step, pc.grid_sigma_step, pc.grid_seed);
        log_line("planning " + std::to_string(grid.size()) + " grid traces");
        data = make_estimator_dataset(grid, manifest, pc.qoe, pc.sim, pc.dp);
        if (!te_dataset_out.empty()) save_estimator_dataset(data, te_dataset_out);
      }
      EstimatorTrainReport report;
      const EstimatorModel model = train_estimator(data, pc.estimator, &report);
      model.save(te_out);
      std::printf("holdout mse %.6g (label variance %.6g), spearman %.4f\n", report.holdout_mse,
                  report.holdout_label_variance, report.holdout_spearman);
    } else if (tdt->parsed()) {
      const PipelineConfig pc = pipeline_config_from_json(read_json(td_pipeline));
      const auto trajectories = load_trajectories(td_traj);
      DtTrainReport report;
      DtModel model = train_dt_stage(trajectories, manifest_arg(td_manifest), pc, &report, log_line);
      model.save(td_out);
      std::printf("final loss %.6g, expert accuracy %.4f\n", report.step_loss.back(),
                  expert_action_accuracy(model, trajectories));
    } else if (eval->parsed()) {
      const RunConfig config = load_run_config(ev_config);
      const EvalReport report = evaluate_corpus(config);
      emit_report(report, config.output_dir);
      for (const auto& a : report.algorithms)
        std::printf("%-12s %.4f +- %.4f over %zu sessions\n", a.algorithm.c_str(), a.mean_qoe,
                    a.stddev_qoe, a.sessions);
    } else if (sweep->parsed()) {
      const PipelineConfig pc = pipeline_config_from_json(read_json(sw_pipeline));
      const VideoManifest manifest = manifest_arg(sw_manifest);
      const TraceCorpus c = split_corpus(gen_synthetic_corpus(pc.corpus), pc.train_fraction, pc.split_seed);
      const EstimatorModel est = sw_estimator.empty()
                                     ? train_estimator_stage(manifest, pc, nullptr, log_line)
                                     : EstimatorModel::load(sw_estimator);
      const auto param = sw_param == "K" ? AblationParameter::ContextLength : AblationParameter::HistoryWindow;
      const auto rows = ablation_sweep(param, sw_values, manifest, c, est, pc, log_line);
      nlohmann::json out = nlohmann::json::array();
      for (const auto& r : rows) {
        out.push_back({{sw_param, r.value}, {"mean_qoe", r.mean_qoe}, {"stddev_qoe", r.stddev_qoe},
                       {"sessions", r.sessions}});
        std::printf("%s=%d  %.4f +- %.4f\n", sw_param.c_str(), r.value, r.mean_qoe, r.stddev_qoe);
      }
      nn::write_json_file(out, sw_out);
    } else if (serve->parsed()) {
      DecisionService service(DtModel::load(sv_dt), EstimatorModel::load(sv_estimator), sv_history);
      for (const auto& m : sv_manifests) {
        const auto eq = m.find('=');
        if (eq == std::string::npos) throw ConfigError("--manifest expects name=path");
        service.add_manifest(m.substr(0, eq), load_manifest(m.substr(eq + 1)));
      }
      log_line("listening on " + sv_host + ":" + std::to_string(sv_port));
      serve_decisions(service, sv_host, sv_port);
    } else if (rep->parsed()) {
      const QoeParams q = rp_qoe.empty() ? QoeParams{} : qoe_params_from_json(read_json(rp_qoe));
      const EvalReport report = summarize_sessions(load_session_logs(rp_sessions), q);
      emit_report(report, rp_out);
      std::cout << "wrote report for " << report.algorithms.size() << " algorithms to " << rp_out << '\n';
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
