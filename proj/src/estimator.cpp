#include "karma/estimator.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <set>

#include "karma/nn/checkpoint.hpp"
#include "karma/nn/loss.hpp"
#include "karma/nn/optim.hpp"
#include "karma/stats.hpp"

namespace karma {

NetStats throughput_stats(std::span<const double> history, int window) {
  if (history.empty()) throw Error("throughput statistics need at least one measurement");
  if (window < 1) throw Error("throughput window must be at least 1");
  const auto n = std::min<std::size_t>(history.size(), static_cast<std::size_t>(window));
  const auto recent = history.subspan(history.size() - n);
  NetStats s;
  s.mean_mbps = stats::mean(recent);
  s.stddev_mbps = std::sqrt(stats::variance(recent));
  return s;
}

Eigen::Vector4d EstimatorFeatures::normalized() const {
  return {mean_mbps / 6.0, stddev_mbps / 3.0, buffer_s / 60.0, remaining_frac};
}

EstimatorDataset make_estimator_dataset(std::span<const SyntheticSpec> grid,
                                        const VideoManifest& manifest,
                                        const QoeParams& params, const SimConfig& sim,
                                        const DpConfig& dp) {
  EstimatorDataset data;
  const int T = manifest.chunk_count;
  data.reserve(grid.size() * static_cast<std::size_t>(T + 1));
  for (std::size_t cell = 0; cell < grid.size(); ++cell) {
    const SyntheticSpec& spec = grid[cell];
    const NetworkTrace trace = gen_synthetic_trace(spec);
    const SessionState start = init_session(manifest, trace, sim);
    const Plan plan = dp_plan(manifest, trace, params, sim, start, dp);
    const auto records = simulate_plan(plan.actions, manifest, trace, params, sim, start);
    double buffer = start.buffer_s;
    for (int t = 0; t <= T; ++t) {
      EstimatorSample s;
      s.features = {spec.mean_mbps, spec.stddev_mbps, buffer,
                    static_cast<double>(T - t) / static_cast<double>(T)};
      s.label = params.qoe_to_go_scale * plan.value_to_go[static_cast<std::size_t>(t)];
      s.cell = static_cast<int>(cell);
      data.push_back(s);
      if (t < T) buffer = records[static_cast<std::size_t>(t)].buffer_after_s;
    }
  }
  return data;
}

void save_estimator_dataset(const EstimatorDataset& data, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write dataset " + path);
  for (const auto& s : data) {
    out << nlohmann::json{{"mu", s.features.mean_mbps},
                          {"sigma", s.features.stddev_mbps},
                          {"buffer_s", s.features.buffer_s},
                          {"remaining_frac", s.features.remaining_frac},
                          {"label", s.label},
                          {"cell", s.cell}}
               .dump()
        << '\n';
  }
}

EstimatorDataset load_estimator_dataset(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open dataset " + path);
  EstimatorDataset data;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      EstimatorSample s;
      s.features = {j.at("mu").get<double>(), j.at("sigma").get<double>(),
                    j.at("buffer_s").get<double>(), j.at("remaining_frac").get<double>()};
      s.label = j.at("label").get<double>();
      s.cell = j.value("cell", 0);
      data.push_back(s);
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(path + ": " + e.what(), line_no);
    }
  }
  return data;
}

EstimatorModel::EstimatorModel(int hidden, unsigned long long seed) : hidden_(hidden) {
  if (hidden < 1) throw Error("estimator hidden width must be positive");
  std::mt19937_64 rng(seed);
  fc1_ = nn::Linear<float>("fc1", 4, hidden, nn::fan_in_bound(4), rng);
  fc2_ = nn::Linear<float>("fc2", hidden, 1, nn::fan_in_bound(hidden), rng);
  nn::fill_uniform(fc1_.bias.value, nn::fan_in_bound(4), rng);
  nn::fill_uniform(fc2_.bias.value, nn::fan_in_bound(hidden), rng);
}

Eigen::VectorXd EstimatorModel::predict(const nn::Matrix<float>& inputs) const {
  nn::Matrix<float> h = inputs * fc1_.weight.value;
  h.rowwise() += fc1_.bias.value.row(0);
  h = h.cwiseMax(0.0f);
  nn::Matrix<float> y = h * fc2_.weight.value;
  y.rowwise() += fc2_.bias.value.row(0);
  return y.col(0).cast<double>();
}

double EstimatorModel::estimate(const EstimatorFeatures& features) const {
  nn::Matrix<float> x(1, 4);
  x.row(0) = features.normalized().cast<float>().transpose();
  const double y = predict(x)(0);
  if (!std::isfinite(y)) throw Error("estimator produced a non-finite output");
  return std::max(0.0, y);
}

nn::Matrix<float> EstimatorModel::forward(const nn::Matrix<float>& inputs) {
  return fc2_.forward(relu_.forward(fc1_.forward(inputs)));
}

void EstimatorModel::backward(const nn::Matrix<float>& doutput) {
  fc1_.backward(relu_.backward(fc2_.backward(doutput)));
}

nn::ParamList<float> EstimatorModel::parameters() {
  nn::ParamList<float> out;
  fc1_.collect(out);
  fc2_.collect(out);
  return out;
}

nlohmann::json EstimatorModel::to_checkpoint() const {
  auto& self = const_cast<EstimatorModel&>(*this);
  return nn::make_checkpoint("qoe-to-go-estimator", {{"hidden", hidden_}},
                             nn::tensors_to_json(self.parameters()));
}

EstimatorModel EstimatorModel::from_checkpoint(const nlohmann::json& doc) {
  const auto& config = nn::checkpoint_section(doc, "qoe-to-go-estimator", "config");
  EstimatorModel model(config.at("hidden").get<int>());
  nn::tensors_from_json(doc.at("tensors"), model.parameters());
  return model;
}

void EstimatorModel::save(const std::string& path) const {
  nn::write_json_file(to_checkpoint(), path);
}

EstimatorModel EstimatorModel::load(const std::string& path) {
  return from_checkpoint(nn::read_json_file(path));
}

namespace {

nn::Matrix<float> feature_rows(const EstimatorDataset& data, std::span<const std::size_t> idx) {
  nn::Matrix<float> x(static_cast<Eigen::Index>(idx.size()), 4);
  for (std::size_t i = 0; i < idx.size(); ++i)
    x.row(static_cast<Eigen::Index>(i)) = data[idx[i]].features.normalized().cast<float>().transpose();
  return x;
}

nn::Matrix<float> label_rows(const EstimatorDataset& data, std::span<const std::size_t> idx) {
  nn::Matrix<float> y(static_cast<Eigen::Index>(idx.size()), 1);
  for (std::size_t i = 0; i < idx.size(); ++i)
    y(static_cast<Eigen::Index>(i), 0) = static_cast<float>(data[idx[i]].label);
  return y;
}

}  // namespace

EstimatorModel train_estimator(const EstimatorDataset& data, const EstimatorTrainConfig& config,
                               EstimatorTrainReport* report) {
  if (data.empty()) throw Error("estimator dataset is empty");
  if (config.epochs < 1 || config.batch_size < 1) throw Error("estimator training budget is empty");

  std::mt19937_64 rng(config.seed);
  std::vector<int> cells;
  for (const auto& s : data) cells.push_back(s.cell);
  std::sort(cells.begin(), cells.end());
  cells.erase(std::unique(cells.begin(), cells.end()), cells.end());
  std::shuffle(cells.begin(), cells.end(), rng);
  auto n_hold = static_cast<std::size_t>(std::floor(config.holdout_fraction * cells.size()));
  if (config.holdout_fraction > 0.0 && n_hold == 0 && cells.size() > 1) n_hold = 1;
  const std::set<int> held(cells.begin(), cells.begin() + static_cast<std::ptrdiff_t>(n_hold));

  std::vector<std::size_t> train, hold;
  for (std::size_t i = 0; i < data.size(); ++i)
    (held.count(data[i].cell) ? hold : train).push_back(i);
  if (train.empty()) throw Error("estimator holdout leaves no training samples");

  EstimatorModel model(config.hidden, config.seed);
  auto params = model.parameters();
  nn::AdamW<float> opt(params, {config.lr, 0.9, 0.999, 1e-8, config.weight_decay});
  const long batches_per_epoch =
      static_cast<long>((train.size() + config.batch_size - 1) / config.batch_size);
  const long total = batches_per_epoch * config.epochs;
  long step = 0;

  EstimatorTrainReport rep;
  rep.train_samples = train.size();
  rep.holdout_samples = hold.size();
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(train.begin(), train.end(), rng);
    double loss_sum = 0.0;
    for (std::size_t start = 0; start < train.size(); start += config.batch_size) {
      const auto n = std::min<std::size_t>(config.batch_size, train.size() - start);
      const std::span<const std::size_t> idx(train.data() + start, n);
      opt.zero_grad();
      const auto out = model.forward(feature_rows(data, idx));
      const auto loss = nn::mse(out, label_rows(data, idx));
      if (!std::isfinite(loss.value))
        throw TrainingError("estimator loss diverged at epoch " + std::to_string(epoch));
      model.backward(loss.grad);
      opt.step(nn::cosine_lr(step, total, config.lr));
      ++step;
      loss_sum += loss.value * static_cast<double>(n);
    }
    rep.epoch_loss.push_back(loss_sum / static_cast<double>(train.size()));
  }

  if (!hold.empty()) {
    const Eigen::VectorXd pred = model.predict(feature_rows(data, hold));
    std::vector<double> p(hold.size()), y(hold.size());
    double sq = 0.0;
    for (std::size_t i = 0; i < hold.size(); ++i) {
      p[i] = std::max(0.0, pred(static_cast<Eigen::Index>(i)));
      y[i] = data[hold[i]].label;
      sq += (p[i] - y[i]) * (p[i] - y[i]);
    }
    rep.holdout_mse = sq / static_cast<double>(hold.size());
    rep.holdout_label_variance = stats::variance(y);
    rep.holdout_spearman = hold.size() > 1 ? stats::spearman(p, y) : 0.0;
  }
  if (report) *report = std::move(rep);
  return model;
}

double EstimatorReturn::estimate_return(std::span<const ChunkRecord> history,
                                        const Observation& observation) const {
  std::vector<double> c;
  c.reserve(history.size());
  for (const auto& r : history) c.push_back(r.throughput_mbps);
  return estimate_from(c, observation);
}

double EstimatorReturn::estimate_from(std::span<const double> throughputs,
                                      const Observation& observation) const {
  NetStats s{prior_mean_, prior_stddev_};
  if (!throughputs.empty()) s = throughput_stats(throughputs, window_);
  return model_.estimate(
      {s.mean_mbps, s.stddev_mbps, observation.buffer_s, observation.remaining_frac});
}

}  // namespace karma
