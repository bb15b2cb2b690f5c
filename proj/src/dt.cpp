#include "karma/dt.hpp"

#include <cmath>
#include <random>

#include "karma/nn/checkpoint.hpp"
#include "karma/nn/loss.hpp"
#include "karma/nn/optim.hpp"

namespace karma {

std::vector<double> observation_vector(const Observation& obs, const ObservationScale& scale) {
  std::vector<double> v;
  v.reserve(4 + obs.next_sizes_bytes.size());
  v.push_back(obs.buffer_s / scale.buffer_s);
  v.push_back(obs.throughput_mbps / scale.throughput_mbps);
  v.push_back(obs.download_s / scale.download_s);
  for (double e : obs.next_sizes_bytes) v.push_back(e / scale.size_bytes);
  v.push_back(obs.remaining_frac);
  return v;
}

nlohmann::json to_json(const DtConfig& c) {
  const auto& s = c.shape;
  return {{"context_len", s.context_len},
          {"embed_dim", s.embed_dim},
          {"blocks", s.blocks},
          {"heads", s.heads},
          {"dropout", s.dropout},
          {"action_count", s.action_count},
          {"obs_dim", s.obs_dim},
          {"max_timestep", s.max_timestep},
          {"mlp_ratio", s.mlp_ratio},
          {"scale",
           {{"buffer_s", c.scale.buffer_s},
            {"throughput_mbps", c.scale.throughput_mbps},
            {"download_s", c.scale.download_s},
            {"size_bytes", c.scale.size_bytes}}},
          {"seed", c.seed}};
}

DtConfig dt_config_from_json(const nlohmann::json& doc) {
  DtConfig c;
  auto& s = c.shape;
  s.context_len = doc.at("context_len").get<int>();
  s.embed_dim = doc.at("embed_dim").get<int>();
  s.blocks = doc.at("blocks").get<int>();
  s.heads = doc.at("heads").get<int>();
  s.dropout = doc.at("dropout").get<double>();
  s.action_count = doc.at("action_count").get<int>();
  s.obs_dim = doc.at("obs_dim").get<int>();
  s.max_timestep = doc.at("max_timestep").get<int>();
  s.mlp_ratio = doc.value("mlp_ratio", 4);
  if (doc.contains("scale")) {
    const auto& sc = doc.at("scale");
    c.scale.buffer_s = sc.at("buffer_s").get<double>();
    c.scale.throughput_mbps = sc.at("throughput_mbps").get<double>();
    c.scale.download_s = sc.at("download_s").get<double>();
    c.scale.size_bytes = sc.at("size_bytes").get<double>();
  }
  c.seed = doc.value("seed", 0ULL);
  s.validate();
  return c;
}

DtConfig default_dt_config(int levels, int context_len, int max_timestep) {
  DtConfig c;
  c.shape.context_len = context_len;
  c.shape.action_count = levels;
  c.shape.obs_dim = 4 + levels;
  c.shape.max_timestep = max_timestep;
  return c;
}

TrajectoryWindow::TrajectoryWindow(int capacity) : capacity_(capacity) {
  if (capacity < 1) throw Error("window capacity must be at least 1");
}

void TrajectoryWindow::append(int timestep, Observation observation, double r_hat) {
  if (pending()) throw Error("cannot append before the pending action is completed");
  if (!steps_.empty() && timestep != steps_.back().timestep + 1)
    throw Error("window timesteps must be consecutive");
  steps_.push_back({timestep, std::move(observation), r_hat, std::nullopt});
  while (steps_.size() > static_cast<std::size_t>(capacity_)) steps_.pop_front();
}

void TrajectoryWindow::complete(int action) {
  if (!pending()) throw Error("window has no pending action to complete");
  steps_.back().action = action;
}

void TrajectoryWindow::update(int action, Observation next_observation, double next_r_hat) {
  complete(action);
  append(steps_.back().timestep + 1, std::move(next_observation), next_r_hat);
}

DtModel::DtModel(const DtConfig& config) : config_(config), net_(config.shape, config.seed) {}

DtBatch<float> DtModel::window_batch(const TrajectoryWindow& window) const {
  if (window.empty()) throw Error("decision window is empty");
  const auto& shape = config_.shape;
  DtBatch<float> b;
  b.batch = 1;
  b.steps = static_cast<Eigen::Index>(window.size());
  b.pending_last = window.pending();
  b.returns.resize(b.steps, 1);
  b.observations.resize(b.steps, shape.obs_dim);
  b.actions = nn::Matrix<float>::Zero(b.action_steps(), shape.action_count);
  Eigen::Index j = 0;
  for (const auto& step : window.steps()) {
    const auto o = observation_vector(step.observation, config_.scale);
    if (static_cast<int>(o.size()) != shape.obs_dim)
      throw Error("observation has " + std::to_string(o.size()) + " features, model expects " +
                  std::to_string(shape.obs_dim));
    for (int f = 0; f < shape.obs_dim; ++f) b.observations(j, f) = static_cast<float>(o[f]);
    b.returns(j, 0) = static_cast<float>(step.r_hat);
    if (step.action) {
      if (*step.action < 0 || *step.action >= shape.action_count)
        throw Error("window action outside the ladder");
      b.actions(j, *step.action) = 1.0f;
    }
    b.timesteps.push_back(step.timestep);
    ++j;
  }
  return b;
}

nn::Matrix<float> DtModel::tokenize(const TrajectoryWindow& window) {
  return net_.embed(window_batch(window));
}

nn::Matrix<float> DtModel::logits(const TrajectoryWindow& window) {
  return net_.forward(window_batch(window), nn::Context{});
}

int DtModel::decide(const TrajectoryWindow& window) {
  const nn::Matrix<float> z = logits(window);
  const nn::Matrix<float> last = z.bottomRows(1);
  return nn::argmax_rows(last).front();
}

nlohmann::json DtModel::to_checkpoint() {
  return nn::make_checkpoint("decision-transformer", to_json(config_),
                             nn::tensors_to_json(net_.parameters()));
}

DtModel DtModel::from_checkpoint(const nlohmann::json& doc) {
  DtModel model(dt_config_from_json(nn::checkpoint_section(doc, "decision-transformer", "config")));
  nn::tensors_from_json(doc.at("tensors"), model.net_.parameters());
  return model;
}

void DtModel::save(const std::string& path) { nn::write_json_file(to_checkpoint(), path); }

DtModel DtModel::load(const std::string& path) {
  return from_checkpoint(nn::read_json_file(path));
}

DtBatch<float> make_segment_batch(std::span<const Trajectory> trajectories,
                                  std::span<const SegmentRef> segments, const DtConfig& config) {
  const auto& shape = config.shape;
  const Eigen::Index k = shape.context_len;
  DtBatch<float> b;
  b.batch = static_cast<Eigen::Index>(segments.size());
  b.steps = k;
  b.returns.resize(b.batch * k, 1);
  b.observations.resize(b.batch * k, shape.obs_dim);
  b.actions = nn::Matrix<float>::Zero(b.batch * k, shape.action_count);
  b.timesteps.resize(static_cast<std::size_t>(b.batch * k));
  for (Eigen::Index i = 0; i < b.batch; ++i) {
    const SegmentRef& seg = segments[static_cast<std::size_t>(i)];
    const Trajectory& tr = trajectories[seg.trajectory];
    if (seg.start + static_cast<std::size_t>(k) > tr.length())
      throw Error("segment runs past the end of its trajectory");
    for (Eigen::Index j = 0; j < k; ++j) {
      const std::size_t t = seg.start + static_cast<std::size_t>(j);
      const Eigen::Index row = i * k + j;
      const auto o = observation_vector(tr.observations[t], config.scale);
      for (int f = 0; f < shape.obs_dim; ++f) b.observations(row, f) = static_cast<float>(o[f]);
      b.returns(row, 0) = static_cast<float>(tr.returns[t]);
      b.actions(row, tr.actions[t]) = 1.0f;
      b.timesteps[static_cast<std::size_t>(row)] = static_cast<int>(t);
    }
  }
  return b;
}

DtModel train_dt(std::span<const Trajectory> trajectories, const DtConfig& config,
                 const DtTrainConfig& train, DtTrainReport* report,
                 const std::function<void(long, double)>& progress) {
  if (trajectories.empty()) throw Error("no trajectories to train on");
  const auto k = static_cast<std::size_t>(config.shape.context_len);
  for (const auto& tr : trajectories) {
    if (tr.length() < k)
      throw Error("trajectory " + tr.trace_tag + " is shorter than the context length");
    if (tr.action_count != config.shape.action_count)
      throw Error("trajectory action count differs from the model's");
  }
  if (train.steps < 1 || train.batch_size < 1) throw Error("training budget is empty");

  DtModel model(config);
  auto& net = model.network();
  auto params = net.parameters();
  nn::AdamW<float> opt(params, {train.lr, 0.9, 0.999, 1e-8, train.weight_decay});
  std::mt19937_64 rng(train.seed);
  std::uniform_int_distribution<std::size_t> pick_traj(0, trajectories.size() - 1);
  nn::Context ctx{train.dropout, &rng};

  std::vector<SegmentRef> segments(static_cast<std::size_t>(train.batch_size));
  DtTrainReport rep;
  rep.step_loss.reserve(static_cast<std::size_t>(train.steps));
  for (long step = 0; step < train.steps; ++step) {
    for (auto& seg : segments) {
      seg.trajectory = pick_traj(rng);
      const std::size_t last_start = trajectories[seg.trajectory].length() - k;
      seg.start = std::uniform_int_distribution<std::size_t>(0, last_start)(rng);
    }
    const DtBatch<float> batch = make_segment_batch(trajectories, segments, config);
    opt.zero_grad();
    const nn::Matrix<float> logits = net.forward(batch, ctx);
    const auto loss = nn::cross_entropy(logits, batch.actions);
    if (!std::isfinite(loss.value))
      throw TrainingError("decision transformer loss is " + std::to_string(loss.value) +
                          " at step " + std::to_string(step));
    net.backward(loss.grad);
    nn::clip_grad_norm(params, train.grad_clip);
    opt.step(nn::cosine_lr(step, train.steps, train.lr));
    rep.step_loss.push_back(loss.value);
    if (progress) progress(step, loss.value);
  }
  if (report) *report = std::move(rep);
  return model;
}

double expert_action_accuracy(DtModel& model, std::span<const Trajectory> trajectories) {
  std::size_t hits = 0, total = 0;
  for (const auto& tr : trajectories) {
    TrajectoryWindow window(model.config().shape.context_len);
    for (std::size_t t = 0; t < tr.length(); ++t) {
      if (t > 0) window.complete(tr.actions[t - 1]);
      window.append(static_cast<int>(t), tr.observations[t], tr.returns[t]);
      hits += model.decide(window) == tr.actions[t];
      ++total;
    }
  }
  return total ? static_cast<double>(hits) / static_cast<double>(total) : 0.0;
}

void KarmaPolicy::begin_session(const VideoManifest&, const NetworkTrace&) {
  window_.clear();
  last_action_.reset();
}

int KarmaPolicy::choose(const DecisionContext& ctx) {
  const double r_hat = returns_.estimate_return(ctx.history, ctx.observation);
  if (last_action_) {
    window_.update(*last_action_, ctx.observation, r_hat);
  } else {
    window_.append(ctx.state.next_chunk, ctx.observation, r_hat);
  }
  last_action_ = model_.decide(window_);
  return *last_action_;
}

}  // namespace karma
