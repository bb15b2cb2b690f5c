#pragma once

#include <deque>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "karma/dt_model.hpp"
#include "karma/estimator.hpp"
#include "karma/expert.hpp"
#include "karma/sim.hpp"

namespace karma {

/// Fixed divisors that bring observation fields to roughly unit range.
struct ObservationScale {
  double buffer_s = 60.0;
  double throughput_mbps = 6.0;
  double download_s = 4.0;
  double size_bytes = 1e6;
};

/// (b, c, d, e..., f) scaled; length 4 + ladder size.
std::vector<double> observation_vector(const Observation& obs, const ObservationScale& scale);

struct DtConfig {
  DtShape shape;
  ObservationScale scale;
  unsigned long long seed = 0;
};

nlohmann::json to_json(const DtConfig& config);
DtConfig dt_config_from_json(const nlohmann::json& doc);

/// Shape defaults for a ladder of `levels` entries and K = `context_len`.
DtConfig default_dt_config(int levels, int context_len = 4, int max_timestep = 48);

struct WindowStep {
  int timestep = 0;
  Observation observation;
  double r_hat = 0.0;
  std::optional<int> action;  // empty while the decision is pending
};

/// The last K (R-hat, o, a) tuples seen by a streaming session. Only the
/// newest tuple may lack its action.
class TrajectoryWindow {
 public:
  explicit TrajectoryWindow(int capacity);

  /// Adds a pending (R-hat, o) pair for `timestep`; evicts the oldest tuple
  /// beyond capacity. The previous tuple must be complete.
  void append(int timestep, Observation observation, double r_hat);
  /// Fills the pending action slot.
  void complete(int action);
  /// complete(action) followed by append(next timestep, ...).
  void update(int action, Observation next_observation, double next_r_hat);

  bool pending() const { return !steps_.empty() && !steps_.back().action; }
  bool empty() const { return steps_.empty(); }
  std::size_t size() const { return steps_.size(); }
  int capacity() const { return capacity_; }
  std::size_t token_count() const { return 3 * steps_.size() - (pending() ? 1 : 0); }
  const std::deque<WindowStep>& steps() const { return steps_; }
  void clear() { steps_.clear(); }

 private:
  int capacity_;
  std::deque<WindowStep> steps_;
};

/// Float decision transformer plus its observation scaling.
class DtModel {
 public:
  explicit DtModel(const DtConfig& config);

  const DtConfig& config() const { return config_; }
  DecisionTransformer<float>& network() { return net_; }

  DtBatch<float> window_batch(const TrajectoryWindow& window) const;
  /// Token embeddings of a window in (R-hat, o, a) order, one row per token.
  nn::Matrix<float> tokenize(const TrajectoryWindow& window);
  /// Inference-mode logits, one row per timestep in the window.
  nn::Matrix<float> logits(const TrajectoryWindow& window);
  /// Argmax of the newest timestep's logits; ties go to the lower level.
  int decide(const TrajectoryWindow& window);

  nlohmann::json to_checkpoint();
  static DtModel from_checkpoint(const nlohmann::json& doc);
  void save(const std::string& path);
  static DtModel load(const std::string& path);

 private:
  DtConfig config_;
  DecisionTransformer<float> net_;
};

struct DtTrainConfig {
  long steps = 2000;
  int batch_size = 128;
  double lr = 1e-3;
  double weight_decay = 1e-4;
  double grad_clip = 1.0;
  bool dropout = true;
  unsigned long long seed = 0;
};

struct DtTrainReport {
  std::vector<double> step_loss;
};

/// Segment of K consecutive tuples starting at `start` of `trajectory`.
struct SegmentRef {
  std::size_t trajectory = 0;
  std::size_t start = 0;
};

DtBatch<float> make_segment_batch(std::span<const Trajectory> trajectories,
                                  std::span<const SegmentRef> segments, const DtConfig& config);

/// Cross-entropy training on uniformly sampled K-step segments with AdamW
/// and cosine decay. `progress(step, loss)` is called after every step.
DtModel train_dt(std::span<const Trajectory> trajectories, const DtConfig& config,
                 const DtTrainConfig& train, DtTrainReport* report = nullptr,
                 const std::function<void(long, double)>& progress = {});

/// Fraction of expert actions reproduced by decide() on windows built from
/// the trajectories themselves.
double expert_action_accuracy(DtModel& model, std::span<const Trajectory> trajectories);

/// Streams with the decision transformer, refreshing R-hat from the
/// estimator at every chunk. Owns copies of both models.
class KarmaPolicy final : public AbrPolicy {
 public:
  KarmaPolicy(DtModel model, EstimatorModel estimator, int history_window = 4)
      : model_(std::move(model)), estimator_(std::move(estimator)),
        returns_(estimator_, history_window), window_(model_.config().shape.context_len) {}
  KarmaPolicy(const KarmaPolicy&) = delete;
  KarmaPolicy& operator=(const KarmaPolicy&) = delete;

  std::string name() const override { return "karma"; }
  void begin_session(const VideoManifest&, const NetworkTrace&) override;
  int choose(const DecisionContext& ctx) override;
  const TrajectoryWindow& window() const { return window_; }

 private:
  DtModel model_;
  EstimatorModel estimator_;
  EstimatorReturn returns_;
  TrajectoryWindow window_;
  std::optional<int> last_action_;
};

}  // namespace karma
