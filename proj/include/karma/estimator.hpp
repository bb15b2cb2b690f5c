#pragma once

#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "karma/expert.hpp"
#include "karma/nn/core.hpp"
#include "karma/nn/layers.hpp"
#include "karma/trace.hpp"

namespace karma {

struct NetStats {
  double mean_mbps = 0.0;
  double stddev_mbps = 0.0;  // population
};

/// Statistics of the last `window` measurements (all of them when fewer
/// exist).
NetStats throughput_stats(std::span<const double> history, int window = 4);

/// Network/playback summary fed to the QoE-to-go estimator.
struct EstimatorFeatures {
  double mean_mbps = 0.0;
  double stddev_mbps = 0.0;
  double buffer_s = 0.0;
  double remaining_frac = 0.0;

  /// (mu / 6, sigma / 3, b / 60, f).
  Eigen::Vector4d normalized() const;
};

struct EstimatorSample {
  EstimatorFeatures features;
  double label = 0.0;  // lambda-scaled optimal QoE-to-go
  int cell = 0;        // index of the synthetic trace it came from
};

using EstimatorDataset = std::vector<EstimatorSample>;

/// For every spec: generate its trace, plan the optimal session, and emit
/// one sample per decision point t = 0..T along the optimal path using the
/// spec's own (mu, sigma). The t = T row has f = 0 and label 0.
EstimatorDataset make_estimator_dataset(std::span<const SyntheticSpec> grid,
                                        const VideoManifest& manifest,
                                        const QoeParams& params, const SimConfig& sim,
                                        const DpConfig& dp = {});

void save_estimator_dataset(const EstimatorDataset& data, const std::string& path);
EstimatorDataset load_estimator_dataset(const std::string& path);

/// Two affine layers with a ReLU between them: 4 -> hidden -> 1.
class EstimatorModel {
 public:
  explicit EstimatorModel(int hidden = 128, unsigned long long seed = 0);

  /// R-hat for one feature vector, clamped below at 0.
  double estimate(const EstimatorFeatures& features) const;
  /// Unclamped network output for each row of `inputs` (n x 4, normalized).
  Eigen::VectorXd predict(const nn::Matrix<float>& inputs) const;

  /// Training-path forward/backward; caches activations.
  nn::Matrix<float> forward(const nn::Matrix<float>& inputs);
  void backward(const nn::Matrix<float>& doutput);

  nn::ParamList<float> parameters();
  int hidden() const { return hidden_; }

  nlohmann::json to_checkpoint() const;
  static EstimatorModel from_checkpoint(const nlohmann::json& doc);
  void save(const std::string& path) const;
  static EstimatorModel load(const std::string& path);

 private:
  int hidden_;
  nn::Linear<float> fc1_;
  nn::Relu<float> relu_;
  nn::Linear<float> fc2_;
};

struct EstimatorTrainConfig {
  int epochs = 150;
  int batch_size = 128;
  double lr = 1e-3;
  double weight_decay = 0.0;
  double holdout_fraction = 0.2;  // fraction of grid cells held out
  int hidden = 128;
  unsigned long long seed = 0;
};

struct EstimatorTrainReport {
  std::vector<double> epoch_loss;  // mean training MSE per epoch
  double holdout_mse = 0.0;
  double holdout_label_variance = 0.0;
  double holdout_spearman = 0.0;
  std::size_t train_samples = 0;
  std::size_t holdout_samples = 0;
};

/// Minimizes MSE with AdamW under cosine decay. Cells, not rows, are held
/// out so that no trace contributes to both sides.
EstimatorModel train_estimator(const EstimatorDataset& data, const EstimatorTrainConfig& config,
                               EstimatorTrainReport* report = nullptr);

/// R-hat from measured throughput over the last L chunks (prior before the
/// first measurement).
class EstimatorReturn final : public ReturnEstimator {
 public:
  EstimatorReturn(const EstimatorModel& model, int history_window = 4,
                  double prior_mean_mbps = 1.0, double prior_stddev_mbps = 0.0)
      : model_(model), window_(history_window), prior_mean_(prior_mean_mbps),
        prior_stddev_(prior_stddev_mbps) {}

  double estimate_return(std::span<const ChunkRecord> history,
                         const Observation& observation) const override;
  /// Same, from raw measurements, oldest first.
  double estimate_from(std::span<const double> throughputs_mbps,
                       const Observation& observation) const;

  int window() const { return window_; }

 private:
  const EstimatorModel& model_;
  int window_;
  double prior_mean_;
  double prior_stddev_;
};

}  // namespace karma
