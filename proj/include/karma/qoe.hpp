#pragma once

#include <Eigen/Dense>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "karma/error.hpp"

namespace karma {

/// Ascending set of encodings, in kbps.
class BitrateLadder {
 public:
  BitrateLadder() = default;
  explicit BitrateLadder(std::vector<double> levels_kbps);

  std::size_t size() const noexcept { return levels_.size(); }
  double operator[](std::size_t level) const { return levels_.at(level); }
  const std::vector<double>& levels() const noexcept { return levels_; }
  double lowest() const { return levels_.front(); }
  double highest() const { return levels_.back(); }

  /// Highest level whose bitrate does not exceed `rate_kbps`; 0 if none.
  int highest_at_most(double rate_kbps) const;

  bool operator==(const BitrateLadder&) const = default;

  static BitrateLadder standard();  // {300, 750, 1200, 1850, 2850, 4300}

 private:
  std::vector<double> levels_;
};

/// Chunked video description. Sizes are bytes, indexed [chunk][level].
struct VideoManifest {
  int chunk_count = 0;
  double chunk_duration_s = 0.0;
  BitrateLadder ladder;
  Eigen::MatrixXd chunk_sizes_bytes;
  std::string name = "video";

  double chunk_bytes(int chunk, int level) const {
    return chunk_sizes_bytes(chunk, level);
  }
  int level_count() const { return static_cast<int>(ladder.size()); }

  /// Throws karma::Error when an invariant does not hold.
  void validate() const;

  /// 48 x 4 s chunks on the standard ladder. With `variability` > 0 every
  /// chunk is scaled by a seeded factor in [1 - v, 1 + v], shared across
  /// levels so that sizes stay ordered.
  static VideoManifest standard(double variability = 0.0,
                                unsigned long long seed = 7);
};

nlohmann::json to_json(const VideoManifest& manifest);
VideoManifest manifest_from_json(const nlohmann::json& doc);
VideoManifest load_manifest(const std::string& path);
void save_manifest(const VideoManifest& manifest, const std::string& path);

struct QoeParams {
  double quality_scale = 0.001;    // utility per kbps
  double rebuffer_penalty = 4.3;   // per stalled second
  double smooth_penalty = 1.0;
  double qoe_to_go_scale = 0.01;   // lambda

  void validate() const;
};

nlohmann::json to_json(const QoeParams& params);
QoeParams qoe_params_from_json(const nlohmann::json& doc);

/// Outcome of downloading one chunk.
struct ChunkRecord {
  int chunk_index = 0;
  int chosen_level = 0;
  double bitrate_kbps = 0.0;
  double rebuffer_s = 0.0;
  double download_s = 0.0;
  double throughput_mbps = 0.0;
  double buffer_after_s = 0.0;
  double sleep_s = 0.0;
  double qoe_value = 0.0;

  bool operator==(const ChunkRecord&) const = default;
};

nlohmann::json to_json(const ChunkRecord& record);
ChunkRecord chunk_record_from_json(const nlohmann::json& doc);

/// Bitrate utility q(r).
inline double quality(double rate_kbps, const QoeParams& params) {
  return params.quality_scale * rate_kbps;
}

/// Per-chunk QoE. `previous_kbps` is empty for the first chunk, which
/// carries no smoothness penalty.
double chunk_qoe(double rate_kbps, std::optional<double> previous_kbps,
                 double rebuffer_s, const QoeParams& params);

struct QoeComponents {
  double utility = 0.0;
  double rebuffer_penalty = 0.0;
  double smooth_penalty = 0.0;

  double total() const { return utility - rebuffer_penalty - smooth_penalty; }
};

struct SessionQoe {
  double total = 0.0;
  double mean = 0.0;  // total / chunk count
  QoeComponents sums;
};

/// Aggregates a contiguous run of records starting at chunk 0.
SessionQoe session_qoe(std::span<const ChunkRecord> records,
                       const QoeParams& params);

}  // namespace karma
