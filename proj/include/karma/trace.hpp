#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "karma/error.hpp"

namespace karma {

struct TracePoint {
  double time_s = 0.0;
  double throughput_mbps = 0.0;

  bool operator==(const TracePoint&) const = default;
};

/// Piecewise-constant bandwidth. Sample i holds over [t_i, t_{i+1}); the
/// final sample holds for one more interval of the last spacing, after
/// which the trace wraps around.
class NetworkTrace {
 public:
  NetworkTrace() = default;
  NetworkTrace(std::vector<TracePoint> points, std::string source_tag = {});

  const std::vector<TracePoint>& points() const noexcept { return points_; }
  const std::string& source_tag() const noexcept { return tag_; }
  void set_source_tag(std::string tag) { tag_ = std::move(tag); }
  std::size_t size() const noexcept { return points_.size(); }

  /// Length of one loop of the trace in seconds.
  double period_s() const;
  /// End of segment i (start of segment i + 1, or the period for the last).
  double segment_end(std::size_t i) const;
  /// Segment holding trace-relative time `t` in [0, period).
  std::size_t segment_at(double t) const;

  double mean_mbps() const;
  double min_mbps() const;

  /// Same trace with every throughput multiplied by `factor` and every
  /// timestamp by `time_factor`.
  NetworkTrace scaled(double factor, double time_factor = 1.0) const;

  bool operator==(const NetworkTrace&) const = default;

 private:
  std::vector<TracePoint> points_;
  std::string tag_;
};

/// Parses "time_s throughput_mbps" lines; times are re-based to start at 0.
NetworkTrace parse_cooked_trace(std::string_view text, std::string tag = {});
std::string serialize_cooked_trace(const NetworkTrace& trace);
NetworkTrace load_cooked_trace(const std::string& path);
void save_cooked_trace(const NetworkTrace& trace, const std::string& path);

struct FilterDecision {
  bool accepted = false;
  std::string reason;
};

struct TraceFilter {
  double max_mean_mbps = 6.0;  // accept iff mean < this
  double min_floor_mbps = 0.2;  // accept iff min > this
};

FilterDecision filter_trace(const NetworkTrace& trace, const TraceFilter& rule = {});

struct SyntheticSpec {
  double mean_mbps = 1.0;
  double stddev_mbps = 0.0;
  double duration_s = 320.0;
  double sample_interval_s = 1.0;
  unsigned long long seed = 0;

  void validate() const;
};

inline constexpr double kSyntheticFloorMbps = 0.05;

/// One N(mu, sigma^2) draw per interval, clamped below at the floor.
NetworkTrace gen_synthetic_trace(const SyntheticSpec& spec);

/// Random synthetic corpus. Each trace draws (mu, sigma) uniformly from the
/// given ranges; with regime_s > 0 the pair is redrawn every regime_s seconds.
struct SyntheticCorpusSpec {
  std::size_t count = 100;
  double mu_min = 0.5;
  double mu_max = 6.0;
  double sigma_max = 1.0;
  double regime_s = 0.0;
  double duration_s = 320.0;
  unsigned long long seed = 11;

  void validate() const;
};

std::vector<NetworkTrace> gen_synthetic_corpus(const SyntheticCorpusSpec& spec);

/// mu in {0.5, ..., 6.0}, sigma in {0, ..., 3.0}; one spec per cell.
/// Steps default to 0.1; the seed of each cell is derived from `seed`.
std::vector<SyntheticSpec> synthetic_grid(double mu_step = 0.1,
                                          double sigma_step = 0.1,
                                          unsigned long long seed = 1,
                                          double duration_s = 320.0);

enum class Split { Train, Test };

std::string_view to_string(Split split);
Split split_from_string(std::string_view text);

struct TraceCorpus {
  std::vector<NetworkTrace> traces;
  std::vector<Split> splits;  // parallel to traces

  std::vector<NetworkTrace> subset(Split which) const;
  std::size_t count(Split which) const;
};

/// Seeded shuffle; floor(n * train_fraction) traces go to training.
TraceCorpus split_corpus(std::vector<NetworkTrace> traces,
                         double train_fraction = 0.7,
                         unsigned long long seed = 0);

/// Corpus index: JSON list of {"path", "split"}; paths relative to the
/// index file are resolved against its directory.
struct CorpusEntry {
  std::string path;
  Split split = Split::Train;
};

std::vector<CorpusEntry> load_corpus_index(const std::string& path);
void save_corpus_index(const std::vector<CorpusEntry>& entries,
                       const std::string& path);
TraceCorpus load_corpus(const std::string& index_path);

}  // namespace karma
