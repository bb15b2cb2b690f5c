#include "karma/qoe.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

namespace karma {

BitrateLadder::BitrateLadder(std::vector<double> levels_kbps)
    : levels_(std::move(levels_kbps)) {
  if (levels_.empty()) throw Error("bitrate ladder is empty");
  for (std::size_t i = 0; i < levels_.size(); ++i) {
    if (!(levels_[i] > 0.0)) throw Error("bitrate ladder levels must be positive");
    if (i > 0 && !(levels_[i] > levels_[i - 1]))
      throw Error("bitrate ladder must be strictly ascending");
  }
}

int BitrateLadder::highest_at_most(double rate_kbps) const {
  int level = 0;
  for (std::size_t i = 0; i < levels_.size(); ++i)
    if (levels_[i] <= rate_kbps) level = static_cast<int>(i);
  return level;
}

BitrateLadder BitrateLadder::standard() {
  return BitrateLadder({300, 750, 1200, 1850, 2850, 4300});
}

void VideoManifest::validate() const {
  if (chunk_count < 1) throw Error("manifest needs at least one chunk");
  if (!(chunk_duration_s > 0.0)) throw Error("chunk duration must be positive");
  if (ladder.size() == 0) throw Error("manifest ladder is empty");
  if (chunk_sizes_bytes.rows() != chunk_count ||
      chunk_sizes_bytes.cols() != static_cast<Eigen::Index>(ladder.size()))
    throw Error("chunk size table must be chunk_count x ladder size");
  for (Eigen::Index c = 0; c < chunk_sizes_bytes.rows(); ++c) {
    for (Eigen::Index l = 0; l < chunk_sizes_bytes.cols(); ++l) {
      const double size = chunk_sizes_bytes(c, l);
      if (!(size > 0.0) || !std::isfinite(size))
        throw Error("chunk " + std::to_string(c) + " has a non-positive size");
      if (l > 0 && size < chunk_sizes_bytes(c, l - 1))
        throw Error("chunk " + std::to_string(c) +
                    " sizes decrease with increasing bitrate");
    }
  }
}

VideoManifest VideoManifest::standard(double variability,
                                      unsigned long long seed) {
  VideoManifest m;
  m.chunk_count = 48;
  m.chunk_duration_s = 4.0;
  m.ladder = BitrateLadder::standard();
  m.name = variability > 0.0 ? "standard-vbr" : "standard";
  m.chunk_sizes_bytes.resize(m.chunk_count, m.ladder.size());
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> jitter(1.0 - variability,
                                                1.0 + variability);
  for (int c = 0; c < m.chunk_count; ++c) {
    const double factor = variability > 0.0 ? jitter(rng) : 1.0;
    for (std::size_t l = 0; l < m.ladder.size(); ++l)
      m.chunk_sizes_bytes(c, l) =
          std::round(m.ladder[l] * 1000.0 * m.chunk_duration_s / 8.0 * factor);
  }
  return m;
}

nlohmann::json to_json(const VideoManifest& manifest) {
  nlohmann::json sizes = nlohmann::json::array();
  for (Eigen::Index c = 0; c < manifest.chunk_sizes_bytes.rows(); ++c) {
    nlohmann::json row = nlohmann::json::array();
    for (Eigen::Index l = 0; l < manifest.chunk_sizes_bytes.cols(); ++l)
      row.push_back(manifest.chunk_sizes_bytes(c, l));
    sizes.push_back(std::move(row));
  }
  return {{"name", manifest.name},
          {"chunk_count", manifest.chunk_count},
          {"chunk_duration_s", manifest.chunk_duration_s},
          {"bitrates_kbps", manifest.ladder.levels()},
          {"chunk_sizes_bytes", std::move(sizes)}};
}

VideoManifest manifest_from_json(const nlohmann::json& doc) {
  VideoManifest m;
  try {
    m.chunk_count = doc.at("chunk_count").get<int>();
    m.chunk_duration_s = doc.at("chunk_duration_s").get<double>();
    m.ladder = BitrateLadder(doc.at("bitrates_kbps").get<std::vector<double>>());
    m.name = doc.value("name", std::string("video"));
    const auto& rows = doc.at("chunk_sizes_bytes");
    if (!rows.is_array() || rows.size() != static_cast<std::size_t>(m.chunk_count))
      throw Error("chunk_sizes_bytes must have chunk_count rows");
    m.chunk_sizes_bytes.resize(m.chunk_count, m.ladder.size());
    for (int c = 0; c < m.chunk_count; ++c) {
      const auto row = rows[c].get<std::vector<double>>();
      if (row.size() != m.ladder.size())
        throw Error("chunk " + std::to_string(c) + " has the wrong number of sizes");
      for (std::size_t l = 0; l < row.size(); ++l) m.chunk_sizes_bytes(c, l) = row[l];
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("manifest: ") + e.what(), 0);
  }
  m.validate();
  return m;
}

VideoManifest load_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open manifest " + path);
  try {
    return manifest_from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(path + ": " + e.what(), 0);
  }
}

void save_manifest(const VideoManifest& manifest, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write manifest " + path);
  out << to_json(manifest).dump(2) << '\n';
}

void QoeParams::validate() const {
  if (quality_scale < 0 || rebuffer_penalty < 0 || smooth_penalty < 0 ||
      qoe_to_go_scale < 0)
    throw Error("QoE parameters must be non-negative");
}

nlohmann::json to_json(const QoeParams& p) {
  return {{"quality_scale", p.quality_scale},
          {"rebuffer_penalty", p.rebuffer_penalty},
          {"smooth_penalty", p.smooth_penalty},
          {"qoe_to_go_scale", p.qoe_to_go_scale}};
}

QoeParams qoe_params_from_json(const nlohmann::json& doc) {
  QoeParams p;
  p.quality_scale = doc.value("quality_scale", p.quality_scale);
  p.rebuffer_penalty = doc.value("rebuffer_penalty", p.rebuffer_penalty);
  p.smooth_penalty = doc.value("smooth_penalty", p.smooth_penalty);
  p.qoe_to_go_scale = doc.value("qoe_to_go_scale", p.qoe_to_go_scale);
  p.validate();
  return p;
}

nlohmann::json to_json(const ChunkRecord& r) {
  return {{"chunk_index", r.chunk_index},   {"chosen_level", r.chosen_level},
          {"bitrate_kbps", r.bitrate_kbps}, {"rebuffer_s", r.rebuffer_s},
          {"download_s", r.download_s},     {"throughput_mbps", r.throughput_mbps},
          {"buffer_after_s", r.buffer_after_s}, {"sleep_s", r.sleep_s},
          {"qoe_value", r.qoe_value}};
}

ChunkRecord chunk_record_from_json(const nlohmann::json& doc) {
  ChunkRecord r;
  r.chunk_index = doc.at("chunk_index").get<int>();
  r.chosen_level = doc.at("chosen_level").get<int>();
  r.bitrate_kbps = doc.at("bitrate_kbps").get<double>();
  r.rebuffer_s = doc.at("rebuffer_s").get<double>();
  r.download_s = doc.at("download_s").get<double>();
  r.throughput_mbps = doc.at("throughput_mbps").get<double>();
  r.buffer_after_s = doc.at("buffer_after_s").get<double>();
  r.sleep_s = doc.value("sleep_s", 0.0);
  r.qoe_value = doc.at("qoe_value").get<double>();
  return r;
}

double chunk_qoe(double rate_kbps, std::optional<double> previous_kbps,
                 double rebuffer_s, const QoeParams& params) {
  if (rebuffer_s < 0.0) throw Error("rebuffer time must be non-negative");
  const double q = quality(rate_kbps, params);
  const double smooth =
      previous_kbps ? std::abs(q - quality(*previous_kbps, params)) : 0.0;
  return q - params.rebuffer_penalty * rebuffer_s -
         params.smooth_penalty * smooth;
}

SessionQoe session_qoe(std::span<const ChunkRecord> records,
                       const QoeParams& params) {
  if (records.empty()) throw Error("session has no chunk records");
  SessionQoe out;
  std::optional<double> previous;
  for (std::size_t i = 0; i < records.size(); ++i) {
    const ChunkRecord& r = records[i];
    if (r.chunk_index != static_cast<int>(i))
      throw Error("chunk records are not contiguous at position " +
                  std::to_string(i));
    const double q = quality(r.bitrate_kbps, params);
    out.total += chunk_qoe(r.bitrate_kbps, previous, r.rebuffer_s, params);
    out.sums.utility += q;
    out.sums.rebuffer_penalty += params.rebuffer_penalty * r.rebuffer_s;
    if (previous)
      out.sums.smooth_penalty +=
          params.smooth_penalty * std::abs(q - quality(*previous, params));
    previous = r.bitrate_kbps;
  }
  out.mean = out.total / static_cast<double>(records.size());
  return out;
}

}  // namespace karma
