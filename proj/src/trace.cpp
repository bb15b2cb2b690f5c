#include "karma/trace.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

namespace karma {

NetworkTrace::NetworkTrace(std::vector<TracePoint> points, std::string tag)
    : points_(std::move(points)), tag_(std::move(tag)) {
  if (points_.size() < 2) throw Error("trace needs at least 2 points");
  if (points_.front().time_s != 0.0) throw Error("trace must start at time 0");
  for (std::size_t i = 0; i < points_.size(); ++i) {
    if (!(points_[i].throughput_mbps > 0.0) ||
        !std::isfinite(points_[i].throughput_mbps))
      throw Error("trace throughput must be positive at point " +
                  std::to_string(i));
    if (i > 0 && !(points_[i].time_s > points_[i - 1].time_s))
      throw Error("trace times must be strictly increasing at point " +
                  std::to_string(i));
  }
}

double NetworkTrace::period_s() const {
  const std::size_t n = points_.size();
  return 2.0 * points_[n - 1].time_s - points_[n - 2].time_s;
}

double NetworkTrace::segment_end(std::size_t i) const {
  return i + 1 < points_.size() ? points_[i + 1].time_s : period_s();
}

std::size_t NetworkTrace::segment_at(double t) const {
  auto it = std::upper_bound(
      points_.begin(), points_.end(), t,
      [](double value, const TracePoint& p) { return value < p.time_s; });
  return it == points_.begin() ? 0 : static_cast<std::size_t>(it - points_.begin()) - 1;
}

double NetworkTrace::mean_mbps() const {
  double sum = 0.0;
  for (const auto& p : points_) sum += p.throughput_mbps;
  return sum / static_cast<double>(points_.size());
}

double NetworkTrace::min_mbps() const {
  return std::min_element(points_.begin(), points_.end(),
                          [](const TracePoint& a, const TracePoint& b) {
                            return a.throughput_mbps < b.throughput_mbps;
                          })
      ->throughput_mbps;
}

NetworkTrace NetworkTrace::scaled(double factor, double time_factor) const {
  std::vector<TracePoint> pts = points_;
  for (auto& p : pts) {
    p.throughput_mbps *= factor;
    p.time_s *= time_factor;
  }
  return NetworkTrace(std::move(pts), tag_);
}

namespace {

bool parse_double(std::string_view token, double& out) {
  const char* begin = token.data();
  const char* end = token.data() + token.size();
  auto [ptr, ec] = std::from_chars(begin, end, out);
  return ec == std::errc() && ptr == end && std::isfinite(out);
}

}  // namespace

NetworkTrace parse_cooked_trace(std::string_view text, std::string tag) {
  std::vector<TracePoint> points;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const std::size_t eol = std::min(text.find('\n', pos), text.size());
    std::string_view line = text.substr(pos, eol - pos);
    pos = eol + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);

    std::vector<std::string_view> fields;
    std::size_t i = 0;
    while (i < line.size()) {
      while (i < line.size() && (line[i] == ' ' || line[i] == '\t')) ++i;
      const std::size_t start = i;
      while (i < line.size() && line[i] != ' ' && line[i] != '\t') ++i;
      if (i > start) fields.push_back(line.substr(start, i - start));
    }
    if (fields.empty()) continue;
    if (fields.size() != 2)
      throw ParseError("expected 2 fields, got " + std::to_string(fields.size()),
                       line_no);
    TracePoint p;
    if (!parse_double(fields[0], p.time_s) ||
        !parse_double(fields[1], p.throughput_mbps))
      throw ParseError("non-numeric field", line_no);
    if (!points.empty() && !(p.time_s > points.back().time_s))
      throw ParseError("time is not strictly increasing", line_no);
    if (!(p.throughput_mbps > 0.0))
      throw ParseError("throughput must be positive", line_no);
    points.push_back(p);
  }
  if (points.size() < 2) throw ParseError("trace needs at least 2 points", 0);
  const double origin = points.front().time_s;
  for (auto& p : points) p.time_s -= origin;
  return NetworkTrace(std::move(points), std::move(tag));
}

std::string serialize_cooked_trace(const NetworkTrace& trace) {
  std::string out;
  char buf[64];
  for (const auto& p : trace.points()) {
    // %.17g round-trips doubles exactly.
    int n = std::snprintf(buf, sizeof buf, "%.17g %.17g\n", p.time_s,
                          p.throughput_mbps);
    out.append(buf, static_cast<std::size_t>(n));
  }
  return out;
}

NetworkTrace load_cooked_trace(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open trace " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  try {
    return parse_cooked_trace(ss.str(),
                              std::filesystem::path(path).filename().string());
  } catch (const ParseError& e) {
    throw ParseError(path + ": " + e.what(), e.line());
  }
}

void save_cooked_trace(const NetworkTrace& trace, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write trace " + path);
  out << serialize_cooked_trace(trace);
}

FilterDecision filter_trace(const NetworkTrace& trace, const TraceFilter& rule) {
  const double mean = trace.mean_mbps();
  const double lo = trace.min_mbps();
  if (!(mean < rule.max_mean_mbps))
    return {false, "mean throughput " + std::to_string(mean) + " Mbps >= " +
                       std::to_string(rule.max_mean_mbps)};
  if (!(lo > rule.min_floor_mbps))
    return {false, "minimum throughput " + std::to_string(lo) + " Mbps <= " +
                       std::to_string(rule.min_floor_mbps)};
  return {true, {}};
}

void SyntheticSpec::validate() const {
  if (!(mean_mbps > 0.0)) throw Error("synthetic mean must be positive");
  if (stddev_mbps < 0.0) throw Error("synthetic stddev must be non-negative");
  if (!(duration_s > 0.0)) throw Error("synthetic duration must be positive");
  if (!(sample_interval_s > 0.0))
    throw Error("synthetic sample interval must be positive");
}

NetworkTrace gen_synthetic_trace(const SyntheticSpec& spec) {
  spec.validate();
  const auto count = std::max<std::size_t>(
      2, static_cast<std::size_t>(std::ceil(spec.duration_s / spec.sample_interval_s)));
  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> gauss(spec.mean_mbps, spec.stddev_mbps);
  std::vector<TracePoint> points(count);
  for (std::size_t i = 0; i < count; ++i) {
    points[i].time_s = static_cast<double>(i) * spec.sample_interval_s;
    const double draw = spec.stddev_mbps > 0.0 ? gauss(rng) : spec.mean_mbps;
    points[i].throughput_mbps = std::max(draw, kSyntheticFloorMbps);
  }
  char tag[96];
  std::snprintf(tag, sizeof tag, "synthetic_mu%.2f_sigma%.2f_seed%llu",
                spec.mean_mbps, spec.stddev_mbps, spec.seed);
  return NetworkTrace(std::move(points), tag);
}

void SyntheticCorpusSpec::validate() const {
  if (count == 0) throw Error("synthetic corpus needs at least one trace");
  if (!(mu_min > 0.0) || mu_max < mu_min) throw Error("synthetic corpus mean range is invalid");
  if (sigma_max < 0.0) throw Error("synthetic corpus stddev range is invalid");
  if (regime_s < 0.0 || !(duration_s > 0.0)) throw Error("synthetic corpus durations are invalid");
}

std::vector<NetworkTrace> gen_synthetic_corpus(const SyntheticCorpusSpec& spec) {
  spec.validate();
  std::mt19937_64 rng(spec.seed);
  std::uniform_real_distribution<double> pick_mu(spec.mu_min, spec.mu_max);
  std::uniform_real_distribution<double> pick_sigma(0.0, spec.sigma_max);
  const auto samples = std::max<std::size_t>(2, static_cast<std::size_t>(std::ceil(spec.duration_s)));
  const auto per_regime = spec.regime_s > 0.0
                              ? std::max<std::size_t>(1, static_cast<std::size_t>(spec.regime_s))
                              : samples;
  std::vector<NetworkTrace> traces;
  traces.reserve(spec.count);
  for (std::size_t n = 0; n < spec.count; ++n) {
    std::vector<TracePoint> points(samples);
    double mu = 0.0, sigma = 0.0;
    for (std::size_t i = 0; i < samples; ++i) {
      if (i % per_regime == 0) {
        mu = pick_mu(rng);
        sigma = pick_sigma(rng);
      }
      const double draw = sigma > 0.0 ? std::normal_distribution<double>(mu, sigma)(rng) : mu;
      points[i] = {static_cast<double>(i), std::max(draw, kSyntheticFloorMbps)};
    }
    char tag[64];
    std::snprintf(tag, sizeof tag, "corpus%llu_%04zu", spec.seed, n);
    traces.emplace_back(std::move(points), tag);
  }
  return traces;
}

std::vector<SyntheticSpec> synthetic_grid(double mu_step, double sigma_step,
                                          unsigned long long seed,
                                          double duration_s) {
  if (!(mu_step > 0.0) || !(sigma_step > 0.0))
    throw Error("grid steps must be positive");
  // Integer stepping keeps grid points exact (0.1 * k, not repeated sums).
  const int mu_cells = static_cast<int>(std::floor((6.0 - 0.5) / mu_step + 1e-9)) + 1;
  const int sigma_cells = static_cast<int>(std::floor(3.0 / sigma_step + 1e-9)) + 1;
  std::vector<SyntheticSpec> grid;
  grid.reserve(static_cast<std::size_t>(mu_cells) * sigma_cells);
  std::mt19937_64 seeder(seed);
  for (int i = 0; i < mu_cells; ++i) {
    for (int j = 0; j < sigma_cells; ++j) {
      SyntheticSpec s;
      s.mean_mbps = std::round((0.5 + i * mu_step) * 1e9) / 1e9;
      s.stddev_mbps = std::round(j * sigma_step * 1e9) / 1e9;
      s.duration_s = duration_s;
      s.seed = seeder();
      grid.push_back(s);
    }
  }
  return grid;
}

std::string_view to_string(Split split) {
  return split == Split::Train ? "train" : "test";
}

Split split_from_string(std::string_view text) {
  if (text == "train") return Split::Train;
  if (text == "test") return Split::Test;
  throw Error("unknown split tag '" + std::string(text) + "'");
}

std::vector<NetworkTrace> TraceCorpus::subset(Split which) const {
  std::vector<NetworkTrace> out;
  for (std::size_t i = 0; i < traces.size(); ++i)
    if (splits[i] == which) out.push_back(traces[i]);
  return out;
}

std::size_t TraceCorpus::count(Split which) const {
  return static_cast<std::size_t>(std::count(splits.begin(), splits.end(), which));
}

TraceCorpus split_corpus(std::vector<NetworkTrace> traces, double train_fraction,
                         unsigned long long seed) {
  if (traces.size() < 2) throw Error("corpus split needs at least 2 traces");
  if (!(train_fraction >= 0.0 && train_fraction <= 1.0))
    throw Error("train fraction must lie in [0, 1]");
  std::vector<std::size_t> order(traces.size());
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  const auto n_train = static_cast<std::size_t>(
      std::floor(static_cast<double>(traces.size()) * train_fraction + 1e-9));
  TraceCorpus corpus;
  for (std::size_t k = 0; k < order.size(); ++k) {
    corpus.traces.push_back(std::move(traces[order[k]]));
    corpus.splits.push_back(k < n_train ? Split::Train : Split::Test);
  }
  return corpus;
}

std::vector<CorpusEntry> load_corpus_index(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open corpus index " + path);
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(path + ": " + e.what(), 0);
  }
  if (!doc.is_array()) throw ParseError(path + ": corpus index must be a list", 0);
  const auto base = std::filesystem::path(path).parent_path();
  std::vector<CorpusEntry> entries;
  for (const auto& item : doc) {
    CorpusEntry e;
    std::filesystem::path p = item.at("path").get<std::string>();
    e.path = p.is_absolute() ? p.string() : (base / p).string();
    e.split = split_from_string(item.value("split", std::string("train")));
    entries.push_back(std::move(e));
  }
  return entries;
}

void save_corpus_index(const std::vector<CorpusEntry>& entries,
                       const std::string& path) {
  nlohmann::json doc = nlohmann::json::array();
  for (const auto& e : entries)
    doc.push_back({{"path", e.path}, {"split", to_string(e.split)}});
  std::ofstream out(path);
  if (!out) throw Error("cannot write corpus index " + path);
  out << doc.dump(2) << '\n';
}

TraceCorpus load_corpus(const std::string& index_path) {
  TraceCorpus corpus;
  for (const auto& e : load_corpus_index(index_path)) {
    corpus.traces.push_back(load_cooked_trace(e.path));
    corpus.splits.push_back(e.split);
  }
  return corpus;
}

}  // namespace karma
