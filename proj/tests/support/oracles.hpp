#pragma once

#include <cmath>
#include <random>
#include <vector>

#include "karma/expert.hpp"

namespace karma::oracle {

struct Instance {
  VideoManifest manifest;
  NetworkTrace trace;
  SessionState start;
};

struct BruteResult {
  double best = -1e300;
  std::vector<int> actions;
  bool aligned = true;  // every visited buffer/time lies on the quantum grid
};

inline bool on_grid(double v, double q) {
  const double k = v / q;
  return k == std::floor(k);
}

/// Exhaustive search over every action sequence, simulated exactly.
inline BruteResult brute_force(const Instance& in, const QoeParams& params, const SimConfig& sim,
                               double quantum = 0.0) {
  BruteResult out;
  std::vector<int> seq;
  const int levels = in.manifest.level_count();
  auto rec = [&](auto&& self, const SessionState& s, double value) -> void {
    if (quantum > 0.0 && (!on_grid(s.buffer_s, quantum) || !on_grid(s.wall_clock_s, quantum)))
      out.aligned = false;
    if (s.done(in.manifest)) {
      if (value > out.best) {
        out.best = value;
        out.actions = seq;
      }
      return;
    }
    for (int l = 0; l < levels; ++l) {
      const StepResult r = step(s, l, in.manifest, in.trace, sim, params);
      seq.push_back(l);
      self(self, r.state, value + r.record.qoe_value);
      seq.pop_back();
    }
  };
  rec(rec, in.start, 0.0);
  return out;
}

inline VideoManifest small_manifest(int chunks, std::vector<double> ladder, Eigen::MatrixXd sizes,
                                    double duration = 4.0) {
  VideoManifest m;
  m.chunk_count = chunks;
  m.chunk_duration_s = duration;
  m.ladder = BitrateLadder(std::move(ladder));
  m.chunk_sizes_bytes = std::move(sizes);
  m.validate();
  return m;
}

/// Dyadic sizes, rates and switch times so every reachable quantity is an
/// exact multiple of 1/64 s.
inline Instance aligned_instance(std::mt19937_64& rng) {
  std::uniform_int_distribution<int> chunks(1, 6), levels(1, 3), pick(0, 3);
  const int T = chunks(rng), L = levels(rng);
  std::vector<double> ladder;
  for (int l = 0; l < L; ++l) ladder.push_back(500.0 * (l + 1) + 250.0 * pick(rng));
  std::sort(ladder.begin(), ladder.end());
  ladder.erase(std::unique(ladder.begin(), ladder.end()), ladder.end());
  Eigen::MatrixXd sizes(T, static_cast<Eigen::Index>(ladder.size()));
  for (int c = 0; c < T; ++c) {
    double bits = 0.0;
    for (Eigen::Index l = 0; l < sizes.cols(); ++l) {
      bits += 0.25e6 * std::uniform_int_distribution<int>(1, 12)(rng);
      sizes(c, l) = bits / 8.0;
    }
  }
  const double rates[] = {0.5, 1.0, 2.0, 4.0};
  std::vector<TracePoint> pts{{0.0, rates[pick(rng)]}};
  if (std::bernoulli_distribution(0.5)(rng))
    pts.push_back({0.25 * std::uniform_int_distribution<int>(4, 40)(rng), rates[pick(rng)]});
  else
    pts.push_back({1.0, pts[0].throughput_mbps});
  Instance in{small_manifest(T, ladder, sizes), NetworkTrace(pts, "aligned"), {}};
  if (std::bernoulli_distribution(0.5)(rng)) {
    in.start.buffer_s = 0.5 * std::uniform_int_distribution<int>(0, 40)(rng);
    in.start.last_level = std::uniform_int_distribution<int>(0, static_cast<int>(ladder.size()) - 1)(rng);
  }
  return in;
}

/// Arbitrary real sizes and rates.
inline Instance random_instance(std::mt19937_64& rng) {
  std::uniform_int_distribution<int> chunks(2, 6), levels(2, 3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const int T = chunks(rng), L = levels(rng);
  std::vector<double> ladder;
  double rate = 200.0;
  for (int l = 0; l < L; ++l) ladder.push_back(rate += 300.0 + 1500.0 * u(rng));
  Eigen::MatrixXd sizes(T, L);
  for (int c = 0; c < T; ++c)
    for (int l = 0; l < L; ++l) sizes(c, l) = ladder[l] * 1000.0 * 4.0 / 8.0 * (0.8 + 0.4 * u(rng));
  for (int c = 0; c < T; ++c)
    for (int l = 1; l < L; ++l) sizes(c, l) = std::max(sizes(c, l), sizes(c, l - 1));
  std::vector<TracePoint> pts{{0.0, 0.3 + 4.0 * u(rng)}};
  pts.push_back({2.0 + 20.0 * u(rng), std::bernoulli_distribution(0.5)(rng) ? 0.3 + 4.0 * u(rng)
                                                                           : pts[0].throughput_mbps});
  Instance in{small_manifest(T, ladder, sizes), NetworkTrace(pts, "random"), {}};
  return in;
}

}  // namespace karma::oracle
