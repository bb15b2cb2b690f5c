#pragma once

#include <span>
#include <vector>

namespace karma::stats {

double mean(std::span<const double> values);
/// Population variance.
double variance(std::span<const double> values);
/// Sample standard deviation (n - 1); 0 for fewer than two values.
double sample_stddev(std::span<const double> values);
/// Ranks starting at 1; ties share their average rank.
std::vector<double> ranks(std::span<const double> values);
double pearson(std::span<const double> x, std::span<const double> y);
double spearman(std::span<const double> x, std::span<const double> y);

}  // namespace karma::stats
