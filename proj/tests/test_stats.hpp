// Copyright Contributors to the Voxset Project
// SPDX-License-Identifier: Apache-2.0
#pragma once

// Small statistical helpers shared by the randomized test suites.  All
// thresholds are chosen for n = 10^4 draws so the tests are deterministic
// given a fixed seed and fail only on real distribution bugs.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

namespace teststats {

inline double mean(const std::vector<double>& xs) {
  double acc = 0.0;
  for (double x : xs) acc += x;
  return acc / static_cast<double>(xs.size());
}

inline double stddev(const std::vector<double>& xs) {
  const double m = mean(xs);
  double acc = 0.0;
  for (double x : xs) acc += (x - m) * (x - m);
  return std::sqrt(acc / static_cast<double>(xs.size()));
}

// One-sample Kolmogorov-Smirnov statistic against a continuous CDF.
template <typename Cdf>
double ks_statistic(std::vector<double> xs, Cdf cdf) {
  std::sort(xs.begin(), xs.end());
  const double n = static_cast<double>(xs.size());
  double worst = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double f = cdf(xs[i]);
    const double lo = static_cast<double>(i) / n;
    const double hi = static_cast<double>(i + 1) / n;
    worst = std::max(worst, std::max(f - lo, hi - f));
  }
  return worst;
}

// Asymptotic critical value at significance 0.01.
inline double ks_critical(std::size_t n) {
  return 1.628 / std::sqrt(static_cast<double>(n));
}

inline double uniform_cdf(double x) { return std::clamp(x, 0.0, 1.0); }

inline double normal_cdf(double x) {
  return 0.5 * std::erfc(-x / std::sqrt(2.0));
}

// True when every bucket count is within three binomial standard deviations
// of its expectation under equal probabilities.
inline bool counts_uniform_3sigma(const std::vector<std::size_t>& counts,
                                  std::size_t draws) {
  const double p = 1.0 / static_cast<double>(counts.size());
  const double expected = static_cast<double>(draws) * p;
  const double sigma = std::sqrt(static_cast<double>(draws) * p * (1.0 - p));
  for (std::size_t c : counts) {
    if (std::abs(static_cast<double>(c) - expected) > 3.0 * sigma) return false;
  }
  return true;
}

}  // namespace teststats
