// Copyright 2026 The imlkd Authors
// SPDX-License-Identifier: Apache-2.0
//
// Brute-force EER / minDCF sweeps shared by the unit and acceptance suites.

#ifndef IMLKD_TESTS_ORACLES_HPP
#define IMLKD_TESTS_ORACLES_HPP

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "imlkd/metrics.hpp"

namespace imlkd::testing {

// Exhaustive sweep, counting by direct comparison.
inline imlkd::EerResult eer_oracle(const imlkd::ScoreSet& s) {
  std::vector<double> thresholds = s.scores;
  std::sort(thresholds.begin(), thresholds.end());
  double best_gap = INFINITY;
  imlkd::EerResult best;
  for (double theta : thresholds) {
    double fa = 0, fr = 0, nt = 0, nn = 0;
    for (std::size_t i = 0; i < s.scores.size(); ++i) {
      if (s.labels[i]) {
        ++nt;
        fr += s.scores[i] < theta;
      } else {
        ++nn;
        fa += s.scores[i] > theta;
      }
    }
    const double gap = std::abs(fa / nn - fr / nt);
    if (gap < best_gap) {
      best_gap = gap;
      best = {(fa / nn + fr / nt) / 2, theta};
    }
  }
  return best;
}

inline double dcf_oracle(const imlkd::ScoreSet& s, double p) {
  std::vector<double> thresholds = s.scores;
  thresholds.push_back(INFINITY);
  double best = INFINITY;
  for (double theta : thresholds) {
    double miss = 0, fa = 0, nt = 0, nn = 0;
    for (std::size_t i = 0; i < s.scores.size(); ++i) {
      if (s.labels[i]) {
        ++nt;
        miss += s.scores[i] < theta;
      } else {
        ++nn;
        fa += s.scores[i] >= theta;
      }
    }
    best = std::min(best, p * miss / nt + (1 - p) * fa / nn);
  }
  return best / std::min(p, 1 - p);
}

inline imlkd::ScoreSet random_set(std::mt19937_64& rng, std::size_t n) {
  std::uniform_real_distribution<double> u(-1, 1);
  std::bernoulli_distribution target(0.3);
  imlkd::ScoreSet s;
  for (std::size_t i = 0; i < n; ++i) {
    const bool tar = target(rng) || i == 0;
    // Coarse grid so ties occur.
    const double v = std::round((u(rng) + (tar ? 0.4 : 0.0)) * 40) / 40;
    s.add(v, i == 1 ? false : tar);
  }
  return s;
}

}  // namespace imlkd::testing

#endif  // IMLKD_TESTS_ORACLES_HPP
