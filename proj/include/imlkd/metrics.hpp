// Copyright 2026 The imlkd Authors
// SPDX-License-Identifier: Apache-2.0
//
// Verification scoring and saliency-guided occlusion analysis.
//
// Error-rate conventions at a threshold theta:
//   EER sweep    false accept = non-target score > theta,
//                false reject = target score < theta
//                (a score equal to theta counts as neither)
//   minDCF       accept when score >= theta; thresholds are every distinct
//                score plus "reject everything"

#ifndef IMLKD_METRICS_HPP
#define IMLKD_METRICS_HPP

#include <cstddef>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "imlkd/attribution.hpp"
#include "imlkd/model.hpp"

namespace imlkd {

double cosine_score(std::span<const double> a, std::span<const double> b);

struct ScoreSet {
  std::vector<double> scores;
  std::vector<bool> labels;  // true = target trial

  void add(double score, bool target) {
    scores.push_back(score);
    labels.push_back(target);
  }
  // Equal lengths, finite scores, both classes present.
  void validate() const;
};

struct EerResult {
  double eer = 0.0;
  double threshold = 0.0;
};

// Threshold with minimal |FAR - FRR| over the distinct scores, lowest on
// ties; the EER is the mean of the two rates there.
EerResult compute_eer(const ScoreSet& s);

struct DcfParams {
  double p_target = 0.01;
  double c_miss = 1.0;
  double c_fa = 1.0;

  void validate() const;
};

// Normalized by min(c_miss p_target, c_fa (1 - p_target)).
double compute_min_dcf(const ScoreSet& s, const DcfParams& params = {});

enum class OcclusionMode { kInsertion, kDeletion };
enum class CurveValue { kProbability, kAccuracy };

std::string_view occlusion_mode_name(OcclusionMode mode);

struct OcclusionCurve {
  std::vector<double> fractions;
  std::vector<double> values;
  OcclusionMode mode = OcclusionMode::kDeletion;
};

// Frames by descending time weight; equal weights keep ascending index.
std::vector<std::size_t> frame_ranking(const Saliency& s);

// Point k of a curve with `steps` intervals moves the first (k T) / steps
// ranked frames; moved frames come from mean_time_baseline(x). Values are
// the margin-free target probability (or 0/1 top-1 correctness).
OcclusionCurve deletion_curve(const Model& model, const Tensor& x,
                              const Saliency& s, std::size_t target,
                              std::size_t steps, const AamParams& aam = {},
                              CurveValue value = CurveValue::kProbability);
OcclusionCurve insertion_curve(const Model& model, const Tensor& x,
                               const Saliency& s, std::size_t target,
                               std::size_t steps, const AamParams& aam = {},
                               CurveValue value = CurveValue::kProbability);

struct OcclusionPair {
  OcclusionCurve insertion;
  OcclusionCurve deletion;
};
// Both curves, evaluating the shared endpoints once.
OcclusionPair occlusion_curves(const Model& model, const Tensor& x,
                               const Saliency& s, std::size_t target,
                               std::size_t steps, const AamParams& aam = {},
                               CurveValue value = CurveValue::kProbability);

// Pointwise mean of curves sharing a fraction grid and mode.
OcclusionCurve average_curves(std::span<const OcclusionCurve> curves);

// Trapezoidal integral over the fractions.
double curve_auc(const OcclusionCurve& c);

struct MetricRow {
  std::string metric;
  double value = 0.0;
  std::string seed;  // seed number, or "mean"
};

// CSV `metric,value,seed`.
void write_metrics_csv(std::ostream& out, std::span<const MetricRow> rows);
// CSV `fraction,value,mode`; several curves share one header.
void write_occlusion_csv(std::ostream& out,
                         std::span<const OcclusionCurve> curves);

}  // namespace imlkd

#endif  // IMLKD_METRICS_HPP
