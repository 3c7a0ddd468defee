// Copyright 2026 The imlkd Authors
// SPDX-License-Identifier: Apache-2.0

#include "imlkd/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "imlkd/csv.hpp"

namespace imlkd {

namespace {

struct Counts {
  std::vector<double> target;     // sorted ascending
  std::vector<double> nontarget;  // sorted ascending
};

Counts split_sorted(const ScoreSet& s) {
  s.validate();
  Counts c;
  for (std::size_t i = 0; i < s.scores.size(); ++i) {
    (s.labels[i] ? c.target : c.nontarget).push_back(s.scores[i]);
  }
  std::sort(c.target.begin(), c.target.end());
  std::sort(c.nontarget.begin(), c.nontarget.end());
  return c;
}

std::vector<double> distinct_scores(const ScoreSet& s) {
  std::vector<double> v = s.scores;
  std::sort(v.begin(), v.end());
  v.erase(std::unique(v.begin(), v.end()), v.end());
  return v;
}

std::size_t count_below(const std::vector<double>& sorted, double theta) {
  return static_cast<std::size_t>(
      std::lower_bound(sorted.begin(), sorted.end(), theta) - sorted.begin());
}

std::size_t count_above(const std::vector<double>& sorted, double theta) {
  return static_cast<std::size_t>(
      sorted.end() - std::upper_bound(sorted.begin(), sorted.end(), theta));
}

double target_value(const Model& model, const Tensor& x, std::size_t target,
                    const AamParams& aam, CurveValue value) {
  const Tensor p = classify(model, x, aam);
  if (value == CurveValue::kProbability) return p[target];
  auto v = p.values();
  const auto best = std::max_element(v.begin(), v.end()) - v.begin();
  return static_cast<std::size_t>(best) == target ? 1.0 : 0.0;
}

// x with the given frames taken from `source`.
Tensor with_frames(const Tensor& x, const Tensor& source,
                   std::span<const std::size_t> frames) {
  std::vector<double> v = x.to_vector();
  const std::size_t f = x.cols();
  for (std::size_t t : frames) {
    for (std::size_t j = 0; j < f; ++j) v[t * f + j] = source.at(t, j);
  }
  return Tensor::create(x.shape(), std::move(v));
}

void check_occlusion_inputs(const Tensor& x, const Saliency& s,
                            std::size_t steps) {
  if (s.map.shape() != x.shape()) {
    throw std::invalid_argument("occlusion: saliency " +
                                shape_string(s.map.shape()) + " vs input " +
                                shape_string(x.shape()));
  }
  if (steps < 1) throw std::invalid_argument("occlusion: steps must be >= 1");
}

// Interior points of one curve; endpoints are filled by the caller.
OcclusionCurve sweep(const Model& model, const Tensor& start,
                     const Tensor& source, const std::vector<std::size_t>& order,
                     std::size_t target, std::size_t steps,
                     const AamParams& aam, CurveValue value,
                     OcclusionMode mode) {
  OcclusionCurve c;
  c.mode = mode;
  c.fractions.resize(steps + 1);
  c.values.resize(steps + 1);
  const std::size_t frames = order.size();
  for (std::size_t k = 0; k <= steps; ++k) {
    c.fractions[k] = static_cast<double>(k) / static_cast<double>(steps);
    if (k == 0 || k == steps) continue;
    const std::size_t n = k * frames / steps;
    const Tensor moved =
        with_frames(start, source, std::span(order).first(n));
    c.values[k] = target_value(model, moved, target, aam, value);
  }
  return c;
}

}  // namespace

double cosine_score(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    throw std::invalid_argument("cosine_score: length mismatch");
  }
  double ab = 0.0, aa = 0.0, bb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ab += a[i] * b[i];
    aa += a[i] * a[i];
    bb += b[i] * b[i];
  }
  if (aa == 0.0 || bb == 0.0) {
    throw std::invalid_argument("cosine_score: zero vector");
  }
  return ab / (std::sqrt(aa) * std::sqrt(bb));
}

void ScoreSet::validate() const {
  if (scores.size() != labels.size()) {
    throw std::invalid_argument("score set: scores and labels differ in length");
  }
  bool target = false, nontarget = false;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (!std::isfinite(scores[i])) {
      throw std::invalid_argument("score set: non-finite score");
    }
    (labels[i] ? target : nontarget) = true;
  }
  if (!target || !nontarget) {
    throw std::invalid_argument(
        "score set: needs at least one target and one non-target trial");
  }
}

EerResult compute_eer(const ScoreSet& s) {
  const Counts c = split_sorted(s);
  const double nt = static_cast<double>(c.target.size());
  const double nn = static_cast<double>(c.nontarget.size());
  EerResult best;
  double best_gap = std::numeric_limits<double>::infinity();
  for (double theta : distinct_scores(s)) {
    const double far = static_cast<double>(count_above(c.nontarget, theta)) / nn;
    const double frr = static_cast<double>(count_below(c.target, theta)) / nt;
    const double gap = std::abs(far - frr);
    if (gap < best_gap) {
      best_gap = gap;
      best = {0.5 * (far + frr), theta};
    }
  }
  return best;
}

void DcfParams::validate() const {
  if (!(p_target > 0.0 && p_target < 1.0)) {
    throw std::invalid_argument("minDCF: p_target must lie in (0, 1)");
  }
  if (!(c_miss > 0.0) || !(c_fa > 0.0)) {
    throw std::invalid_argument("minDCF: costs must be positive");
  }
}

double compute_min_dcf(const ScoreSet& s, const DcfParams& params) {
  params.validate();
  const Counts c = split_sorted(s);
  const double nt = static_cast<double>(c.target.size());
  const double nn = static_cast<double>(c.nontarget.size());
  const double miss_weight = params.c_miss * params.p_target;
  const double fa_weight = params.c_fa * (1.0 - params.p_target);
  // Rejecting everything.
  double best = miss_weight;
  for (double theta : distinct_scores(s)) {
    const double p_miss = static_cast<double>(count_below(c.target, theta)) / nt;
    const double p_fa = static_cast<double>(
                            c.nontarget.size() - count_below(c.nontarget, theta)) /
                        nn;
    best = std::min(best, miss_weight * p_miss + fa_weight * p_fa);
  }
  return best / std::min(miss_weight, fa_weight);
}

std::string_view occlusion_mode_name(OcclusionMode mode) {
  return mode == OcclusionMode::kInsertion ? "insertion" : "deletion";
}

std::vector<std::size_t> frame_ranking(const Saliency& s) {
  const std::vector<double> w = time_weight_curve(s);
  std::vector<std::size_t> order(w.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return w[a] > w[b]; });
  return order;
}

OcclusionPair occlusion_curves(const Model& model, const Tensor& x,
                               const Saliency& s, std::size_t target,
                               std::size_t steps, const AamParams& aam,
                               CurveValue value) {
  check_occlusion_inputs(x, s, steps);
  if (target >= model.spec().num_classes) {
    throw std::invalid_argument("occlusion: target out of range");
  }
  const Tensor source = x.detached();
  const Tensor baseline = mean_time_baseline(source);
  const std::vector<std::size_t> order = frame_ranking(s);
  const double on_input = target_value(model, source, target, aam, value);
  const double on_baseline = target_value(model, baseline, target, aam, value);

  OcclusionPair pair;
  pair.deletion = sweep(model, source, baseline, order, target, steps, aam,
                        value, OcclusionMode::kDeletion);
  pair.insertion = sweep(model, baseline, source, order, target, steps, aam,
                         value, OcclusionMode::kInsertion);
  pair.deletion.values.front() = on_input;
  pair.deletion.values.back() = on_baseline;
  pair.insertion.values.front() = on_baseline;
  pair.insertion.values.back() = on_input;
  return pair;
}

OcclusionCurve deletion_curve(const Model& model, const Tensor& x,
                              const Saliency& s, std::size_t target,
                              std::size_t steps, const AamParams& aam,
                              CurveValue value) {
  return occlusion_curves(model, x, s, target, steps, aam, value).deletion;
}

OcclusionCurve insertion_curve(const Model& model, const Tensor& x,
                               const Saliency& s, std::size_t target,
                               std::size_t steps, const AamParams& aam,
                               CurveValue value) {
  return occlusion_curves(model, x, s, target, steps, aam, value).insertion;
}

OcclusionCurve average_curves(std::span<const OcclusionCurve> curves) {
  if (curves.empty()) throw std::invalid_argument("average_curves: no curves");
  OcclusionCurve mean = curves.front();
  std::fill(mean.values.begin(), mean.values.end(), 0.0);
  for (const OcclusionCurve& c : curves) {
    if (c.fractions != mean.fractions || c.mode != mean.mode) {
      throw std::invalid_argument("average_curves: mismatched grids");
    }
    for (std::size_t k = 0; k < c.values.size(); ++k) mean.values[k] += c.values[k];
  }
  for (double& v : mean.values) v /= static_cast<double>(curves.size());
  return mean;
}

double curve_auc(const OcclusionCurve& c) {
  if (c.fractions.size() != c.values.size()) {
    throw std::invalid_argument("curve_auc: length mismatch");
  }
  double area = 0.0;
  for (std::size_t k = 1; k < c.fractions.size(); ++k) {
    area += 0.5 * (c.values[k] + c.values[k - 1]) *
            (c.fractions[k] - c.fractions[k - 1]);
  }
  return area;
}

void write_metrics_csv(std::ostream& out, std::span<const MetricRow> rows) {
  out << "metric,value,seed\n";
  for (const MetricRow& r : rows) {
    out << r.metric << ',' << format_real(r.value) << ',' << r.seed << '\n';
  }
}

void write_occlusion_csv(std::ostream& out,
                         std::span<const OcclusionCurve> curves) {
  out << "fraction,value,mode\n";
  for (const OcclusionCurve& c : curves) {
    for (std::size_t k = 0; k < c.values.size(); ++k) {
      out << format_real(c.fractions[k]) << ',' << format_real(c.values[k])
          << ',' << occlusion_mode_name(c.mode) << '\n';
    }
  }
}

}  // namespace imlkd
