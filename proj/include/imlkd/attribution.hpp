// Copyright 2026 The imlkd Authors
// SPDX-License-Identifier: Apache-2.0
//
// Input attributions for frame-level classifiers.
//
// Reading the network as f(x) ~ w^T x + b around a point, the plain gradient
// map is w. Integrated gradients average that gradient along the straight
// path from a baseline x' to x using the right Riemann sum
//   (x - x') * (1/m) * sum_{k=1..m} grad f(x' + (k/m)(x - x'))
// and the inputs on that path are the integrated inputs.

#ifndef IMLKD_ATTRIBUTION_HPP
#define IMLKD_ATTRIBUTION_HPP

#include <cstddef>
#include <functional>
#include <ostream>
#include <span>
#include <string_view>
#include <vector>

#include "imlkd/graph.hpp"
#include "imlkd/model.hpp"

namespace imlkd {

enum class BaselineKind {
  // Per-frequency mean over time, repeated for every frame.
  kTimeMean,
  // One scalar: the mean over every cell.
  kGlobalMean,
};

enum class AttributionOutput {
  // Pre-softmax target logit without margin.
  kLogit,
  kProbability,
};

enum class SaliencyMethod { kGradient, kIntegratedGradients };

std::string_view saliency_method_name(SaliencyMethod method);

struct Saliency {
  Tensor map;  // same shape as the input
  std::size_t target = 0;
  SaliencyMethod method = SaliencyMethod::kGradient;
  std::size_t steps = 1;
};

struct IntegratedInputs {
  // steps[k-1] = baseline + (k/m)(source - baseline); the last is source.
  std::vector<Tensor> steps;
  Tensor baseline;
  Tensor source;
};

// Scalar function of an input recorded in the given graph.
using ScalarFunction = std::function<Tensor(Graph&, const Tensor&)>;

ScalarFunction target_output(const Model& model, std::size_t target,
                             const AamParams& aam,
                             AttributionOutput output = AttributionOutput::kLogit);

Tensor mean_time_baseline(const Tensor& x);
Tensor global_mean_baseline(const Tensor& x);
Tensor make_baseline(const Tensor& x, BaselineKind kind);

IntegratedInputs integrated_inputs(const Tensor& x, const Tensor& baseline,
                                   std::size_t m);

Saliency gradient_saliency(const ScalarFunction& f, const Tensor& x,
                           std::size_t target);
Saliency gradient_saliency(const Model& model, const Tensor& x,
                           std::size_t target, const AamParams& aam = {});

Saliency integrated_gradients(const ScalarFunction& f, const Tensor& x,
                              const Tensor& baseline, std::size_t m,
                              std::size_t target);
Saliency integrated_gradients(const Model& model, const Tensor& x,
                              const Tensor& baseline, std::size_t m,
                              std::size_t target, const AamParams& aam = {});

// Per-frame sum of |attribution| over frequency, normalized to unit L1 sum;
// an all-zero map gives the uniform curve.
std::vector<double> time_weight_curve(const Saliency& s);

double curve_mse(std::span<const double> a, std::span<const double> b);

// CSV `t,f,value`, one row per cell in row-major order.
void write_saliency_csv(std::ostream& out, const Saliency& s);
// Sidecar line `method=<name> m=<steps> target=<class>`.
void write_saliency_meta(std::ostream& out, const Saliency& s);
// CSV `t,weight`.
void write_curve_csv(std::ostream& out, std::span<const double> curve);

}  // namespace imlkd

#endif  // IMLKD_ATTRIBUTION_HPP
