// Copyright 2026 The imlkd Authors
// SPDX-License-Identifier: Apache-2.0

#include "imlkd/attribution.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "imlkd/csv.hpp"

namespace imlkd {

namespace {

Tensor one_hot(std::size_t size, std::size_t index) {
  std::vector<double> v(size, 0.0);
  v.at(index) = 1.0;
  return Tensor::vector(std::move(v));
}

void require_matrix(const Tensor& x, const char* what) {
  if (x.rank() != 2 || x.rows() == 0 || x.cols() == 0) {
    throw std::invalid_argument(std::string(what) +
                                ": expects a non-empty [T,F] input, got " +
                                shape_string(x.shape()));
  }
}

// d f / d x; zeros when f does not depend on x.
std::vector<double> input_gradient(const ScalarFunction& f, const Tensor& x) {
  Graph g;
  const Tensor xv = g.variable(x);
  const Tensor y = f(g, xv);
  if (!g.owns(y)) return std::vector<double>(x.size(), 0.0);
  return backward(y, g).at(xv).to_vector();
}

}  // namespace

std::string_view saliency_method_name(SaliencyMethod method) {
  return method == SaliencyMethod::kGradient ? "gradient"
                                             : "integrated-gradients";
}

ScalarFunction target_output(const Model& model, std::size_t target,
                             const AamParams& aam, AttributionOutput output) {
  if (target >= model.spec().num_classes) {
    throw std::invalid_argument("target_output: class " +
                                std::to_string(target) + " out of range");
  }
  return [&model, target, aam, output](Graph& g, const Tensor& x) {
    Tensor scores = aam_logits(g, forward_embed(g, model, x), model, aam,
                               std::nullopt);
    if (output == AttributionOutput::kProbability) scores = g.softmax(scores);
    return g.sum(g.multiply(scores, one_hot(scores.size(), target)));
  };
}

Tensor mean_time_baseline(const Tensor& x) {
  require_matrix(x, "mean_time_baseline");
  const std::size_t rows = x.rows();
  const std::size_t cols = x.cols();
  std::vector<double> mean(cols, 0.0);
  for (std::size_t t = 0; t < rows; ++t) {
    for (std::size_t f = 0; f < cols; ++f) mean[f] += x.at(t, f);
  }
  for (double& m : mean) m /= static_cast<double>(rows);
  std::vector<double> out;
  out.reserve(x.size());
  for (std::size_t t = 0; t < rows; ++t) {
    out.insert(out.end(), mean.begin(), mean.end());
  }
  return Tensor::create(x.shape(), std::move(out));
}

Tensor global_mean_baseline(const Tensor& x) {
  require_matrix(x, "global_mean_baseline");
  double total = 0.0;
  for (double v : x.values()) total += v;
  return Tensor::filled(x.shape(), total / static_cast<double>(x.size()));
}

Tensor make_baseline(const Tensor& x, BaselineKind kind) {
  return kind == BaselineKind::kTimeMean ? mean_time_baseline(x)
                                         : global_mean_baseline(x);
}

IntegratedInputs integrated_inputs(const Tensor& x, const Tensor& baseline,
                                   std::size_t m) {
  if (x.shape() != baseline.shape()) {
    throw std::invalid_argument("integrated_inputs: input " +
                                shape_string(x.shape()) + " vs baseline " +
                                shape_string(baseline.shape()));
  }
  if (m < 1) throw std::invalid_argument("integrated_inputs: m must be >= 1");
  IntegratedInputs out;
  out.baseline = baseline.detached();
  out.source = x.detached();
  out.steps.reserve(m);
  auto xv = x.values();
  auto bv = baseline.values();
  for (std::size_t k = 1; k < m; ++k) {
    const double alpha = static_cast<double>(k) / static_cast<double>(m);
    std::vector<double> v(xv.size());
    for (std::size_t i = 0; i < v.size(); ++i) {
      v[i] = bv[i] + alpha * (xv[i] - bv[i]);
    }
    out.steps.push_back(Tensor::create(x.shape(), std::move(v)));
  }
  out.steps.push_back(out.source);
  return out;
}

Saliency gradient_saliency(const ScalarFunction& f, const Tensor& x,
                           std::size_t target) {
  require_matrix(x, "gradient_saliency");
  Saliency s;
  s.map = Tensor::create(x.shape(), input_gradient(f, x.detached()));
  s.target = target;
  s.method = SaliencyMethod::kGradient;
  s.steps = 1;
  return s;
}

Saliency gradient_saliency(const Model& model, const Tensor& x,
                           std::size_t target, const AamParams& aam) {
  return gradient_saliency(target_output(model, target, aam), x, target);
}

Saliency integrated_gradients(const ScalarFunction& f, const Tensor& x,
                              const Tensor& baseline, std::size_t m,
                              std::size_t target) {
  require_matrix(x, "integrated_gradients");
  const IntegratedInputs path = integrated_inputs(x, baseline, m);
  std::vector<double> total(x.size(), 0.0);
  for (const Tensor& step : path.steps) {
    const std::vector<double> grad = input_gradient(f, step);
    for (std::size_t i = 0; i < total.size(); ++i) total[i] += grad[i];
  }
  auto xv = x.values();
  auto bv = baseline.values();
  const double inv_m = 1.0 / static_cast<double>(m);
  for (std::size_t i = 0; i < total.size(); ++i) {
    total[i] = (xv[i] - bv[i]) * (total[i] * inv_m);
  }
  Saliency s;
  s.map = Tensor::create(x.shape(), std::move(total));
  s.target = target;
  s.method = SaliencyMethod::kIntegratedGradients;
  s.steps = m;
  return s;
}

Saliency integrated_gradients(const Model& model, const Tensor& x,
                              const Tensor& baseline, std::size_t m,
                              std::size_t target, const AamParams& aam) {
  return integrated_gradients(target_output(model, target, aam), x, baseline,
                              m, target);
}

std::vector<double> time_weight_curve(const Saliency& s) {
  const Tensor& map = s.map;
  const std::size_t rows = map.rows();
  const std::size_t cols = map.cols();
  std::vector<double> curve(rows, 0.0);
  double total = 0.0;
  for (std::size_t t = 0; t < rows; ++t) {
    for (std::size_t f = 0; f < cols; ++f) curve[t] += std::abs(map.at(t, f));
    total += curve[t];
  }
  if (total == 0.0) {
    std::fill(curve.begin(), curve.end(), 1.0 / static_cast<double>(rows));
    return curve;
  }
  for (double& c : curve) c /= total;
  return curve;
}

double curve_mse(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    throw std::invalid_argument("curve_mse: lengths " +
                                std::to_string(a.size()) + " and " +
                                std::to_string(b.size()) + " differ");
  }
  if (a.empty()) throw std::invalid_argument("curve_mse: empty curves");
  double total = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    total += d * d;
  }
  return total / static_cast<double>(a.size());
}

void write_saliency_csv(std::ostream& out, const Saliency& s) {
  out << "t,f,value\n";
  const std::size_t rows = s.map.rows();
  const std::size_t cols = s.map.cols();
  for (std::size_t t = 0; t < rows; ++t) {
    for (std::size_t f = 0; f < cols; ++f) {
      out << t << ',' << f << ',' << format_real(s.map.at(t, f)) << '\n';
    }
  }
}

void write_saliency_meta(std::ostream& out, const Saliency& s) {
  out << "method=" << saliency_method_name(s.method) << " m=" << s.steps
      << " target=" << s.target << '\n';
}

void write_curve_csv(std::ostream& out, std::span<const double> curve) {
  out << "t,weight\n";
  for (std::size_t t = 0; t < curve.size(); ++t) {
    out << t << ',' << format_real(curve[t]) << '\n';
  }
}

}  // namespace imlkd
