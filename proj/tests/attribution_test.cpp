// Copyright 2026 The imlkd Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <random>
#include <sstream>

#include "doctest.h"
#include "gradcheck.hpp"
#include "imlkd/attribution.hpp"

using imlkd::Graph;
using imlkd::Saliency;
using imlkd::SaliencyMethod;
using imlkd::Tensor;
namespace t = imlkd::testing;

namespace {

// Affine probe f(x) = sum(w * x) + b.
imlkd::ScalarFunction affine(const Tensor& w, double b) {
  return [w, b](Graph& g, const Tensor& x) {
    return g.add_scalar(g.sum(g.multiply(x, w)), b);
  };
}

// Smooth non-linear probe.
imlkd::ScalarFunction smooth(const Tensor& w) {
  return [w](Graph& g, const Tensor& x) {
    return g.sum(g.tanh(g.matmul(x, w)));
  };
}

double evaluate(const imlkd::ScalarFunction& f, const Tensor& x) {
  Graph g;
  return f(g, g.variable(x)).item();
}

double map_sum(const Saliency& s) {
  double total = 0.0;
  for (double v : s.map.values()) total += v;
  return total;
}

imlkd::Model small_model() {
  imlkd::ModelSpec spec;
  spec.input_dim = 3;
  spec.frame_widths = {6, 5};
  spec.contexts = {3, 1};
  spec.embedding_dim = 4;
  spec.num_classes = 5;
  spec.seed = 9;
  imlkd::Model m = imlkd::build_model(spec);
  std::mt19937_64 rng(10);
  for (std::size_t i = 0; i < m.parameters().size(); ++i) {
    m.set_parameter(i, t::random_tensor(rng, m.parameter(i).shape()));
  }
  return m;
}

}  // namespace

TEST_CASE("mean_time_baseline") {
  const Tensor x = Tensor::matrix(2, 2, {1, 3, 3, 5});
  const Tensor b = imlkd::mean_time_baseline(x);
  CHECK(imlkd::same_values(b, Tensor::matrix(2, 2, {2, 4, 2, 4})));
  CHECK(imlkd::same_values(imlkd::mean_time_baseline(b), b));
  const Tensor c = Tensor::filled({4, 3}, 0.7);
  CHECK(imlkd::max_abs_difference(imlkd::mean_time_baseline(c), c) <= 1e-15);
  CHECK_THROWS_AS(imlkd::mean_time_baseline(Tensor::vector({1, 2})),
                  std::invalid_argument);

  const Tensor gm = imlkd::global_mean_baseline(x);
  CHECK(imlkd::same_values(gm, Tensor::filled({2, 2}, 3.0)));
  CHECK(imlkd::same_values(
      imlkd::make_baseline(x, imlkd::BaselineKind::kTimeMean), b));
}

TEST_CASE("integrated_inputs ladder") {
  const Tensor x = Tensor::matrix(1, 2, {2, 4});
  const Tensor zero = Tensor::zeros({1, 2});
  const auto two = imlkd::integrated_inputs(x, zero, 2);
  REQUIRE(two.steps.size() == 2);
  CHECK(imlkd::same_values(two.steps[0], Tensor::matrix(1, 2, {1, 2})));
  CHECK(imlkd::same_values(two.steps[1], x));

  const auto one = imlkd::integrated_inputs(x, zero, 1);
  REQUIRE(one.steps.size() == 1);
  CHECK(imlkd::same_values(one.steps[0], x));

  for (const Tensor& s : imlkd::integrated_inputs(x, x, 5).steps) {
    CHECK(imlkd::same_values(s, x));
  }
  CHECK_THROWS_AS(imlkd::integrated_inputs(x, zero, 0), std::invalid_argument);
  CHECK_THROWS_AS(imlkd::integrated_inputs(x, Tensor::zeros({2, 1}), 2),
                  std::invalid_argument);

  std::mt19937_64 rng(3);
  for (std::size_t m = 1; m <= 16; ++m) {
    const Tensor a = t::random_tensor(rng, {7, 4}, -5, 5);
    const Tensor b = t::random_tensor(rng, {7, 4}, -5, 5);
    const auto ladder = imlkd::integrated_inputs(a, b, m);
    REQUIRE(ladder.steps.size() == m);
    double worst = 0.0;
    for (std::size_t k = 1; k <= m; ++k) {
      const double alpha = static_cast<double>(k) / static_cast<double>(m);
      for (std::size_t i = 0; i < a.size(); ++i) {
        const double expect = b[i] + alpha * (a[i] - b[i]);
        worst = std::max(worst, std::abs(ladder.steps[k - 1][i] - expect));
      }
    }
    CHECK(worst <= 1e-12);
    CHECK(imlkd::same_values(ladder.steps.back(), a));
  }
}

TEST_CASE("gradient saliency") {
  std::mt19937_64 rng(4);
  const Tensor w = t::random_tensor(rng, {5, 3});
  const Tensor x = t::random_tensor(rng, {5, 3});
  const Saliency s = imlkd::gradient_saliency(affine(w, 0.3), x, 2);
  CHECK(imlkd::max_abs_difference(s.map, w) <= 1e-15);
  CHECK(s.method == SaliencyMethod::kGradient);
  CHECK(s.target == 2);

  // Frames 2.. never reach the output.
  auto head = [](Graph& g, const Tensor& in) {
    return g.sum(g.square(g.slice_rows(in, 0, 2)));
  };
  const Saliency partial = imlkd::gradient_saliency(head, x, 0);
  for (std::size_t tt = 2; tt < 5; ++tt) {
    for (std::size_t f = 0; f < 3; ++f) CHECK(partial.map.at(tt, f) == 0.0);
  }

  // Constant function: zero map.
  auto flat = [](Graph&, const Tensor&) { return Tensor::scalar(1.0); };
  const Saliency none = imlkd::gradient_saliency(flat, x, 0);
  CHECK(imlkd::same_values(none.map, Tensor::zeros({5, 3})));

  // A model's target logit against finite differences.
  const imlkd::Model model = small_model();
  const Tensor features = t::random_tensor(rng, {6, 3});
  const imlkd::AamParams aam;
  const auto logit = imlkd::target_output(model, 1, aam);
  const Saliency ms = imlkd::gradient_saliency(model, features, 1, aam);
  const Tensor numeric = imlkd::finite_difference_gradient(
      [&](const Tensor& v) { return evaluate(logit, v); }, features, 1e-5);
  t::GradCheck check;
  t::compare_gradients(ms.map, numeric, check);
  CAPTURE(check.detail);
  CHECK(check.ok);
  CHECK_THROWS_AS(imlkd::target_output(model, 5, aam), std::invalid_argument);
}

TEST_CASE("integrated gradients are exact on affine functions") {
  std::mt19937_64 rng(5);
  const Tensor w = t::random_tensor(rng, {6, 4});
  const Tensor x = t::random_tensor(rng, {6, 4}, -3, 3);
  const Tensor base = imlkd::mean_time_baseline(x);
  for (std::size_t m : {1u, 2u, 8u, 64u}) {
    const Saliency s = imlkd::integrated_gradients(affine(w, -1.0), x, base, m, 0);
    double worst = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      worst = std::max(worst, std::abs(s.map[i] - (x[i] - base[i]) * w[i]));
    }
    CHECK(worst <= 1e-10);
    CHECK(s.steps == m);
  }
  const Saliency zero = imlkd::integrated_gradients(affine(w, 0), x, x, 4, 0);
  CHECK(imlkd::same_values(zero.map, Tensor::zeros(x.shape())));
}

TEST_CASE("integrated gradients with one step and completeness") {
  std::mt19937_64 rng(6);
  const Tensor w = t::random_tensor(rng, {4, 3});
  const Tensor x = t::random_tensor(rng, {5, 4}, -2, 2);
  const Tensor base = imlkd::mean_time_baseline(x);
  const auto f = smooth(w);

  const Saliency one = imlkd::integrated_gradients(f, x, base, 1, 0);
  const Saliency grad = imlkd::gradient_saliency(f, x, 0);
  for (std::size_t i = 0; i < x.size(); ++i) {
    CHECK(one.map[i] == (x[i] - base[i]) * grad.map[i]);
  }

  const double delta = evaluate(f, x) - evaluate(f, base);
  double previous = INFINITY;
  for (std::size_t m : {8u, 32u, 256u}) {
    const double err =
        std::abs(map_sum(imlkd::integrated_gradients(f, x, base, m, 0)) - delta);
    CHECK(err < previous);
    previous = err;
  }
  CHECK(previous <= 0.01 * std::abs(delta));
}

TEST_CASE("time weight curves and their distance") {
  Saliency s;
  s.map = Tensor::zeros({4, 2});
  const auto uniform = imlkd::time_weight_curve(s);
  for (double v : uniform) CHECK(v == 0.25);

  s.map = Tensor::matrix(4, 2, {0, 0, 0, 0, 0, 0, 2, -1});
  CHECK(imlkd::time_weight_curve(s) == std::vector<double>{0, 0, 0, 1});

  s.map = Tensor::matrix(2, 2, {1, -1, -1, 1});
  CHECK(imlkd::time_weight_curve(s) == std::vector<double>{0.5, 0.5});

  const std::vector<double> a = {1, 0};
  const std::vector<double> b = {0, 1};
  CHECK(imlkd::curve_mse(a, a) == 0.0);
  CHECK(imlkd::curve_mse(a, b) == 1.0);
  const std::vector<double> c = {0.3, 0.1, 0.6};
  const std::vector<double> d = {0.2, 0.5, 0.3};
  CHECK(imlkd::curve_mse(c, d) == imlkd::curve_mse(d, c));
  CHECK_THROWS_AS(imlkd::curve_mse(a, c), std::invalid_argument);
}

TEST_CASE("saliency and curve exports") {
  Saliency s;
  s.map = Tensor::matrix(2, 2, {0.5, -1, 0.25, 2});
  s.target = 7;
  s.method = SaliencyMethod::kIntegratedGradients;
  s.steps = 64;
  std::ostringstream csv, meta, curve;
  imlkd::write_saliency_csv(csv, s);
  imlkd::write_saliency_meta(meta, s);
  imlkd::write_curve_csv(curve, imlkd::time_weight_curve(s));
  CHECK(csv.str() == "t,f,value\n0,0,0.5\n0,1,-1\n1,0,0.25\n1,1,2\n");
  CHECK(meta.str() == "method=integrated-gradients m=64 target=7\n");
  CHECK(curve.str() == "t,weight\n0,0.40000000000000002\n1,0.59999999999999998\n");
}
