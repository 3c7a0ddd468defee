// Copyright 2026 The imlkd Authors
// SPDX-License-Identifier: Apache-2.0
//
// Finite-difference gradient checks shared by the unit and acceptance suites.

#ifndef IMLKD_TESTS_GRADCHECK_HPP
#define IMLKD_TESTS_GRADCHECK_HPP

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "imlkd/graph.hpp"

namespace imlkd::testing {

struct GradCheck {
  double worst_rel = 0.0;
  double worst_abs_small = 0.0;
  bool ok = true;
  std::string detail;
};

inline constexpr double kRelTol = 1e-4;
inline constexpr double kAbsTol = 1e-7;
inline constexpr double kSmallGradient = 1e-4;

// Compares analytic against numeric gradients: relative error where the
// true gradient is at least 1e-4 in magnitude, absolute error below that.
inline void compare_gradients(const Tensor& analytic, const Tensor& numeric,
                              GradCheck& out) {
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    const double a = analytic[i];
    const double n = numeric[i];
    const double scale = std::max(std::abs(a), std::abs(n));
    if (scale < kSmallGradient) {
      const double err = std::abs(a - n);
      out.worst_abs_small = std::max(out.worst_abs_small, err);
      if (err > kAbsTol) {
        out.ok = false;
        out.detail += " abs@" + std::to_string(i) + "=" + std::to_string(err);
      }
    } else {
      const double rel = std::abs(a - n) / scale;
      out.worst_rel = std::max(out.worst_rel, rel);
      if (rel > kRelTol) {
        out.ok = false;
        out.detail += " rel@" + std::to_string(i) + "=" + std::to_string(rel);
      }
    }
  }
}

// `build` maps recorded inputs to a scalar loss inside the given graph.
using ScalarBuilder =
    std::function<Tensor(Graph&, const std::vector<Tensor>&)>;

inline GradCheck check_gradients(const ScalarBuilder& build,
                                 const std::vector<Tensor>& inputs,
                                 double eps = 1e-5) {
  Graph g;
  std::vector<Tensor> vars;
  for (const Tensor& t : inputs) vars.push_back(g.variable(t));
  const Tensor loss = build(g, vars);
  const GradientMap grads = backward(loss, g);

  GradCheck result;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    auto f = [&](const Tensor& xk) {
      Graph h;
      std::vector<Tensor> probe;
      for (std::size_t j = 0; j < inputs.size(); ++j) {
        probe.push_back(h.variable(j == k ? xk : inputs[j]));
      }
      return build(h, probe).item();
    };
    const Tensor numeric = finite_difference_gradient(f, inputs[k], eps);
    compare_gradients(grads.at(vars[k]), numeric, result);
  }
  return result;
}

inline Tensor random_tensor(std::mt19937_64& rng, Shape shape, double lo = -1.0,
                            double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> v(shape_size(shape));
  for (double& x : v) x = u(rng);
  return Tensor::create(std::move(shape), std::move(v));
}

}  // namespace imlkd::testing



namespace imlkd::testing {

// Deterministic non-uniform projection so every output cell matters.
inline Tensor weighted_sum(Graph& g, const Tensor& y) {
  std::vector<double> w(y.size());
  for (std::size_t i = 0; i < w.size(); ++i) {
    w[i] = std::sin(1.3 * static_cast<double>(i) + 0.7);
  }
  return g.sum(g.multiply(y, Tensor::create(y.shape(), std::move(w))));
}

struct PrimitiveCase {
  std::string name;
  ScalarBuilder build;
  std::vector<Tensor> inputs;
};

inline std::vector<PrimitiveCase> primitive_cases() {
  std::mt19937_64 rng(2024);
  auto r = [&](Shape s, double lo = -1.0, double hi = 1.0) {
    return random_tensor(rng, std::move(s), lo, hi);
  };
  auto unary = [](auto op) {
    return ScalarBuilder([op](Graph& g, const std::vector<Tensor>& in) {
      return weighted_sum(g, op(g, in[0]));
    });
  };
  auto binary = [](auto op) {
    return ScalarBuilder([op](Graph& g, const std::vector<Tensor>& in) {
      return weighted_sum(g, op(g, in[0], in[1]));
    });
  };
  std::vector<PrimitiveCase> cases;
  cases.push_back({"matmul", binary([](Graph& g, auto a, auto b) {
                     return g.matmul(a, b);
                   }),
                   {r({3, 4}), r({4, 2})}});
  cases.push_back({"matmul-vector", binary([](Graph& g, auto a, auto b) {
                     return g.matmul(a, b);
                   }),
                   {r({4}), r({4, 3})}});
  cases.push_back({"add", binary([](Graph& g, auto a, auto b) {
                     return g.add(a, b);
                   }),
                   {r({2, 3}), r({2, 3})}});
  cases.push_back({"add-row-broadcast", binary([](Graph& g, auto a, auto b) {
                     return g.add(a, b);
                   }),
                   {r({4, 3}), r({3})}});
  cases.push_back({"subtract-scalar-broadcast",
                   binary([](Graph& g, auto a, auto b) {
                     return g.subtract(a, b);
                   }),
                   {r({2, 3}), r({1})}});
  cases.push_back({"multiply", binary([](Graph& g, auto a, auto b) {
                     return g.multiply(a, b);
                   }),
                   {r({3, 2}), r({2})}});
  cases.push_back({"divide", binary([](Graph& g, auto a, auto b) {
                     return g.divide(a, b);
                   }),
                   {r({2, 3}), r({2, 3}, 0.5, 2.0)}});
  cases.push_back({"scale", unary([](Graph& g, auto a) {
                     return g.scale(a, -2.5);
                   }),
                   {r({5})}});
  cases.push_back({"add_scalar", unary([](Graph& g, auto a) {
                     return g.add_scalar(a, 3.0);
                   }),
                   {r({5})}});
  cases.push_back({"relu", unary([](Graph& g, auto a) { return g.relu(a); }),
                   {r({3, 4})}});
  cases.push_back({"exp", unary([](Graph& g, auto a) { return g.exp(a); }),
                   {r({3, 2})}});
  cases.push_back({"log", unary([](Graph& g, auto a) { return g.log(a); }),
                   {r({3, 2}, 0.5, 2.0)}});
  cases.push_back({"tanh", unary([](Graph& g, auto a) { return g.tanh(a); }),
                   {r({2, 3})}});
  cases.push_back({"softmax",
                   unary([](Graph& g, auto a) { return g.softmax(a); }),
                   {r({2, 5}, -3.0, 3.0)}});
  cases.push_back({"log_softmax",
                   unary([](Graph& g, auto a) { return g.log_softmax(a); }),
                   {r({2, 5}, -3.0, 3.0)}});
  for (int axis : {-1, 0, 1}) {
    cases.push_back({"sum-axis" + std::to_string(axis),
                     unary([axis](Graph& g, auto a) { return g.sum(a, axis); }),
                     {r({3, 4})}});
    cases.push_back({"mean-axis" + std::to_string(axis),
                     unary([axis](Graph& g, auto a) { return g.mean(a, axis); }),
                     {r({3, 4})}});
  }
  cases.push_back({"square",
                   unary([](Graph& g, auto a) { return g.square(a); }),
                   {r({4})}});
  cases.push_back({"sqrt", unary([](Graph& g, auto a) { return g.sqrt(a); }),
                   {r({4}, 0.5, 2.0)}});
  cases.push_back({"concat-rows", binary([](Graph& g, auto a, auto b) {
                     return g.concat({a, b}, 0);
                   }),
                   {r({2, 3}), r({1, 3})}});
  cases.push_back({"concat-last", binary([](Graph& g, auto a, auto b) {
                     return g.concat({a, b}, -1);
                   }),
                   {r({3, 2}), r({3, 4})}});
  cases.push_back({"slice_rows", unary([](Graph& g, auto a) {
                     return g.slice_rows(a, 1, 4);
                   }),
                   {r({5, 2})}});
  cases.push_back({"transpose",
                   unary([](Graph& g, auto a) { return g.transpose(a); }),
                   {r({2, 3})}});
  cases.push_back({"reshape", unary([](Graph& g, auto a) {
                     return g.reshape(a, {3, 2});
                   }),
                   {r({6})}});
  cases.push_back({"angular_margin", unary([](Graph& g, auto a) {
                     return g.angular_margin(a, 2, 0.2);
                   }),
                   {r({4}, -0.9, 0.9)}});
  cases.push_back({"clamp_min", unary([](Graph& g, auto a) {
                     return g.clamp_min(a, 0.1);
                   }),
                   {r({2, 4})}});
  return cases;
}

// Three-layer dense graphs with randomly drawn activations.
struct ComposedCase {
  ScalarBuilder build;
  std::vector<Tensor> inputs;
};

inline ComposedCase composed_case(unsigned seed) {
  std::mt19937_64 rng(seed);
  const std::size_t widths[] = {3, 5, 4, 6};
  std::vector<Tensor> inputs;
  inputs.push_back(random_tensor(rng, {4, widths[0]}));
  std::vector<int> acts;
  for (int layer = 0; layer < 3; ++layer) {
    inputs.push_back(random_tensor(rng, {widths[layer], widths[layer + 1]}));
    inputs.push_back(random_tensor(rng, {widths[layer + 1]}));
    acts.push_back(static_cast<int>(rng() % 4));
  }
  auto build = [acts](Graph& g, const std::vector<Tensor>& in) {
    Tensor h = in[0];
    for (std::size_t layer = 0; layer < 3; ++layer) {
      h = g.add(g.matmul(h, in[1 + 2 * layer]), in[2 + 2 * layer]);
      switch (acts[layer]) {
        case 0: h = g.relu(h); break;
        case 1: h = g.tanh(h); break;
        case 2: h = g.sqrt(g.add_scalar(g.square(h), 1.0)); break;
        default: h = g.exp(g.scale(h, 0.5)); break;
      }
    }
    return weighted_sum(g, g.log_softmax(h));
  };
  return {build, inputs};
}

}  // namespace imlkd::testing
#endif  // IMLKD_TESTS_GRADCHECK_HPP
