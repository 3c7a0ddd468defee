// Copyright 2026 The imlkd Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <random>

#include "doctest.h"
#include "gradcheck.hpp"
#include "imlkd/graph.hpp"

using imlkd::Graph;
using imlkd::Tensor;
namespace t = imlkd::testing;

TEST_CASE("primitive values") {
  Graph g;
  Tensor a = Tensor::matrix(2, 2, {1, 2, 3, 4});
  Tensor id = Tensor::matrix(2, 2, {1, 0, 0, 1});
  CHECK(imlkd::same_values(g.matmul(id, a), a));

  CHECK(g.relu(Tensor::vector({-1, 0, 2})).to_vector() ==
        std::vector<double>{0, 0, 2});

  Tensor s = g.softmax(Tensor::vector({0, 0, 0, 0}));
  for (double v : s.values()) CHECK(v == doctest::Approx(0.25).epsilon(1e-15));

  Tensor cat = g.concat({Tensor::matrix(2, 1, {1, 2}),
                         Tensor::matrix(2, 2, {3, 4, 5, 6})});
  CHECK(cat.to_vector() == std::vector<double>{1, 3, 4, 2, 5, 6});
  CHECK(g.transpose(a).to_vector() == std::vector<double>{1, 3, 2, 4});
  CHECK(g.slice_rows(Tensor::matrix(3, 1, {7, 8, 9}), 1, 3).to_vector() ==
        std::vector<double>{8, 9});
  CHECK(g.mean(a, 0).to_vector() == std::vector<double>{2, 3});
  CHECK(g.sum(a, 1).to_vector() == std::vector<double>{3, 7});
  // Constant-only evaluation leaves no record.
  CHECK(g.size() == 0);
}

TEST_CASE("angular margin") {
  Graph g;
  Tensor c = Tensor::vector({1.0, 0.3});
  Tensor m = g.angular_margin(c, 0, 0.2);
  CHECK(m[0] == doctest::Approx(std::cos(0.2)).epsilon(1e-14));
  CHECK(m[1] == 0.3);
  CHECK(g.angular_margin(c, 1, 0.0)[1] == 0.3);
  // theta + m beyond pi clamps to -1.
  CHECK(g.angular_margin(Tensor::vector({-0.999}), 0, 0.2)[0] == -1.0);
}

TEST_CASE("shape and domain errors") {
  Graph g;
  Tensor x = g.variable(Tensor::vector({1, -1}));
  CHECK_THROWS_AS(g.matmul(Tensor::matrix(2, 3, {1, 2, 3, 4, 5, 6}),
                           Tensor::matrix(2, 2, {1, 2, 3, 4})),
                  std::invalid_argument);
  CHECK_THROWS_AS(g.add(x, Tensor::vector({1, 2, 3})), std::invalid_argument);
  CHECK_THROWS_AS(g.log(x), imlkd::DomainError);
  CHECK_THROWS_AS(g.sqrt(x), imlkd::DomainError);
  CHECK_THROWS_AS(g.exp(g.scale(x, 1e4)), imlkd::DomainError);
  try {
    g.log(x);
  } catch (const imlkd::DomainError& e) {
    CHECK(std::string(e.what()).find("node #") != std::string::npos);
  }
  Graph other;
  CHECK_THROWS_AS(other.relu(x), std::invalid_argument);
}

TEST_CASE("backward worked examples") {
  {
    Graph g;
    Tensor x = g.variable(Tensor::vector({3}));
    auto grads = imlkd::backward(g.sum(g.square(x)), g);
    CHECK(grads.at(x)[0] == 6.0);
    auto fd = imlkd::finite_difference_gradient(
        [](const Tensor& v) { return v[0] * v[0]; }, Tensor::vector({3}), 1e-5);
    CHECK(std::abs(fd[0] - 6.0) <= 1e-6);
  }
  {
    Graph g;
    Tensor x = g.variable(Tensor::matrix(2, 3, {1, -2, 3, 0.5, 4, 9}));
    auto grads = imlkd::backward(g.sum(x), g);
    const Tensor gx = grads.at(x);
    for (double v : gx.values()) CHECK(v == 1.0);
  }
  {
    Graph g;
    Tensor x = g.variable(Tensor::vector({1, 2}));
    Tensor y = g.variable(Tensor::vector({5}));
    auto grads = imlkd::backward(g.sum(g.square(y)), g);
    const Tensor gx = grads.at(x);
    for (double v : gx.values()) CHECK(v == 0.0);
    CHECK_FALSE(grads.contains(x));
  }
}

TEST_CASE("backward preconditions") {
  Graph g;
  Tensor x = g.variable(Tensor::vector({1, 2}));
  CHECK_THROWS_AS(imlkd::backward(g.square(x), g), std::invalid_argument);
  Graph other;
  CHECK_THROWS_AS(imlkd::backward(g.sum(x), other), std::invalid_argument);
  CHECK_THROWS_AS(imlkd::backward(Tensor::scalar(1.0), g),
                  std::invalid_argument);
}

TEST_CASE("finite difference oracle") {
  auto sum = [](const Tensor& v) {
    double s = 0;
    for (double x : v.values()) s += x;
    return s;
  };
  Tensor fd = imlkd::finite_difference_gradient(sum, Tensor::vector({1, 2}),
                                                0.125);
  CHECK(fd[0] == 1.0);
  CHECK(fd[1] == 1.0);
  Tensor zero = imlkd::finite_difference_gradient(
      [](const Tensor&) { return 4.0; }, Tensor::vector({1, 2, 3}), 1e-3);
  for (double v : zero.values()) CHECK(v == 0.0);
  CHECK_THROWS_AS(imlkd::finite_difference_gradient(sum, Tensor::vector({1}),
                                                    0.0),
                  std::invalid_argument);
}

TEST_CASE("every primitive passes the gradient check") {
  for (const auto& c : t::primitive_cases()) {
    CAPTURE(c.name);
    auto r = t::check_gradients(c.build, c.inputs);
    CAPTURE(r.detail);
    CHECK(r.ok);
  }
}

TEST_CASE("composed graphs pass the gradient check") {
  for (unsigned seed : {11u, 12u, 13u}) {
    CAPTURE(seed);
    auto c = t::composed_case(seed);
    auto r = t::check_gradients(c.build, c.inputs);
    CAPTURE(r.detail);
    CHECK(r.ok);
  }
}

TEST_CASE("softmax rows are distributions") {
  std::mt19937_64 rng(5);
  Graph g;
  for (int trial = 0; trial < 50; ++trial) {
    Tensor x = t::random_tensor(rng, {3, 7}, -40.0, 40.0);
    Tensor s = g.softmax(x);
    for (std::size_t r = 0; r < 3; ++r) {
      double total = 0;
      for (std::size_t j = 0; j < 7; ++j) {
        CHECK(s.at(r, j) >= 0.0);
        total += s.at(r, j);
      }
      CHECK(std::abs(total - 1.0) <= 1e-12);
    }
  }
}

TEST_CASE("log_softmax agrees with log of softmax") {
  std::mt19937_64 rng(6);
  Graph g;
  for (int trial = 0; trial < 50; ++trial) {
    Tensor x = t::random_tensor(rng, {2, 6}, -30.0, 30.0);
    Tensor ls = g.log_softmax(x);
    Tensor s = g.softmax(x);
    for (std::size_t i = 0; i < x.size(); ++i) {
      if (s[i] > 0.0) CHECK(std::abs(ls[i] - std::log(s[i])) <= 1e-10);
    }
  }
}

TEST_CASE("backward is deterministic") {
  auto c = t::composed_case(99);
  Graph g;
  std::vector<Tensor> vars;
  for (const auto& x : c.inputs) vars.push_back(g.variable(x));
  Tensor loss = c.build(g, vars);
  auto first = imlkd::backward(loss, g);
  auto second = imlkd::backward(loss, g);
  CHECK(first.count() == second.count());
  for (std::size_t i = 0; i < g.size(); ++i) {
    REQUIRE(first.contains(i) == second.contains(i));
    if (first.contains(i)) {
      CHECK(imlkd::same_values(first.at(i), second.at(i)));
    }
  }
}
