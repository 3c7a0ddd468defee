// Copyright 2026 The imlkd Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <limits>
#include <random>
#include <sstream>

#include "doctest.h"
#include "imlkd/tensor.hpp"

using imlkd::Tensor;

TEST_CASE("create keeps shape and values") {
  Tensor id = Tensor::create({2, 2}, {1, 0, 0, 1});
  CHECK(id.shape() == imlkd::Shape{2, 2});
  CHECK(id.at(0, 0) == 1.0);
  CHECK(id.at(0, 1) == 0.0);
  CHECK(id.at(1, 1) == 1.0);
  CHECK(id.is_constant());

  Tensor z = Tensor::create({3}, {0, 0, 0});
  for (double v : z.values()) CHECK(v == 0.0);

  Tensor t = Tensor::create({2}, {1.5, 2.5});
  CHECK(t.to_vector() == std::vector<double>{1.5, 2.5});
}

TEST_CASE("create rejects bad input") {
  CHECK_THROWS_AS(Tensor::create({2, 2}, {1, 2, 3}), std::invalid_argument);
  CHECK_THROWS_AS(
      Tensor::create({1}, {std::numeric_limits<double>::quiet_NaN()}),
      std::invalid_argument);
  CHECK_THROWS_AS(
      Tensor::create({2}, {1.0, std::numeric_limits<double>::infinity()}),
      std::invalid_argument);
}

TEST_CASE("dump round trip is exact") {
  std::mt19937_64 rng(7);
  std::normal_distribution<double> n(0.0, 1e3);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t rows = 1 + rng() % 5;
    const std::size_t cols = 1 + rng() % 7;
    std::vector<double> v(rows * cols);
    for (auto& x : v) x = n(rng) * std::pow(10.0, static_cast<int>(rng() % 20) - 10);
    Tensor t = Tensor::matrix(rows, cols, v);
    std::stringstream ss;
    imlkd::write_tensor(ss, "w", t);
    Tensor back;
    CHECK(imlkd::read_tensor(ss, back) == "w");
    CHECK(imlkd::same_values(t, back));
  }
}

TEST_CASE("dump header format") {
  std::stringstream ss;
  imlkd::write_tensor(ss, "bias", Tensor::vector({0.5, -2}));
  std::string header;
  std::getline(ss, header);
  CHECK(header == "bias 1 2");
  std::string line;
  std::getline(ss, line);
  CHECK(line == "0.5 -2");
}

TEST_CASE("read_tensor reports malformed dumps") {
  Tensor t;
  std::istringstream missing("x 2 2 2\n1 2 3\n");
  CHECK_THROWS_AS(imlkd::read_tensor(missing, t), std::runtime_error);
  std::istringstream junk("x 1 2\n1 abc\n");
  CHECK_THROWS_AS(imlkd::read_tensor(junk, t), std::runtime_error);
  std::istringstream empty("");
  CHECK_THROWS_AS(imlkd::read_tensor(empty, t), std::runtime_error);
}
