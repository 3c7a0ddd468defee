// Copyright 2026 The imlkd Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <random>
#include <sstream>

#include "doctest.h"
#include "gradcheck.hpp"
#include "imlkd/metrics.hpp"
#include "oracles.hpp"

using imlkd::OcclusionCurve;
using imlkd::OcclusionMode;
using imlkd::Saliency;
using imlkd::ScoreSet;
using imlkd::Tensor;
namespace t = imlkd::testing;
using t::dcf_oracle;
using t::eer_oracle;
using t::random_set;

namespace {

ScoreSet make_set(std::vector<double> targets, std::vector<double> nontargets) {
  ScoreSet s;
  for (double v : targets) s.add(v, true);
  for (double v : nontargets) s.add(v, false);
  return s;
}

imlkd::Model small_model() {
  imlkd::ModelSpec spec;
  spec.input_dim = 3;
  spec.frame_widths = {6};
  spec.contexts = {3};
  spec.embedding_dim = 4;
  spec.num_classes = 5;
  spec.seed = 2;
  return imlkd::build_model(spec);
}

}  // namespace

TEST_CASE("cosine_score") {
  const std::vector<double> a = {1, 1};
  const std::vector<double> b = {1, 0};
  const std::vector<double> c = {0, 3};
  CHECK(imlkd::cosine_score(a, a) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(imlkd::cosine_score(b, c) == 0.0);
  CHECK(imlkd::cosine_score(a, b) == doctest::Approx(1 / std::sqrt(2.0)));
  CHECK_THROWS_AS(imlkd::cosine_score(a, std::vector<double>{0, 0}),
                  std::invalid_argument);
}

TEST_CASE("EER worked cases") {
  CHECK(imlkd::compute_eer(make_set({0.9, 0.8}, {0.85, 0.1})).eer == 0.25);
  CHECK(imlkd::compute_eer(make_set({0.9, 0.8, 0.7}, {0.1, 0.2})).eer == 0.0);
  // Fully inverted scores: rates cross at 1 and 1/2 on either side.
  const ScoreSet inverted = make_set({0.1, 0.2}, {0.8, 0.9});
  CHECK(imlkd::compute_eer(inverted).eer == eer_oracle(inverted).eer);
  CHECK(imlkd::compute_eer(inverted).eer == 0.75);
  CHECK_THROWS_AS(imlkd::compute_eer(make_set({0.3}, {})), std::invalid_argument);
}

TEST_CASE("EER and minDCF agree with exhaustive sweeps") {
  std::mt19937_64 rng(31);
  for (int trial = 0; trial < 100; ++trial) {
    const ScoreSet s = random_set(rng, 5 + trial * 3);
    const auto fast = imlkd::compute_eer(s);
    const auto slow = eer_oracle(s);
    CHECK(std::abs(fast.eer - slow.eer) <= 1e-9);
    CHECK(fast.threshold == slow.threshold);
    for (double p : {0.01, 0.05, 0.5}) {
      CHECK(std::abs(imlkd::compute_min_dcf(s, {p, 1, 1}) - dcf_oracle(s, p)) <=
            1e-9);
    }
  }
  const ScoreSet big = random_set(rng, 1000);
  CHECK(std::abs(imlkd::compute_min_dcf(big) - dcf_oracle(big, 0.01)) <= 1e-9);
}

TEST_CASE("EER is invariant under increasing transforms") {
  std::mt19937_64 rng(37);
  for (int trial = 0; trial < 20; ++trial) {
    ScoreSet s = random_set(rng, 60);
    const double before = imlkd::compute_eer(s).eer;
    for (double& v : s.scores) v = std::exp(3 * v) + 2;
    CHECK(imlkd::compute_eer(s).eer == before);
  }
}

TEST_CASE("minDCF edge cases") {
  CHECK(imlkd::compute_min_dcf(make_set({0.9, 0.8}, {0.1, 0.2})) == 0.0);
  // Inverted: best is rejecting everything, cost p / p = 1.
  CHECK(imlkd::compute_min_dcf(make_set({0.1}, {0.9})) == 1.0);
  CHECK_THROWS_AS(imlkd::compute_min_dcf(make_set({1}, {0}), {0.0, 1, 1}),
                  std::invalid_argument);
}

TEST_CASE("curve_auc") {
  OcclusionCurve flat{{0, 0.25, 0.5, 1}, {0.3, 0.3, 0.3, 0.3}};
  CHECK(imlkd::curve_auc(flat) == doctest::Approx(0.3).epsilon(1e-15));
  OcclusionCurve ramp{{0, 0.5, 1}, {0, 0.5, 1}};
  CHECK(imlkd::curve_auc(ramp) == 0.5);
}

TEST_CASE("occlusion curves") {
  const imlkd::Model model = small_model();
  std::mt19937_64 rng(41);
  const Tensor x = t::random_tensor(rng, {10, 3}, -2, 2);
  const imlkd::AamParams aam;
  const Saliency s = imlkd::integrated_gradients(model, x,
                                                 imlkd::mean_time_baseline(x), 8, 1);
  const auto pair = imlkd::occlusion_curves(model, x, s, 1, 20, aam);
  REQUIRE(pair.deletion.values.size() == 21);
  REQUIRE(pair.insertion.fractions.size() == 21);
  const double on_x = imlkd::classify(model, x, aam)[1];
  const double on_base =
      imlkd::classify(model, imlkd::mean_time_baseline(x), aam)[1];
  CHECK(pair.deletion.values.front() == on_x);
  CHECK(pair.deletion.values.back() == on_base);
  CHECK(pair.insertion.values.front() == on_base);
  CHECK(pair.insertion.values.back() == on_x);
  CHECK(pair.insertion.values.back() == pair.deletion.values.front());
  CHECK(pair.deletion.fractions.back() == 1.0);
  for (double v : pair.deletion.values) CHECK((v >= 0.0 && v <= 1.0));

  const auto del = imlkd::deletion_curve(model, x, s, 1, 20, aam);
  CHECK(del.values == pair.deletion.values);
  CHECK(del.mode == OcclusionMode::kDeletion);

  // Uniform saliency keeps frames in index order.
  Saliency uniform;
  uniform.map = Tensor::filled({10, 3}, 1.0);
  const auto order = imlkd::frame_ranking(uniform);
  for (std::size_t i = 0; i < order.size(); ++i) CHECK(order[i] == i);
  // Removing the first half in index order.
  const auto half = imlkd::deletion_curve(model, x, uniform, 1, 2, aam);
  std::vector<double> v = x.to_vector();
  const Tensor base = imlkd::mean_time_baseline(x);
  for (std::size_t i = 0; i < 15; ++i) v[i] = base[i];
  CHECK(half.values[1] ==
        imlkd::classify(model, Tensor::matrix(10, 3, v), aam)[1]);

  const auto acc = imlkd::insertion_curve(model, x, s, 1, 4, aam,
                                          imlkd::CurveValue::kAccuracy);
  for (double a : acc.values) CHECK((a == 0.0 || a == 1.0));
  CHECK_THROWS_AS(imlkd::deletion_curve(model, Tensor::zeros({9, 3}), s, 1, 4),
                  std::invalid_argument);
}

TEST_CASE("metrics and curve CSVs") {
  const imlkd::MetricRow rows[] = {{"eer", 0.125, "3"}, {"eer", 0.25, "mean"}};
  std::ostringstream m;
  imlkd::write_metrics_csv(m, rows);
  CHECK(m.str() == "metric,value,seed\neer,0.125,3\neer,0.25,mean\n");

  const OcclusionCurve curves[] = {
      {{0, 1}, {0.5, 0.25}, OcclusionMode::kInsertion},
      {{0, 1}, {0.25, 0.5}, OcclusionMode::kDeletion}};
  std::ostringstream c;
  imlkd::write_occlusion_csv(c, curves);
  CHECK(c.str() ==
        "fraction,value,mode\n0,0.5,insertion\n1,0.25,insertion\n"
        "0,0.25,deletion\n1,0.5,deletion\n");
  const auto mean = imlkd::average_curves(std::span(curves, 1));
  CHECK(mean.values == curves[0].values);
}
