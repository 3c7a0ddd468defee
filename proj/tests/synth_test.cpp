// Copyright 2026 The imlkd Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <set>
#include <sstream>

#include "doctest.h"
#include "imlkd/synth.hpp"

using imlkd::Tensor;
using imlkd::Utterance;

namespace {

std::vector<double> frame_mean(const Utterance& u) {
  std::vector<double> m(u.features.cols(), 0.0);
  for (std::size_t t = 0; t < u.frames(); ++t) {
    for (std::size_t f = 0; f < m.size(); ++f) m[f] += u.features.at(t, f);
  }
  for (double& v : m) v /= static_cast<double>(u.frames());
  return m;
}

double correlation(const std::vector<double>& a, const std::vector<double>& b) {
  const double n = static_cast<double>(a.size());
  double ma = 0, mb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ma += a[i] / n;
    mb += b[i] / n;
  }
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  return sab / std::sqrt(saa * sbb);
}

}  // namespace

TEST_CASE("generate_speakers") {
  const auto a = imlkd::generate_speakers(32, 16, 7);
  const auto b = imlkd::generate_speakers(32, 16, 7);
  REQUIRE(a.size() == 32);
  double closest = INFINITY;
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a.templates[i].mean == b.templates[i].mean);
    CHECK(a.templates[i].amplitude == b.templates[i].amplitude);
    CHECK(a.templates[i].rate == b.templates[i].rate);
    for (std::size_t j = 0; j < i; ++j) {
      closest = std::min(closest, imlkd::template_distance(a.templates[i],
                                                           a.templates[j]));
    }
  }
  CHECK(closest >= 0.5);
  CHECK(imlkd::generate_speakers(32, 16, 8).templates[0].mean !=
        a.templates[0].mean);
  CHECK_THROWS_AS(imlkd::generate_speakers(1, 16, 7), std::invalid_argument);

  imlkd::SynthParams cramped;
  cramped.mean_scale = 0.0;
  cramped.amplitude_scale = 0.0;
  cramped.max_rate = cramped.min_rate;
  CHECK_THROWS_AS(imlkd::generate_speakers(3, 4, 7, cramped),
                  std::invalid_argument);
}

TEST_CASE("synth_utterance") {
  const auto bank = imlkd::generate_speakers(4, 16, 3);
  const Utterance u = imlkd::synth_utterance(bank, 2, 600, 99);
  CHECK(u.features.shape() == imlkd::Shape{600, 16});
  CHECK(imlkd::same_values(u.features,
                           imlkd::synth_utterance(bank, 2, 600, 99).features));
  CHECK_FALSE(imlkd::same_values(
      u.features, imlkd::synth_utterance(bank, 2, 600, 100).features));
  CHECK_THROWS_AS(imlkd::synth_utterance(bank, 4, 10, 1), std::invalid_argument);

  imlkd::SynthParams quiet;
  quiet.noise_sigma = 0.0;
  auto clean = imlkd::generate_speakers(4, 16, 3, quiet);
  clean.templates[1].rate = 1.0 / 25.0;
  const Utterance p = imlkd::synth_utterance(clean, 1, 200, 5);
  double worst = 0.0;
  for (std::size_t t = 0; t + 25 < 200; ++t) {
    for (std::size_t f = 0; f < 16; ++f) {
      worst = std::max(worst, std::abs(p.features.at(t, f) -
                                       p.features.at(t + 25, f)));
    }
  }
  CHECK(worst <= 1e-9);
}

TEST_CASE("crop_segment") {
  const auto bank = imlkd::generate_speakers(2, 3, 1);
  const Utterance u = imlkd::synth_utterance(bank, 0, 600, 1);
  CHECK(imlkd::same_values(imlkd::crop_segment(u, 600, 0), u.features));
  const Tensor c = imlkd::crop_segment(u, 200, 150);
  CHECK(c.shape() == imlkd::Shape{200, 3});
  CHECK(c.at(0, 2) == u.features.at(150, 2));
  CHECK(c.at(199, 0) == u.features.at(349, 0));
  CHECK_THROWS_AS(imlkd::crop_segment(u, 200, 401), std::invalid_argument);
}

TEST_CASE("make_trials") {
  const auto bank = imlkd::generate_speakers(5, 4, 2);
  const auto corpus = imlkd::synth_corpus(bank, 0, 5, 6, 20, 3);
  const auto trials = imlkd::make_trials(corpus, 50, 50, 11);
  REQUIRE(trials.size() == 100);
  std::size_t targets = 0;
  std::set<std::pair<std::size_t, std::size_t>> seen;
  for (const auto& t : trials) {
    targets += t.target;
    CHECK(t.target == (corpus[t.a].speaker == corpus[t.b].speaker));
    CHECK(seen.insert({t.a, t.b}).second);
  }
  CHECK(targets == 50);
  const auto again = imlkd::make_trials(corpus, 50, 50, 11);
  for (std::size_t i = 0; i < trials.size(); ++i) {
    CHECK(trials[i].a == again[i].a);
    CHECK(trials[i].b == again[i].b);
  }
  const auto single = imlkd::synth_corpus(bank, 0, 1, 6, 20, 3);
  CHECK_THROWS_AS(imlkd::make_trials(single, 2, 1, 1), std::invalid_argument);
  CHECK_THROWS_AS(imlkd::make_trials(corpus, 76, 0, 1), std::invalid_argument);
}

TEST_CASE("within-speaker utterances correlate more than across speakers") {
  const auto bank = imlkd::generate_speakers(8, 16, 21);
  const auto corpus = imlkd::synth_corpus(bank, 0, 8, 5, 300, 22);
  double within = 0, across = 0;
  std::size_t nw = 0, na = 0;
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    for (std::size_t j = i + 1; j < corpus.size(); ++j) {
      const double r = correlation(frame_mean(corpus[i]), frame_mean(corpus[j]));
      if (corpus[i].speaker == corpus[j].speaker) {
        within += r;
        ++nw;
      } else {
        across += r;
        ++na;
      }
    }
  }
  CHECK(within / nw > across / na);
}

TEST_CASE("corpus files round-trip") {
  const auto bank = imlkd::generate_speakers(3, 4, 2);
  const auto corpus = imlkd::synth_corpus(bank, 1, 2, 3, 12, 9);
  CHECK(corpus[0].id == "spk001-utt000");
  std::stringstream manifest, features;
  imlkd::write_manifest(manifest, corpus);
  imlkd::write_features(features, corpus);
  CHECK(manifest.str().rfind("utterance-id,speaker-id,frames,seed\n", 0) == 0);
  const auto back = imlkd::read_corpus(manifest, features);
  REQUIRE(back.size() == corpus.size());
  for (std::size_t i = 0; i < back.size(); ++i) {
    CHECK(back[i].id == corpus[i].id);
    CHECK(back[i].speaker == corpus[i].speaker);
    CHECK(back[i].seed == corpus[i].seed);
    CHECK(imlkd::same_values(back[i].features, corpus[i].features));
  }
  std::stringstream bad("utterance-id,speaker-id,frames,seed\nx,1\n"), none;
  CHECK_THROWS_AS(imlkd::read_corpus(bad, none), std::runtime_error);
}
