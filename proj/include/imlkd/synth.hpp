// Copyright 2026 The imlkd Authors
// SPDX-License-Identifier: Apache-2.0
//
// Synthetic speaker corpus. Each speaker owns a template (mean spectrum,
// per-band modulation amplitude and phase offset, modulation rate) and an
// utterance is
//   x[t,f] = mean[f] + amp[f] * sin(2 pi rate t + phase + offset[f]) + noise
// with phase and noise drawn per utterance. 100 frames stand for a second.

#ifndef IMLKD_SYNTH_HPP
#define IMLKD_SYNTH_HPP

#include <cstddef>
#include <cstdint>
#include <istream>
#include <ostream>
#include <string>
#include <vector>

#include "imlkd/tensor.hpp"

namespace imlkd {

struct SynthParams {
  // Standard deviation of template means. Kept small so that identity lives
  // mostly in the modulation rather than in the time-mean spectrum.
  double mean_scale = 0.05;
  // Modulation amplitudes are uniform in [0, amplitude_scale].
  double amplitude_scale = 0.5;
  // Modulation rate range, cycles per frame: 1.2 to 12 cycles per 600 frames.
  double min_rate = 0.002;
  double max_rate = 0.02;
  double noise_sigma = 0.3;
  // Rejection threshold on pairwise template distance.
  double min_separation = 0.5;

  void validate() const;
};

struct SpeakerTemplate {
  std::vector<double> mean;
  std::vector<double> amplitude;
  std::vector<double> offset;
  double rate = 0.0;
};

struct SpeakerBank {
  std::size_t feature_dim = 0;
  std::uint64_t seed = 0;
  SynthParams params;
  std::vector<SpeakerTemplate> templates;

  std::size_t size() const { return templates.size(); }
};

struct Utterance {
  std::string id;
  std::size_t speaker = 0;
  std::uint64_t seed = 0;
  Tensor features;  // [T,F]

  std::size_t frames() const { return features.rows(); }
};

// Distance between two templates: Euclidean over (mean, amplitude, rate).
double template_distance(const SpeakerTemplate& a, const SpeakerTemplate& b);

// Throws std::invalid_argument for n < 2, f < 1 or a separation that
// rejection sampling cannot satisfy.
SpeakerBank generate_speakers(std::size_t n, std::size_t f, std::uint64_t seed,
                              const SynthParams& params = {});

// Deterministic in (bank, speaker, frames, seed).
Utterance synth_utterance(const SpeakerBank& bank, std::size_t speaker,
                          std::size_t frames, std::uint64_t seed);

Tensor crop_segment(const Utterance& u, std::size_t frames, std::size_t offset);

std::string utterance_id(std::size_t speaker, std::size_t index);

struct CorpusSpec {
  std::size_t speakers = 32;
  std::size_t utterances_per_speaker = 40;
  std::size_t frames = 600;
  std::size_t feature_dim = 16;
  std::uint64_t seed = 1;
  SynthParams params;
};

// Utterance i of speaker s has seed derived from (seed, s, i). Speakers
// [first, first + count) of the bank are used.
std::vector<Utterance> synth_corpus(const SpeakerBank& bank,
                                    std::size_t first, std::size_t count,
                                    std::size_t per_speaker,
                                    std::size_t frames, std::uint64_t seed);

struct Trial {
  std::size_t a = 0;  // indices into the utterance list
  std::size_t b = 0;
  bool target = false;
};

// Exactly n_target same-speaker and n_nontarget cross-speaker pairs, no
// pair repeated, shuffled together. Throws std::invalid_argument when the
// corpus cannot supply the counts.
std::vector<Trial> make_trials(const std::vector<Utterance>& utterances,
                               std::size_t n_target, std::size_t n_nontarget,
                               std::uint64_t seed);

// CSV `utterance-id,speaker-id,frames,seed`.
void write_manifest(std::ostream& out, const std::vector<Utterance>& corpus);
// Tensor dumps named by utterance id.
void write_features(std::ostream& out, const std::vector<Utterance>& corpus);
// Inverse of the two writers; throws std::runtime_error on inconsistency.
std::vector<Utterance> read_corpus(std::istream& manifest,
                                   std::istream& features);
// CSV `utterance-a,utterance-b,target`.
void write_trials(std::ostream& out, const std::vector<Utterance>& corpus,
                  const std::vector<Trial>& trials);

}  // namespace imlkd

#endif  // IMLKD_SYNTH_HPP
