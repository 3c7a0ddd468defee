// Copyright 2026 The imlkd Authors
// SPDX-License-Identifier: Apache-2.0

#include "imlkd/synth.hpp"

#include <cmath>
#include <cstdio>
#include <map>
#include <numbers>
#include <sstream>
#include <stdexcept>

#include "imlkd/random.hpp"

namespace imlkd {

namespace {

constexpr int kMaxRejections = 10000;

// Splits one CSV line; the corpus files never quote.
std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream in(line);
  while (std::getline(in, field, ',')) out.push_back(field);
  return out;
}

std::uint64_t parse_u64(const std::string& s, const char* what) {
  try {
    std::size_t used = 0;
    const unsigned long long v = std::stoull(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw std::runtime_error(std::string("corpus manifest: bad ") + what +
                             " '" + s + "'");
  }
}

}  // namespace

void SynthParams::validate() const {
  if (!(mean_scale >= 0.0) || !(amplitude_scale >= 0.0)) {
    throw std::invalid_argument("synth: scales must be >= 0");
  }
  if (!(min_rate >= 0.0) || !(max_rate >= min_rate)) {
    throw std::invalid_argument("synth: need 0 <= min-rate <= max-rate");
  }
  if (!(noise_sigma >= 0.0)) {
    throw std::invalid_argument("synth: noise sigma must be >= 0");
  }
  if (!(min_separation >= 0.0)) {
    throw std::invalid_argument("synth: min separation must be >= 0");
  }
}

double template_distance(const SpeakerTemplate& a, const SpeakerTemplate& b) {
  double total = (a.rate - b.rate) * (a.rate - b.rate);
  for (std::size_t f = 0; f < a.mean.size(); ++f) {
    total += (a.mean[f] - b.mean[f]) * (a.mean[f] - b.mean[f]);
    total += (a.amplitude[f] - b.amplitude[f]) *
             (a.amplitude[f] - b.amplitude[f]);
  }
  return std::sqrt(total);
}

SpeakerBank generate_speakers(std::size_t n, std::size_t f, std::uint64_t seed,
                              const SynthParams& params) {
  if (n < 2) throw std::invalid_argument("generate_speakers: need n >= 2");
  if (f < 1) throw std::invalid_argument("generate_speakers: need f >= 1");
  params.validate();
  SpeakerBank bank;
  bank.feature_dim = f;
  bank.seed = seed;
  bank.params = params;
  Rng rng = Rng::derive(seed, 0x5eed);
  int rejected = 0;
  while (bank.templates.size() < n) {
    SpeakerTemplate t;
    t.mean.resize(f);
    t.amplitude.resize(f);
    t.offset.resize(f);
    for (std::size_t i = 0; i < f; ++i) {
      t.mean[i] = params.mean_scale * rng.normal();
      t.amplitude[i] = rng.uniform(0.0, params.amplitude_scale);
      t.offset[i] = rng.uniform(0.0, 2.0 * std::numbers::pi);
    }
    t.rate = rng.uniform(params.min_rate, params.max_rate);
    bool separated = true;
    for (const SpeakerTemplate& other : bank.templates) {
      if (template_distance(t, other) < params.min_separation) {
        separated = false;
        break;
      }
    }
    if (separated) {
      bank.templates.push_back(std::move(t));
    } else if (++rejected > kMaxRejections) {
      throw std::invalid_argument(
          "generate_speakers: cannot place " + std::to_string(n) +
          " templates at separation " + std::to_string(params.min_separation));
    }
  }
  return bank;
}

Utterance synth_utterance(const SpeakerBank& bank, std::size_t speaker,
                          std::size_t frames, std::uint64_t seed) {
  if (speaker >= bank.size()) {
    throw std::invalid_argument("synth_utterance: speaker " +
                                std::to_string(speaker) + " out of range");
  }
  if (frames < 1) throw std::invalid_argument("synth_utterance: frames < 1");
  const SpeakerTemplate& t = bank.templates[speaker];
  const std::size_t f = bank.feature_dim;
  Rng rng = Rng::derive(seed, speaker);
  const double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
  const double sigma = bank.params.noise_sigma;
  std::vector<double> v(frames * f);
  for (std::size_t i = 0; i < frames; ++i) {
    const double angle =
        2.0 * std::numbers::pi * t.rate * static_cast<double>(i) + phase;
    for (std::size_t j = 0; j < f; ++j) {
      double x = t.mean[j] + t.amplitude[j] * std::sin(angle + t.offset[j]);
      if (sigma > 0.0) x += sigma * rng.normal();
      v[i * f + j] = x;
    }
  }
  Utterance u;
  u.speaker = speaker;
  u.seed = seed;
  u.features = Tensor::matrix(frames, f, std::move(v));
  return u;
}

Tensor crop_segment(const Utterance& u, std::size_t frames,
                    std::size_t offset) {
  if (frames < 1 || offset + frames > u.frames()) {
    throw std::invalid_argument(
        "crop_segment: [" + std::to_string(offset) + ", " +
        std::to_string(offset + frames) + ") outside " +
        std::to_string(u.frames()) + " frames of " + u.id);
  }
  const std::size_t f = u.features.cols();
  auto v = u.features.values().subspan(offset * f, frames * f);
  return Tensor::matrix(frames, f, {v.begin(), v.end()});
}

std::string utterance_id(std::size_t speaker, std::size_t index) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "spk%03zu-utt%03zu", speaker, index);
  return buf;
}

std::vector<Utterance> synth_corpus(const SpeakerBank& bank,
                                    std::size_t first, std::size_t count,
                                    std::size_t per_speaker,
                                    std::size_t frames, std::uint64_t seed) {
  if (first + count > bank.size()) {
    throw std::invalid_argument("synth_corpus: speakers out of range");
  }
  std::vector<Utterance> out;
  out.reserve(count * per_speaker);
  for (std::size_t s = first; s < first + count; ++s) {
    for (std::size_t i = 0; i < per_speaker; ++i) {
      Utterance u =
          synth_utterance(bank, s, frames, Rng::derive(seed, s, i).next());
      u.id = utterance_id(s, i);
      out.push_back(std::move(u));
    }
  }
  return out;
}

std::vector<Trial> make_trials(const std::vector<Utterance>& utterances,
                               std::size_t n_target, std::size_t n_nontarget,
                               std::uint64_t seed) {
  std::vector<Trial> same, cross;
  for (std::size_t a = 0; a < utterances.size(); ++a) {
    for (std::size_t b = a + 1; b < utterances.size(); ++b) {
      const bool target = utterances[a].speaker == utterances[b].speaker;
      (target ? same : cross).push_back({a, b, target});
    }
  }
  if (same.size() < n_target || cross.size() < n_nontarget) {
    throw std::invalid_argument(
        "make_trials: corpus offers " + std::to_string(same.size()) +
        " target and " + std::to_string(cross.size()) +
        " non-target pairs, requested " + std::to_string(n_target) + " and " +
        std::to_string(n_nontarget));
  }
  Rng rng(seed);
  rng.shuffle(same.begin(), same.end());
  rng.shuffle(cross.begin(), cross.end());
  std::vector<Trial> trials(same.begin(), same.begin() + n_target);
  trials.insert(trials.end(), cross.begin(), cross.begin() + n_nontarget);
  rng.shuffle(trials.begin(), trials.end());
  return trials;
}

void write_manifest(std::ostream& out, const std::vector<Utterance>& corpus) {
  out << "utterance-id,speaker-id,frames,seed\n";
  for (const Utterance& u : corpus) {
    out << u.id << ',' << u.speaker << ',' << u.frames() << ',' << u.seed
        << '\n';
  }
}

void write_features(std::ostream& out, const std::vector<Utterance>& corpus) {
  for (const Utterance& u : corpus) write_tensor(out, u.id, u.features);
}

std::vector<Utterance> read_corpus(std::istream& manifest,
                                   std::istream& features) {
  std::string line;
  if (!std::getline(manifest, line) ||
      line != "utterance-id,speaker-id,frames,seed") {
    throw std::runtime_error("corpus manifest: missing header");
  }
  std::vector<Utterance> corpus;
  std::vector<std::size_t> frames;
  std::map<std::string, std::size_t> index;
  while (std::getline(manifest, line)) {
    if (line.empty()) continue;
    const auto fields = split(line);
    if (fields.size() != 4) {
      throw std::runtime_error("corpus manifest: bad line '" + line + "'");
    }
    Utterance u;
    u.id = fields[0];
    u.speaker = parse_u64(fields[1], "speaker-id");
    frames.push_back(parse_u64(fields[2], "frames"));
    u.seed = parse_u64(fields[3], "seed");
    if (!index.emplace(u.id, corpus.size()).second) {
      throw std::runtime_error("corpus manifest: duplicate id " + u.id);
    }
    corpus.push_back(std::move(u));
  }
  for (std::size_t n = 0; n < corpus.size(); ++n) {
    Tensor t;
    const std::string name = read_tensor(features, t);
    auto it = index.find(name);
    if (it == index.end()) {
      throw std::runtime_error("corpus features: unknown utterance " + name);
    }
    corpus[it->second].features = t;
  }
  for (std::size_t n = 0; n < corpus.size(); ++n) {
    const Utterance& u = corpus[n];
    if (u.features.rank() != 2 || u.frames() != frames[n]) {
      throw std::runtime_error("corpus features: missing or mis-sized " +
                               u.id);
    }
  }
  return corpus;
}

void write_trials(std::ostream& out, const std::vector<Utterance>& corpus,
                  const std::vector<Trial>& trials) {
  out << "utterance-a,utterance-b,target\n";
  for (const Trial& t : trials) {
    out << corpus.at(t.a).id << ',' << corpus.at(t.b).id << ','
        << (t.target ? 1 : 0) << '\n';
  }
}

}  // namespace imlkd
