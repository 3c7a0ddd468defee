// Copyright 2026 The imlkd Authors
// SPDX-License-Identifier: Apache-2.0

#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>
#include <stdexcept>

#include "imlkd/csv.hpp"
#include "imlkd/experiment.hpp"
#include "imlkd/random.hpp"

namespace imlkd {

namespace {

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return "";
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

template <typename T>
T parse_integer(const std::string& s) {
  T v{};
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw std::invalid_argument("expected a non-negative integer, got '" + s +
                                "'");
  }
  return v;
}

double parse_real(const std::string& s) {
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(v)) {
    throw std::invalid_argument("expected a number, got '" + s + "'");
  }
  return v;
}

template <typename T>
std::vector<T> parse_list(const std::string& s) {
  std::vector<T> out;
  std::string item;
  std::istringstream in(s);
  while (std::getline(in, item, ',')) out.push_back(parse_integer<T>(trim(item)));
  return out;
}

template <typename T>
std::string join(const std::vector<T>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(v[i]);
  }
  return s;
}

struct Key {
  const char* name;
  std::function<std::string(const ExperimentConfig&)> get;
  std::function<void(ExperimentConfig&, const std::string&)> set;
};

#define IMLKD_SIZE_KEY(name, field)                                        \
  Key {                                                                    \
    name, [](const ExperimentConfig& c) { return std::to_string(c.field); }, \
        [](ExperimentConfig& c, const std::string& v) {                    \
          c.field = parse_integer<std::size_t>(v);                         \
        }                                                                  \
  }
#define IMLKD_REAL_KEY(name, field)                                          \
  Key {                                                                      \
    name, [](const ExperimentConfig& c) { return format_real(c.field); },    \
        [](ExperimentConfig& c, const std::string& v) {                      \
          c.field = parse_real(v);                                           \
        }                                                                    \
  }
#define IMLKD_LIST_KEY(name, field)                                  \
  Key {                                                              \
    name, [](const ExperimentConfig& c) { return join(c.field); },   \
        [](ExperimentConfig& c, const std::string& v) {              \
          c.field = parse_list<std::size_t>(v);                      \
        }                                                            \
  }

const std::vector<Key>& keys() {
  static const std::vector<Key> table = {
      IMLKD_SIZE_KEY("speakers", speakers),
      IMLKD_SIZE_KEY("utterances-per-speaker", utterances_per_speaker),
      IMLKD_SIZE_KEY("heldout-per-speaker", heldout_per_speaker),
      IMLKD_SIZE_KEY("eval-speakers", eval_speakers),
      IMLKD_SIZE_KEY("eval-utterances-per-speaker",
                     eval_utterances_per_speaker),
      IMLKD_SIZE_KEY("frames", frames),
      IMLKD_SIZE_KEY("feature-dim", feature_dim),
      Key{"data-seed",
          [](const ExperimentConfig& c) { return std::to_string(c.data_seed); },
          [](ExperimentConfig& c, const std::string& v) {
            c.data_seed = parse_integer<std::uint64_t>(v);
          }},
      IMLKD_REAL_KEY("mean-scale", synth.mean_scale),
      IMLKD_REAL_KEY("amplitude-scale", synth.amplitude_scale),
      IMLKD_REAL_KEY("min-rate", synth.min_rate),
      IMLKD_REAL_KEY("max-rate", synth.max_rate),
      IMLKD_REAL_KEY("noise-sigma", synth.noise_sigma),
      IMLKD_REAL_KEY("min-separation", synth.min_separation),
      IMLKD_LIST_KEY("teacher-widths", teacher_widths),
      IMLKD_LIST_KEY("teacher-contexts", teacher_contexts),
      IMLKD_LIST_KEY("student-widths", student_widths),
      IMLKD_LIST_KEY("student-contexts", student_contexts),
      IMLKD_SIZE_KEY("embedding-dim", embedding_dim),
      IMLKD_REAL_KEY("aam-scale", aam.scale),
      IMLKD_REAL_KEY("aam-margin", aam.margin),
      IMLKD_SIZE_KEY("teacher-epochs", teacher_epochs),
      IMLKD_SIZE_KEY("student-epochs", student_epochs),
      IMLKD_SIZE_KEY("batch-size", batch_size),
      IMLKD_REAL_KEY("teacher-lr", teacher_lr),
      IMLKD_REAL_KEY("student-lr", student_lr),
      Key{"seeds", [](const ExperimentConfig& c) { return join(c.seeds); },
          [](ExperimentConfig& c, const std::string& v) {
            c.seeds = parse_list<std::uint64_t>(v);
          }},
      Key{"method",
          [](const ExperimentConfig& c) {
            return std::string(method_name(c.method));
          },
          [](ExperimentConfig& c, const std::string& v) {
            c.method = parse_method(v);
          }},
      Key{"eta",
          [](const ExperimentConfig& c) {
            return c.eta ? format_real(*c.eta) : std::string("default");
          },
          [](ExperimentConfig& c, const std::string& v) {
            if (v == "default") {
              c.eta.reset();
            } else {
              c.eta = parse_real(v);
            }
          }},
      IMLKD_SIZE_KEY("ig-steps", ig_steps),
      IMLKD_SIZE_KEY("short-frames", short_frames),
      IMLKD_SIZE_KEY("long-frames", long_frames),
      IMLKD_REAL_KEY("temperature", temperature),
      Key{"baseline",
          [](const ExperimentConfig& c) {
            return std::string(c.baseline == BaselineKind::kTimeMean
                                   ? "time-mean"
                                   : "global-mean");
          },
          [](ExperimentConfig& c, const std::string& v) {
            if (v == "time-mean") {
              c.baseline = BaselineKind::kTimeMean;
            } else if (v == "global-mean") {
              c.baseline = BaselineKind::kGlobalMean;
            } else {
              throw std::invalid_argument(
                  "expected time-mean or global-mean, got '" + v + "'");
            }
          }},
      IMLKD_SIZE_KEY("target-trials", target_trials),
      IMLKD_SIZE_KEY("nontarget-trials", nontarget_trials),
      IMLKD_REAL_KEY("p-target", dcf.p_target),
      IMLKD_REAL_KEY("c-miss", dcf.c_miss),
      IMLKD_REAL_KEY("c-fa", dcf.c_fa),
      IMLKD_SIZE_KEY("occlusion-steps", occlusion_steps),
      Key{"occlusion-value",
          [](const ExperimentConfig& c) {
            return std::string(c.occlusion_value == CurveValue::kProbability
                                   ? "probability"
                                   : "accuracy");
          },
          [](ExperimentConfig& c, const std::string& v) {
            if (v == "probability") {
              c.occlusion_value = CurveValue::kProbability;
            } else if (v == "accuracy") {
              c.occlusion_value = CurveValue::kAccuracy;
            } else {
              throw std::invalid_argument(
                  "expected probability or accuracy, got '" + v + "'");
            }
          }},
      IMLKD_SIZE_KEY("analysis-utterances", analysis_utterances),
      IMLKD_SIZE_KEY("occlusion-utterances", occlusion_utterances),
      IMLKD_SIZE_KEY("attribution-steps", attribution_steps),
      Key{"attribution-output",
          [](const ExperimentConfig& c) {
            return std::string(c.attribution_output == AttributionOutput::kLogit
                                   ? "logit"
                                   : "probability");
          },
          [](ExperimentConfig& c, const std::string& v) {
            if (v == "logit") {
              c.attribution_output = AttributionOutput::kLogit;
            } else if (v == "probability") {
              c.attribution_output = AttributionOutput::kProbability;
            } else {
              throw std::invalid_argument(
                  "expected logit or probability, got '" + v + "'");
            }
          }},
      IMLKD_LIST_KEY("ablation-durations", ablation_durations),
      Key{"out", [](const ExperimentConfig& c) { return c.out.string(); },
          [](ExperimentConfig& c, const std::string& v) {
            if (v.empty()) throw std::invalid_argument("empty output path");
            c.out = v;
          }},
  };
  return table;
}

#undef IMLKD_SIZE_KEY
#undef IMLKD_REAL_KEY
#undef IMLKD_LIST_KEY

void require(bool ok, const std::string& what) {
  if (!ok) throw std::invalid_argument("config: " + what);
}

ModelSpec model_spec(const ExperimentConfig& c,
                     const std::vector<std::size_t>& widths,
                     const std::vector<std::size_t>& contexts,
                     std::uint64_t seed) {
  ModelSpec s;
  s.input_dim = c.feature_dim;
  s.frame_widths = widths;
  s.contexts = contexts;
  s.embedding_dim = c.embedding_dim;
  s.num_classes = c.speakers;
  s.seed = seed;
  return s;
}

}  // namespace

double ExperimentConfig::resolved_eta() const {
  return eta ? *eta : default_eta(method);
}

ModelSpec ExperimentConfig::teacher_spec(std::uint64_t seed) const {
  return model_spec(*this, teacher_widths, teacher_contexts,
                    Rng::derive(seed, 0x7eac).next());
}

ModelSpec ExperimentConfig::student_spec(std::uint64_t seed) const {
  return model_spec(*this, student_widths, student_contexts,
                    Rng::derive(seed, 0x57d).next());
}

DistillConfig ExperimentConfig::distill_config() const {
  DistillConfig d;
  d.method = method;
  d.eta = resolved_eta();
  d.ig_steps = ig_steps;
  d.long_frames = long_frames;
  d.temperature = temperature;
  d.baseline = baseline;
  return d;
}

void ExperimentConfig::validate() const {
  require(speakers >= 2, "speakers must be >= 2");
  require(heldout_per_speaker >= 1 &&
              heldout_per_speaker < utterances_per_speaker,
          "heldout-per-speaker must lie in [1, utterances-per-speaker)");
  require(eval_speakers == 0 || eval_speakers >= 2,
          "eval-speakers must be 0 or >= 2");
  require(eval_speakers == 0 || eval_utterances_per_speaker >= 2,
          "eval-utterances-per-speaker must be >= 2");
  require(feature_dim >= 1, "feature-dim must be >= 1");
  synth.validate();
  teacher_spec(0).validate();
  student_spec(0).validate();
  aam.validate();
  require(batch_size >= 2, "batch-size must be >= 2");
  require(teacher_lr > 0.0 && student_lr > 0.0, "learning rates must be > 0");
  require(!seeds.empty(), "seeds must not be empty");
  require(std::set(seeds.begin(), seeds.end()).size() == seeds.size(),
          "seeds must be distinct");
  require(!eta || *eta >= 0.0, "eta must be >= 0");
  require(ig_steps >= 1, "ig-steps must be >= 1");
  require(short_frames >= teacher_spec(0).min_frames() &&
              short_frames >= student_spec(0).min_frames(),
          "short-frames is shorter than the models' receptive field");
  require(long_frames >= short_frames, "long-frames must be >= short-frames");
  require(frames >= long_frames, "frames must be >= long-frames");
  require(temperature > 0.0, "temperature must be > 0");
  require(target_trials >= 1 && nontarget_trials >= 1,
          "trial counts must be >= 1");
  dcf.validate();
  require(occlusion_steps >= 1, "occlusion-steps must be >= 1");
  require(attribution_steps >= 1, "attribution-steps must be >= 1");
  require(analysis_utterances >= 1 &&
              analysis_utterances <= speakers * heldout_per_speaker,
          "analysis-utterances must lie in [1, held-out utterance count]");
  require(occlusion_utterances >= 1 &&
              occlusion_utterances <= speakers * heldout_per_speaker,
          "occlusion-utterances must lie in [1, held-out utterance count]");
  for (std::size_t d : ablation_durations) {
    require(d >= short_frames && d <= frames,
            "ablation durations must lie in [short-frames, frames]");
  }
}

void ExperimentConfig::set(const std::string& key, const std::string& value) {
  for (const Key& k : keys()) {
    if (key == k.name) {
      try {
        k.set(*this, value);
      } catch (const std::invalid_argument& e) {
        throw std::invalid_argument("config key '" + key + "': " + e.what());
      }
      return;
    }
  }
  throw std::invalid_argument("unknown config key '" + key + "'");
}

std::string ExperimentConfig::to_text() const {
  std::string s;
  for (const Key& k : keys()) s += std::string(k.name) + " = " + k.get(*this) + "\n";
  return s;
}

ExperimentConfig parse_config(std::istream& in) {
  ExperimentConfig cfg;
  std::set<std::string> seen;
  std::string line;
  for (std::size_t number = 1; std::getline(in, line); ++number) {
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    const std::string where = "line " + std::to_string(number) + ": ";
    if (eq == std::string::npos) {
      throw std::invalid_argument(where + "expected 'key = value'");
    }
    const std::string key = trim(line.substr(0, eq));
    if (!seen.insert(key).second) {
      throw std::invalid_argument(where + "repeated key '" + key + "'");
    }
    try {
      cfg.set(key, trim(line.substr(eq + 1)));
    } catch (const std::invalid_argument& e) {
      throw std::invalid_argument(where + e.what());
    }
  }
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open config " + path.string());
  return parse_config(in);
}

}  // namespace imlkd
