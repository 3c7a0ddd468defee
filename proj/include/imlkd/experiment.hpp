// Copyright 2026 The imlkd Authors
// SPDX-License-Identifier: Apache-2.0
//
// Experiment configuration, corpus assembly, training loops and evaluation.
//
// Everything is a function of the configuration and the seed: utterance
// order, crop offsets and initializations come from streams derived with
// Rng::derive, so two runs with the same config write identical files.

#ifndef IMLKD_EXPERIMENT_HPP
#define IMLKD_EXPERIMENT_HPP

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <istream>
#include <optional>
#include <string>
#include <vector>

#include "imlkd/attribution.hpp"
#include "imlkd/losses.hpp"
#include "imlkd/metrics.hpp"
#include "imlkd/model.hpp"
#include "imlkd/synth.hpp"

namespace imlkd {

struct ExperimentConfig {
  // Corpus. The first `speakers` templates are training classes; eval
  // speakers are extra templates only used for verification trials.
  std::size_t speakers = 32;
  std::size_t utterances_per_speaker = 40;
  std::size_t heldout_per_speaker = 10;
  // 0 scores trials over the held-out utterances of the training speakers.
  std::size_t eval_speakers = 16;
  std::size_t eval_utterances_per_speaker = 10;
  std::size_t frames = 600;
  std::size_t feature_dim = 16;
  std::uint64_t data_seed = 1;
  SynthParams synth;

  std::vector<std::size_t> teacher_widths = {64, 64, 64};
  std::vector<std::size_t> teacher_contexts = {5, 3, 3};
  std::vector<std::size_t> student_widths = {16, 16, 16};
  std::vector<std::size_t> student_contexts = {5, 3, 3};
  std::size_t embedding_dim = 16;
  AamParams aam;

  std::size_t teacher_epochs = 20;
  std::size_t student_epochs = 20;
  std::size_t batch_size = 32;
  double teacher_lr = 0.05;
  double student_lr = 0.001;
  std::vector<std::uint64_t> seeds = {1, 2, 3};

  DistillMethod method = DistillMethod::kIml;
  // Unset means default_eta(method).
  std::optional<double> eta;
  std::size_t ig_steps = 2;
  std::size_t short_frames = 200;
  std::size_t long_frames = 600;
  double temperature = 1.0;
  BaselineKind baseline = BaselineKind::kTimeMean;

  std::size_t target_trials = 600;
  std::size_t nontarget_trials = 6000;
  DcfParams dcf;
  std::size_t occlusion_steps = 20;
  CurveValue occlusion_value = CurveValue::kProbability;
  std::size_t analysis_utterances = 20;
  // Occlusion runs IG for every model, so it uses the first-chosen subset.
  std::size_t occlusion_utterances = 8;
  std::size_t attribution_steps = 64;
  AttributionOutput attribution_output = AttributionOutput::kLogit;
  std::vector<std::size_t> ablation_durations = {200, 400, 600};

  std::filesystem::path out = "runs";

  double resolved_eta() const;
  ModelSpec teacher_spec(std::uint64_t seed) const;
  ModelSpec student_spec(std::uint64_t seed) const;
  DistillConfig distill_config() const;

  // Throws std::invalid_argument naming the offending key.
  void validate() const;
  // Sets one key from its textual value; unknown keys throw.
  void set(const std::string& key, const std::string& value);
  // Canonical `key = value` listing of every key, parseable by
  // parse_config.
  std::string to_text() const;
};

// Line-oriented `key = value`; `#` starts a comment. Unknown keys, repeated
// keys and malformed values throw std::invalid_argument with the line number.
ExperimentConfig parse_config(std::istream& in);
ExperimentConfig load_config(const std::filesystem::path& path);

struct Corpus {
  SpeakerBank bank;
  std::vector<Utterance> train;
  std::vector<Utterance> heldout;
  // Verification utterances; trials index into this list.
  std::vector<Utterance> eval;
  std::vector<Trial> trials;
};

Corpus build_corpus(const ExperimentConfig& cfg);

struct TrainLog {
  // Mean over batches of the training objective, per epoch.
  std::vector<double> loss;
  // Mean distillation term (0 for the baseline), per epoch.
  std::vector<double> kd;
};

// Cross-entropy training of the teacher spec on short crops.
Model train_teacher(const ExperimentConfig& cfg, const Corpus& corpus,
                    std::uint64_t seed, TrainLog* log = nullptr);

struct StudentRecipe {
  DistillMethod method = DistillMethod::kBaseline;
  double eta = 0.0;
  std::size_t long_frames = 600;
};

StudentRecipe default_recipe(const ExperimentConfig& cfg);

// Student training under one objective. Short crops and utterance order are
// the same for every method at a given seed; iml additionally aligns on a
// long segment per utterance, fixed for the run (the whole utterance when
// long_frames equals its length).
Model train_student(const ExperimentConfig& cfg, const Corpus& corpus,
                    const Model& teacher, const StudentRecipe& recipe,
                    std::uint64_t seed, TrainLog* log = nullptr);

struct Evaluation {
  double accuracy = 0.0;  // top-1 on held-out utterances
  double eer = 0.0;
  double min_dcf = 0.0;
};

Evaluation evaluate(const Model& model, const Corpus& corpus,
                    const ExperimentConfig& cfg);

// Normalized IG time-weight curve of the true speaker's output.
std::vector<double> attribution_curve(const Model& model, const Utterance& u,
                                      const ExperimentConfig& cfg);

}  // namespace imlkd

#endif  // IMLKD_EXPERIMENT_HPP
