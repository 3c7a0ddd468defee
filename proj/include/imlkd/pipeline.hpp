// Copyright 2026 The imlkd Authors
// SPDX-License-Identifier: Apache-2.0
//
// File-producing runs behind the command-line subcommands. Layout under
// cfg.out:
//
//   corpus/manifest.csv, features.txt, trials.csv
//   teacher/metrics.csv, teacher/seed-<s>/{model.txt,log.csv}
//   student-<method>/{config.txt,metrics.csv}, .../seed-<s>/{model.txt,log.csv}
//   ablation/{duration.csv,metrics.csv}, ablation/long-<n>/seed-<s>/model.txt
//   attribution/{mse.csv,per-utterance.csv,<model>-seed-<s>-*.csv}
//   occlusion/{auc.csv,<model>.csv}
//   report.csv
//   <run>-manifest.json
//
// CSVs depend only on the config; wall-clock time goes to the JSON
// manifests alone.

#ifndef IMLKD_PIPELINE_HPP
#define IMLKD_PIPELINE_HPP

#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

#include "imlkd/experiment.hpp"

namespace imlkd {

struct RunManifest {
  std::string command;
  std::string config;
  std::vector<std::filesystem::path> files;
  std::vector<MetricRow> metrics;
  double wall_seconds = 0.0;
};

void write_run_manifest(const std::filesystem::path& path,
                        const RunManifest& m);

RunManifest run_gen_data(const ExperimentConfig& cfg);
RunManifest run_train_teacher(const ExperimentConfig& cfg);
// Uses cfg.method; needs the teacher checkpoints of every seed.
RunManifest run_distill(const ExperimentConfig& cfg);
RunManifest run_ablation_duration(const ExperimentConfig& cfg);

struct NamedCheckpoint {
  std::string name;
  std::filesystem::path path;
};

// Without checkpoints: teacher, iml and vanilla-kd students of every seed on
// the analysis utterances, with curve MSE against the teacher. With
// checkpoints: each one on the given utterances (all analysis utterances when
// none are named), plus pairwise curve MSE.
RunManifest run_attribute(const ExperimentConfig& cfg,
                          const std::vector<NamedCheckpoint>& checkpoints = {},
                          const std::vector<std::string>& utterances = {});
// Mean insertion/deletion curves and AUCs for the teacher, an untrained
// teacher-spec model and every student checkpoint present.
RunManifest run_occlusion(const ExperimentConfig& cfg);
RunManifest run_report(const ExperimentConfig& cfg);

// train-teacher, distill for all six methods, ablate-duration, attribute,
// occlusion and report, in that order. Returns the report manifest.
RunManifest run_pipeline(const ExperimentConfig& cfg);

// Evenly spaced held-out utterances used by the analyses.
std::vector<std::size_t> analysis_indices(const Corpus& corpus,
                                          std::size_t count);

// Reads a `metric,value,seed` CSV.
std::vector<MetricRow> read_metrics_csv(const std::filesystem::path& path);
// Appends per-seed rows of `values` plus a "mean" row.
void add_seed_rows(std::vector<MetricRow>& rows, const std::string& metric,
                   const std::vector<std::uint64_t>& seeds,
                   const std::vector<double>& values);
// Value of the "mean" row of a metric; throws when missing.
double mean_metric(const std::vector<MetricRow>& rows,
                   const std::string& metric);

}  // namespace imlkd

#endif  // IMLKD_PIPELINE_HPP
