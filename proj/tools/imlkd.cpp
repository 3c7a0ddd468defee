// Copyright 2026 The imlkd Authors
// SPDX-License-Identifier: Apache-2.0
//
// imlkd <subcommand> [--config file] [--seed n] [--out dir] [key=value ...]

#include <cstdio>
#include <exception>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "imlkd/csv.hpp"
#include "imlkd/pipeline.hpp"

namespace {

struct Common {
  std::string config;
  std::vector<std::uint64_t> seeds;
  std::string out;
  std::vector<std::string> overrides;
};

void add_common(CLI::App* app, Common& c) {
  app->add_option("--config", c.config, "key = value config file")
      ->check(CLI::ExistingFile);
  app->add_option("--seed", c.seeds, "run only these seeds (repeatable)");
  app->add_option("--out", c.out, "output directory");
  app->add_option("--set", c.overrides, "override one key: key=value");
}

imlkd::ExperimentConfig resolve(const Common& c) {
  imlkd::ExperimentConfig cfg =
      c.config.empty() ? imlkd::ExperimentConfig{} : imlkd::load_config(c.config);
  for (const std::string& kv : c.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) {
      throw std::invalid_argument("--set expects key=value, got " + kv);
    }
    cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (!c.seeds.empty()) cfg.seeds = c.seeds;
  if (!c.out.empty()) cfg.out = c.out;
  cfg.validate();
  return cfg;
}

void print(const imlkd::RunManifest& m) {
  for (const imlkd::MetricRow& r : m.metrics) {
    if (r.seed == "mean" || r.seed == "all") {
      std::cout << r.metric << " = " << imlkd::format_real(r.value) << '\n';
    }
  }
  std::cout << m.command << ": " << m.files.size() << " files, "
            << m.wall_seconds << " s\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Desk-scale knowledge distillation experiments"};
  app.require_subcommand(1);

  Common common;
  std::string method = "iml";
  std::vector<std::string> checkpoints;
  std::vector<std::string> utterances;

  auto* gen = app.add_subcommand("gen-data", "write the synthetic corpus");
  auto* teacher = app.add_subcommand("train-teacher", "train the teacher");
  auto* distill = app.add_subcommand("distill", "train a student");
  distill->add_option("--method", method,
                      "baseline|vanilla-kd|emb-l2|emb-cos|multi-level|iml")
      ->required();
  auto* attribute =
      app.add_subcommand("attribute", "saliency maps and time-weight curves");
  attribute->add_option("--checkpoint", checkpoints,
                        "name=path of a model checkpoint (repeatable)");
  attribute->add_option("--utterance", utterances, "utterance id (repeatable)");
  auto* occlusion =
      app.add_subcommand("occlusion", "insertion/deletion curves and AUCs");
  auto* ablate = app.add_subcommand("ablate-duration",
                                    "iml students over long-segment durations");
  auto* report = app.add_subcommand("report", "collect mean metrics");
  auto* pipeline = app.add_subcommand("pipeline", "every stage in order");
  for (CLI::App* sub :
       {gen, teacher, distill, attribute, occlusion, ablate, report, pipeline}) {
    add_common(sub, common);
  }

  CLI11_PARSE(app, argc, argv);

  try {
    imlkd::ExperimentConfig cfg = resolve(common);
    imlkd::RunManifest m;
    if (*gen) {
      m = imlkd::run_gen_data(cfg);
    } else if (*teacher) {
      m = imlkd::run_train_teacher(cfg);
    } else if (*distill) {
      cfg.method = imlkd::parse_method(method);
      m = imlkd::run_distill(cfg);
    } else if (*attribute) {
      std::vector<imlkd::NamedCheckpoint> named;
      for (const std::string& c : checkpoints) {
        const auto eq = c.find('=');
        if (eq == std::string::npos) {
          throw std::invalid_argument("--checkpoint expects name=path, got " + c);
        }
        named.push_back({c.substr(0, eq), c.substr(eq + 1)});
      }
      m = imlkd::run_attribute(cfg, named, utterances);
    } else if (*occlusion) {
      m = imlkd::run_occlusion(cfg);
    } else if (*ablate) {
      m = imlkd::run_ablation_duration(cfg);
    } else if (*report) {
      m = imlkd::run_report(cfg);
    } else {
      m = imlkd::run_pipeline(cfg);
    }
    print(m);
  } catch (const std::exception& e) {
    std::cerr << "imlkd: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
