// Copyright 2026 The imlkd Authors
// SPDX-License-Identifier: Apache-2.0

#include "imlkd/pipeline.hpp"

#include <chrono>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

#include "imlkd/csv.hpp"
#include "json.hpp"

namespace imlkd {

namespace fs = std::filesystem;

namespace {

constexpr DistillMethod kAllMethods[] = {
    DistillMethod::kBaseline, DistillMethod::kVanillaKd,
    DistillMethod::kEmbL2,    DistillMethod::kEmbCos,
    DistillMethod::kMultiLevel, DistillMethod::kIml,
};

class Run {
 public:
  Run(const ExperimentConfig& cfg, std::string command) : cfg_(cfg) {
    cfg.validate();
    manifest_.command = std::move(command);
    manifest_.config = cfg.to_text();
  }

  template <typename Writer>
  void write(const fs::path& relative, Writer&& writer) {
    const fs::path path = cfg_.out / relative;
    fs::create_directories(path.parent_path());
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    writer(out);
    out.close();
    if (!out) throw std::runtime_error("failed writing " + path.string());
    manifest_.files.push_back(path);
  }

  void metrics(const std::vector<MetricRow>& rows) {
    manifest_.metrics.insert(manifest_.metrics.end(), rows.begin(), rows.end());
  }

  RunManifest finish(const std::string& name) {
    manifest_.wall_seconds = std::chrono::duration<double>(
                                 std::chrono::steady_clock::now() - start_)
                                 .count();
    const fs::path path = cfg_.out / (name + "-manifest.json");
    manifest_.files.push_back(path);
    write_run_manifest(path, manifest_);
    return manifest_;
  }

 private:
  const ExperimentConfig& cfg_;
  RunManifest manifest_;
  std::chrono::steady_clock::time_point start_ =
      std::chrono::steady_clock::now();
};

std::string seed_dir(std::uint64_t seed) {
  return "seed-" + std::to_string(seed);
}

std::string student_dir(DistillMethod m) {
  return "student-" + std::string(method_name(m));
}

Model load_checkpoint(const fs::path& path, const ModelSpec& spec,
                      const std::string& hint) {
  std::ifstream in(path);
  if (!in) {
    throw std::runtime_error("missing checkpoint " + path.string() + " (" +
                             hint + ")");
  }
  return load_model(in, spec);
}

Model load_teacher(const ExperimentConfig& cfg, std::uint64_t seed) {
  return load_checkpoint(cfg.out / "teacher" / seed_dir(seed) / "model.txt",
                         cfg.teacher_spec(seed), "run train-teacher first");
}

Model load_student(const ExperimentConfig& cfg, DistillMethod m,
                   std::uint64_t seed) {
  return load_checkpoint(
      cfg.out / student_dir(m) / seed_dir(seed) / "model.txt",
      cfg.student_spec(seed),
      "run distill --method " + std::string(method_name(m)) + " first");
}

void write_log(std::ostream& out, const TrainLog& log, bool kd) {
  out << (kd ? "epoch,loss,kd\n" : "epoch,loss\n");
  for (std::size_t e = 0; e < log.loss.size(); ++e) {
    out << e + 1 << ',' << format_real(log.loss[e]);
    if (kd) out << ',' << format_real(log.kd[e]);
    out << '\n';
  }
}

void add_evaluation_rows(std::vector<MetricRow>& rows,
                         const std::vector<std::uint64_t>& seeds,
                         const std::vector<Evaluation>& evals,
                         const std::string& prefix = "") {
  std::vector<double> acc, eer, dcf;
  for (const Evaluation& e : evals) {
    acc.push_back(e.accuracy);
    eer.push_back(e.eer);
    dcf.push_back(e.min_dcf);
  }
  add_seed_rows(rows, prefix + "accuracy", seeds, acc);
  add_seed_rows(rows, prefix + "eer", seeds, eer);
  add_seed_rows(rows, prefix + "min-dcf", seeds, dcf);
}

Saliency ig_saliency(const Model& model, const Utterance& u,
                     const ExperimentConfig& cfg) {
  const ScalarFunction f =
      target_output(model, u.speaker, cfg.aam, cfg.attribution_output);
  return integrated_gradients(f, u.features,
                              make_baseline(u.features, cfg.baseline),
                              cfg.attribution_steps, u.speaker);
}

Saliency plain_saliency(const Model& model, const Utterance& u,
                        const ExperimentConfig& cfg) {
  return gradient_saliency(
      target_output(model, u.speaker, cfg.aam, cfg.attribution_output),
      u.features, u.speaker);
}

// Saliency, sidecar and curve files for one model on one utterance.
void write_attribution_files(Run& run, const std::string& stem,
                             const Saliency& ig, const Saliency& grad) {
  run.write("attribution/" + stem + "-ig.csv",
            [&](std::ostream& o) { write_saliency_csv(o, ig); });
  run.write("attribution/" + stem + "-ig.meta",
            [&](std::ostream& o) { write_saliency_meta(o, ig); });
  run.write("attribution/" + stem + "-gradient.csv",
            [&](std::ostream& o) { write_saliency_csv(o, grad); });
  run.write("attribution/" + stem + "-gradient.meta",
            [&](std::ostream& o) { write_saliency_meta(o, grad); });
  run.write("attribution/" + stem + "-curve.csv", [&](std::ostream& o) {
    write_curve_csv(o, time_weight_curve(ig));
  });
}

const Utterance& find_utterance(const Corpus& corpus, const std::string& id) {
  for (const auto* list : {&corpus.heldout, &corpus.train}) {
    for (const Utterance& u : *list) {
      if (u.id == id) return u;
    }
  }
  throw std::invalid_argument("utterance " + id +
                              " is not an utterance of a training speaker");
}

double mean_of(const std::vector<double>& v) {
  double total = 0.0;
  for (double x : v) total += x;
  return v.empty() ? 0.0 : total / static_cast<double>(v.size());
}

}  // namespace

void write_run_manifest(const fs::path& path, const RunManifest& m) {
  nlohmann::ordered_json j;
  j["command"] = m.command;
  j["config"] = m.config;
  j["files"] = nlohmann::json::array();
  for (const fs::path& f : m.files) j["files"].push_back(f.string());
  j["metrics"] = nlohmann::json::array();
  for (const MetricRow& r : m.metrics) {
    j["metrics"].push_back({{"metric", r.metric}, {"value", r.value},
                            {"seed", r.seed}});
  }
  j["wall_seconds"] = m.wall_seconds;
  fs::create_directories(path.parent_path());
  std::ofstream out(path);
  out << j.dump(2) << '\n';
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

std::vector<MetricRow> read_metrics_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != "metric,value,seed") {
    throw std::runtime_error(path.string() + ": not a metrics CSV");
  }
  std::vector<MetricRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto a = line.find(',');
    const auto b = line.rfind(',');
    if (a == std::string::npos || a == b) {
      throw std::runtime_error(path.string() + ": bad line '" + line + "'");
    }
    rows.push_back({line.substr(0, a), std::stod(line.substr(a + 1, b - a - 1)),
                    line.substr(b + 1)});
  }
  return rows;
}

void add_seed_rows(std::vector<MetricRow>& rows, const std::string& metric,
                   const std::vector<std::uint64_t>& seeds,
                   const std::vector<double>& values) {
  for (std::size_t i = 0; i < seeds.size(); ++i) {
    rows.push_back({metric, values.at(i), std::to_string(seeds[i])});
  }
  rows.push_back({metric, mean_of(values), "mean"});
}

double mean_metric(const std::vector<MetricRow>& rows,
                   const std::string& metric) {
  for (const MetricRow& r : rows) {
    if (r.metric == metric && r.seed == "mean") return r.value;
  }
  throw std::runtime_error("no mean row for metric " + metric);
}

std::vector<std::size_t> analysis_indices(const Corpus& corpus,
                                          std::size_t count) {
  const std::size_t n = corpus.heldout.size();
  if (count == 0 || count > n) {
    throw std::invalid_argument("analysis: need 1.." + std::to_string(n) +
                                " utterances");
  }
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < count; ++i) idx.push_back(i * n / count);
  return idx;
}

RunManifest run_gen_data(const ExperimentConfig& cfg) {
  Run run(cfg, "gen-data");
  const Corpus corpus = build_corpus(cfg);
  std::vector<Utterance> all = corpus.train;
  all.insert(all.end(), corpus.heldout.begin(), corpus.heldout.end());
  if (cfg.eval_speakers > 0) {
    all.insert(all.end(), corpus.eval.begin(), corpus.eval.end());
  }
  run.write("corpus/manifest.csv",
            [&](std::ostream& o) { write_manifest(o, all); });
  run.write("corpus/features.txt",
            [&](std::ostream& o) { write_features(o, all); });
  run.write("corpus/trials.csv", [&](std::ostream& o) {
    write_trials(o, corpus.eval, corpus.trials);
  });
  return run.finish("gen-data");
}

RunManifest run_train_teacher(const ExperimentConfig& cfg) {
  Run run(cfg, "train-teacher");
  const Corpus corpus = build_corpus(cfg);
  std::vector<Evaluation> evals;
  for (std::uint64_t seed : cfg.seeds) {
    TrainLog log;
    const Model teacher = train_teacher(cfg, corpus, seed, &log);
    const fs::path dir = fs::path("teacher") / seed_dir(seed);
    run.write(dir / "model.txt",
              [&](std::ostream& o) { save_model(o, teacher); });
    run.write(dir / "log.csv",
              [&](std::ostream& o) { write_log(o, log, false); });
    evals.push_back(evaluate(teacher, corpus, cfg));
  }
  std::vector<MetricRow> rows;
  add_evaluation_rows(rows, cfg.seeds, evals);
  run.write("teacher/metrics.csv",
            [&](std::ostream& o) { write_metrics_csv(o, rows); });
  run.metrics(rows);
  return run.finish("train-teacher");
}

RunManifest run_distill(const ExperimentConfig& cfg) {
  const std::string dir = student_dir(cfg.method);
  Run run(cfg, "distill --method " + std::string(method_name(cfg.method)));
  const Corpus corpus = build_corpus(cfg);
  std::vector<Evaluation> evals;
  for (std::uint64_t seed : cfg.seeds) {
    const Model teacher = load_teacher(cfg, seed);
    TrainLog log;
    const Model student =
        train_student(cfg, corpus, teacher, default_recipe(cfg), seed, &log);
    const fs::path sub = fs::path(dir) / seed_dir(seed);
    run.write(sub / "model.txt",
              [&](std::ostream& o) { save_model(o, student); });
    run.write(sub / "log.csv", [&](std::ostream& o) { write_log(o, log, true); });
    evals.push_back(evaluate(student, corpus, cfg));
  }
  std::vector<MetricRow> rows;
  add_evaluation_rows(rows, cfg.seeds, evals);
  run.write(fs::path(dir) / "metrics.csv",
            [&](std::ostream& o) { write_metrics_csv(o, rows); });
  run.write(fs::path(dir) / "config.txt",
            [&](std::ostream& o) { o << cfg.to_text(); });
  run.metrics(rows);
  return run.finish("distill-" + std::string(method_name(cfg.method)));
}

RunManifest run_ablation_duration(const ExperimentConfig& cfg) {
  if (cfg.ablation_durations.empty()) {
    throw std::invalid_argument("ablate-duration: no durations given");
  }
  for (std::size_t d : cfg.ablation_durations) {
    if (d < cfg.short_frames || d > cfg.frames) {
      throw std::invalid_argument("ablate-duration: duration " +
                                  std::to_string(d) + " outside [short-frames, frames]");
    }
  }
  Run run(cfg, "ablate-duration");
  const Corpus corpus = build_corpus(cfg);
  std::vector<MetricRow> rows;
  std::ostringstream table;
  table << "long-frames,seed,eer,min-dcf\n";
  for (std::size_t duration : cfg.ablation_durations) {
    ExperimentConfig cell = cfg;
    cell.method = DistillMethod::kIml;
    cell.long_frames = duration;
    // The main iml run already covers this cell when its config matches.
    const fs::path main = cfg.out / student_dir(DistillMethod::kIml);
    std::ifstream snapshot(main / "config.txt");
    std::stringstream text;
    text << snapshot.rdbuf();
    const bool reuse = snapshot && text.str() == cell.to_text();

    std::vector<double> eer, dcf;
    for (std::uint64_t seed : cfg.seeds) {
      Model student = reuse ? load_student(cell, DistillMethod::kIml, seed)
                            : train_student(cell, corpus,
                                            load_teacher(cfg, seed),
                                            default_recipe(cell), seed);
      const fs::path sub = fs::path("ablation") /
                           ("long-" + std::to_string(duration)) /
                           seed_dir(seed);
      run.write(sub / "model.txt",
                [&](std::ostream& o) { save_model(o, student); });
      const Evaluation e = evaluate(student, corpus, cfg);
      eer.push_back(e.eer);
      dcf.push_back(e.min_dcf);
      table << duration << ',' << seed << ',' << format_real(e.eer) << ','
            << format_real(e.min_dcf) << '\n';
    }
    table << duration << ",mean," << format_real(mean_of(eer)) << ','
          << format_real(mean_of(dcf)) << '\n';
    const std::string prefix = "long-" + std::to_string(duration) + ".";
    add_seed_rows(rows, prefix + "eer", cfg.seeds, eer);
    add_seed_rows(rows, prefix + "min-dcf", cfg.seeds, dcf);
  }
  run.write("ablation/duration.csv", [&](std::ostream& o) { o << table.str(); });
  run.write("ablation/metrics.csv",
            [&](std::ostream& o) { write_metrics_csv(o, rows); });
  run.metrics(rows);
  return run.finish("ablate-duration");
}

RunManifest run_attribute(const ExperimentConfig& cfg,
                          const std::vector<NamedCheckpoint>& checkpoints,
                          const std::vector<std::string>& utterances) {
  Run run(cfg, "attribute");
  const Corpus corpus = build_corpus(cfg);
  std::vector<const Utterance*> chosen;
  if (utterances.empty()) {
    for (std::size_t i : analysis_indices(corpus, cfg.analysis_utterances)) {
      chosen.push_back(&corpus.heldout[i]);
    }
  } else {
    for (const std::string& id : utterances) {
      chosen.push_back(&find_utterance(corpus, id));
    }
  }

  std::vector<MetricRow> rows;
  std::ostringstream per;
  per << "utterance-id,seed,model,mse\n";

  if (checkpoints.empty()) {
    const std::vector<std::pair<std::string, DistillMethod>> students = {
        {"student-iml", DistillMethod::kIml},
        {"student-vanilla-kd", DistillMethod::kVanillaKd}};
    std::vector<double> self;
    std::map<std::string, std::vector<double>> per_seed;
    for (std::uint64_t seed : cfg.seeds) {
      const Model teacher = load_teacher(cfg, seed);
      std::vector<Model> models;
      for (const auto& s : students) models.push_back(load_student(cfg, s.second, seed));
      std::vector<double> self_mse;
      std::map<std::string, std::vector<double>> mse;
      for (std::size_t n = 0; n < chosen.size(); ++n) {
        const Utterance& u = *chosen[n];
        const Saliency ts = ig_saliency(teacher, u, cfg);
        const std::vector<double> tc = time_weight_curve(ts);
        self_mse.push_back(curve_mse(tc, tc));
        if (n == 0) {
          write_attribution_files(run, "teacher-" + seed_dir(seed), ts,
                                  plain_saliency(teacher, u, cfg));
        }
        for (std::size_t k = 0; k < models.size(); ++k) {
          const Saliency ss = ig_saliency(models[k], u, cfg);
          const double d = curve_mse(tc, time_weight_curve(ss));
          mse[students[k].first].push_back(d);
          per << u.id << ',' << seed << ',' << students[k].first << ','
              << format_real(d) << '\n';
          if (n == 0) {
            write_attribution_files(run, students[k].first + "-" + seed_dir(seed),
                                    ss, plain_saliency(models[k], u, cfg));
          }
        }
      }
      self.push_back(mean_of(self_mse));
      for (const auto& s : students) per_seed[s.first].push_back(mean_of(mse[s.first]));
    }
    add_seed_rows(rows, "curve-mse.teacher", cfg.seeds, self);
    for (const auto& s : students) {
      add_seed_rows(rows, "curve-mse." + s.first, cfg.seeds, per_seed[s.first]);
    }
  } else {
    std::vector<Model> models;
    for (const NamedCheckpoint& c : checkpoints) {
      try {
        models.push_back(load_checkpoint(c.path, cfg.teacher_spec(0), c.name));
      } catch (const std::runtime_error&) {
        models.push_back(load_checkpoint(c.path, cfg.student_spec(0), c.name));
      }
    }
    std::vector<std::vector<std::vector<double>>> curves(models.size());
    for (std::size_t k = 0; k < models.size(); ++k) {
      for (const Utterance* u : chosen) {
        const Saliency s = ig_saliency(models[k], *u, cfg);
        curves[k].push_back(time_weight_curve(s));
        write_attribution_files(run, checkpoints[k].name + "-" + u->id, s,
                                plain_saliency(models[k], *u, cfg));
      }
    }
    for (std::size_t a = 0; a < models.size(); ++a) {
      for (std::size_t b = a + 1; b < models.size(); ++b) {
        std::vector<double> d;
        for (std::size_t n = 0; n < chosen.size(); ++n) {
          d.push_back(curve_mse(curves[a][n], curves[b][n]));
          per << chosen[n]->id << ",all," << checkpoints[a].name << "~"
              << checkpoints[b].name << ',' << format_real(d.back()) << '\n';
        }
        rows.push_back({"curve-mse." + checkpoints[a].name + "~" +
                            checkpoints[b].name,
                        mean_of(d), "all"});
      }
    }
  }
  run.write("attribution/per-utterance.csv",
            [&](std::ostream& o) { o << per.str(); });
  run.write("attribution/mse.csv",
            [&](std::ostream& o) { write_metrics_csv(o, rows); });
  run.metrics(rows);
  return run.finish("attribute");
}

RunManifest run_occlusion(const ExperimentConfig& cfg) {
  Run run(cfg, "occlusion");
  const Corpus corpus = build_corpus(cfg);
  const std::vector<std::size_t> idx =
      analysis_indices(corpus, cfg.occlusion_utterances);

  std::vector<std::string> names = {"teacher", "untrained"};
  for (DistillMethod m : kAllMethods) {
    if (fs::exists(cfg.out / student_dir(m) / seed_dir(cfg.seeds.front()) /
                   "model.txt")) {
      names.push_back(student_dir(m));
    }
  }
  std::map<std::string, std::vector<OcclusionCurve>> insertion, deletion;
  std::map<std::string, std::vector<double>> ins_auc, del_auc;
  for (std::uint64_t seed : cfg.seeds) {
    for (const std::string& name : names) {
      Model model = name == "teacher"     ? load_teacher(cfg, seed)
                    : name == "untrained" ? build_model(cfg.teacher_spec(seed))
                                          : load_student(
                                                cfg,
                                                parse_method(name.substr(8)),
                                                seed);
      std::vector<OcclusionCurve> ins, del;
      for (std::size_t i : idx) {
        const Utterance& u = corpus.heldout[i];
        const OcclusionPair pair = occlusion_curves(
            model, u.features, ig_saliency(model, u, cfg), u.speaker,
            cfg.occlusion_steps, cfg.aam, cfg.occlusion_value);
        ins.push_back(pair.insertion);
        del.push_back(pair.deletion);
      }
      const OcclusionCurve mi = average_curves(ins);
      const OcclusionCurve md = average_curves(del);
      ins_auc[name].push_back(curve_auc(mi));
      del_auc[name].push_back(curve_auc(md));
      insertion[name].push_back(mi);
      deletion[name].push_back(md);
    }
  }
  std::vector<MetricRow> rows;
  for (const std::string& name : names) {
    const OcclusionCurve curves[] = {average_curves(insertion[name]),
                                     average_curves(deletion[name])};
    run.write("occlusion/" + name + ".csv",
              [&](std::ostream& o) { write_occlusion_csv(o, curves); });
    add_seed_rows(rows, name + ".insertion-auc", cfg.seeds, ins_auc[name]);
    add_seed_rows(rows, name + ".deletion-auc", cfg.seeds, del_auc[name]);
  }
  run.write("occlusion/auc.csv",
            [&](std::ostream& o) { write_metrics_csv(o, rows); });
  run.metrics(rows);
  return run.finish("occlusion");
}

RunManifest run_report(const ExperimentConfig& cfg) {
  Run run(cfg, "report");
  std::vector<MetricRow> rows;
  auto collect = [&](const fs::path& file, const std::string& prefix) {
    if (!fs::exists(cfg.out / file)) return;
    for (const MetricRow& r : read_metrics_csv(cfg.out / file)) {
      if (r.seed == "mean") rows.push_back({prefix + r.metric, r.value, "mean"});
    }
  };
  collect("teacher/metrics.csv", "teacher.");
  for (DistillMethod m : kAllMethods) {
    collect(fs::path(student_dir(m)) / "metrics.csv", student_dir(m) + ".");
  }
  collect("ablation/metrics.csv", "ablation.");
  collect("attribution/mse.csv", "");
  collect("occlusion/auc.csv", "");
  if (rows.empty()) {
    throw std::runtime_error("report: no results under " + cfg.out.string());
  }
  run.write("report.csv", [&](std::ostream& o) { write_metrics_csv(o, rows); });
  run.metrics(rows);
  return run.finish("report");
}

RunManifest run_pipeline(const ExperimentConfig& cfg) {
  run_train_teacher(cfg);
  for (DistillMethod m : kAllMethods) {
    ExperimentConfig c = cfg;
    c.method = m;
    run_distill(c);
  }
  run_ablation_duration(cfg);
  run_attribute(cfg);
  run_occlusion(cfg);
  return run_report(cfg);
}

}  // namespace imlkd
