// Copyright 2026 The imlkd Authors
// SPDX-License-Identifier: Apache-2.0

#include "imlkd/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "imlkd/random.hpp"

namespace imlkd {

namespace {

// Stream labels for Rng::derive.
enum Stream : std::uint64_t {
  kOrderStream = 11,
  kCropStream = 12,
  kLongStream = 13,
  kEvalCorpusStream = 21,
  kTrialStream = 22,
};

struct StepResult {
  double loss = 0.0;
  double kd = 0.0;
  std::vector<Tensor> gradients;
};

using Step = std::function<StepResult(std::span<const std::size_t> utts,
                                      std::span<const std::size_t> offsets,
                                      std::span<const Tensor> crops,
                                      std::span<const std::size_t> labels)>;

void add_into(std::vector<Tensor>& total, const std::vector<Tensor>& extra) {
  for (std::size_t p = 0; p < total.size(); ++p) {
    std::vector<double> v = total[p].to_vector();
    auto e = extra[p].values();
    for (std::size_t i = 0; i < v.size(); ++i) v[i] += e[i];
    total[p] = Tensor::create(total[p].shape(), std::move(v));
  }
}

Tensor crop_rows(const Tensor& t, std::size_t offset, std::size_t rows) {
  const std::size_t c = t.cols();
  auto v = t.values().subspan(offset * c, rows * c);
  return Tensor::matrix(rows, c, {v.begin(), v.end()});
}

void sgd_update(Model& model, const std::vector<Tensor>& grads, double lr,
                std::size_t epoch) {
  for (std::size_t p = 0; p < grads.size(); ++p) {
    std::vector<double> v = model.parameter(p).to_vector();
    auto g = grads[p].values();
    for (std::size_t i = 0; i < v.size(); ++i) {
      v[i] -= lr * g[i];
      if (!std::isfinite(v[i])) {
        throw std::runtime_error("training diverged in epoch " +
                                 std::to_string(epoch + 1) + " (parameter " +
                                 model.parameters()[p].name + ")");
      }
    }
    model.set_parameter(p, Tensor::create(model.parameter(p).shape(),
                                          std::move(v)));
  }
}

void run_epochs(const ExperimentConfig& cfg, const Corpus& corpus,
                std::uint64_t seed, std::size_t epochs, double lr,
                Model& model, const Step& step, TrainLog* log) {
  const std::size_t n = corpus.train.size();
  for (std::size_t epoch = 0; epoch < epochs; ++epoch) {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    Rng::derive(seed, kOrderStream, epoch).shuffle(order.begin(), order.end());
    double loss = 0.0, kd = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < n; start += cfg.batch_size) {
      const std::size_t end = std::min(n, start + cfg.batch_size);
      std::vector<std::size_t> utts(order.begin() + start, order.begin() + end);
      std::vector<Tensor> crops;
      std::vector<std::size_t> offsets, labels;
      for (std::size_t i : utts) {
        const Utterance& u = corpus.train[i];
        const std::size_t offset =
            Rng::derive(seed, kCropStream, epoch, i)
                .below(u.frames() - cfg.short_frames + 1);
        crops.push_back(crop_segment(u, cfg.short_frames, offset));
        offsets.push_back(offset);
        labels.push_back(u.speaker);
      }
      StepResult r = step(utts, offsets, crops, labels);
      if (!std::isfinite(r.loss)) {
        throw std::runtime_error("training loss is not finite in epoch " +
                                 std::to_string(epoch + 1));
      }
      sgd_update(model, r.gradients, lr, epoch);
      loss += r.loss;
      kd += r.kd;
      ++batches;
    }
    if (log) {
      log->loss.push_back(loss / static_cast<double>(batches));
      log->kd.push_back(kd / static_cast<double>(batches));
    }
  }
}

}  // namespace

Corpus build_corpus(const ExperimentConfig& cfg) {
  cfg.validate();
  Corpus c;
  c.bank = generate_speakers(cfg.speakers + cfg.eval_speakers, cfg.feature_dim,
                             cfg.data_seed, cfg.synth);
  const std::size_t train_per = cfg.utterances_per_speaker -
                                cfg.heldout_per_speaker;
  for (Utterance& u : synth_corpus(c.bank, 0, cfg.speakers,
                                   cfg.utterances_per_speaker, cfg.frames,
                                   cfg.data_seed)) {
    const std::size_t index = std::stoul(u.id.substr(u.id.size() - 3));
    (index < train_per ? c.train : c.heldout).push_back(std::move(u));
  }
  if (cfg.eval_speakers > 0) {
    c.eval = synth_corpus(c.bank, cfg.speakers, cfg.eval_speakers,
                          cfg.eval_utterances_per_speaker, cfg.frames,
                          Rng::derive(cfg.data_seed, kEvalCorpusStream).next());
  } else {
    c.eval = c.heldout;
  }
  c.trials = make_trials(c.eval, cfg.target_trials, cfg.nontarget_trials,
                         Rng::derive(cfg.data_seed, kTrialStream).next());
  return c;
}

Model train_teacher(const ExperimentConfig& cfg, const Corpus& corpus,
                    std::uint64_t seed, TrainLog* log) {
  Model model = build_model(cfg.teacher_spec(seed));
  const Step step = [&](std::span<const std::size_t>,
                        std::span<const std::size_t>,
                        std::span<const Tensor> crops,
                        std::span<const std::size_t> labels) {
    LossGradients ce = cross_entropy_gradients(model, crops, labels, cfg.aam);
    return StepResult{ce.value, 0.0, std::move(ce.gradients)};
  };
  run_epochs(cfg, corpus, seed, cfg.teacher_epochs, cfg.teacher_lr, model,
             step, log);
  return model;
}

StudentRecipe default_recipe(const ExperimentConfig& cfg) {
  return {cfg.method, cfg.resolved_eta(), cfg.long_frames};
}

Model train_student(const ExperimentConfig& cfg, const Corpus& corpus,
                    const Model& teacher, const StudentRecipe& recipe,
                    std::uint64_t seed, TrainLog* log) {
  Model model = build_model(cfg.student_spec(seed));
  if (recipe.eta < 0.0) throw std::invalid_argument("eta must be >= 0");
  Step step;
  // Long segments (teacher frame activations for the short-crop methods) and
  // teacher ladders outlive the step closure.
  std::vector<Tensor> longs;
  std::vector<TeacherLadder> ladders;
  DistillConfig dcfg = cfg.distill_config();
  dcfg.method = recipe.method;
  dcfg.eta = recipe.eta;
  dcfg.long_frames = recipe.long_frames;

  switch (recipe.method) {
    case DistillMethod::kBaseline:
      step = [&](std::span<const std::size_t>, std::span<const std::size_t>,
                 std::span<const Tensor> crops,
                 std::span<const std::size_t> labels) {
        LossGradients ce =
            cross_entropy_gradients(model, crops, labels, cfg.aam);
        return StepResult{ce.value, 0.0, std::move(ce.gradients)};
      };
      break;
    case DistillMethod::kIml: {
      if (recipe.long_frames < cfg.short_frames) {
        throw std::invalid_argument("long-frames shorter than short-frames");
      }
      for (std::size_t i = 0; i < corpus.train.size(); ++i) {
        const Utterance& u = corpus.train[i];
        if (recipe.long_frames > u.frames()) {
          throw std::invalid_argument("long-frames exceeds utterance length");
        }
        const std::size_t offset =
            Rng::derive(seed, kLongStream, i)
                .below(u.frames() - recipe.long_frames + 1);
        longs.push_back(crop_segment(u, recipe.long_frames, offset));
        ladders.push_back(recipe.eta > 0.0
                              ? teacher_ladder(teacher, longs.back(), dcfg,
                                               cfg.aam)
                              : TeacherLadder{});
      }
      step = [&](std::span<const std::size_t> utts,
                 std::span<const std::size_t>, std::span<const Tensor> crops,
                 std::span<const std::size_t> labels) {
        std::vector<Tensor> batch_longs;
        std::vector<TeacherLadder> batch_ladders;
        for (std::size_t i : utts) {
          batch_longs.push_back(longs[i]);
          batch_ladders.push_back(ladders[i]);
        }
        ImlResult r = iml_loss(batch_ladders, model, crops, labels,
                               batch_longs, dcfg, cfg.aam);
        return StepResult{r.total, r.kd, std::move(r.gradients)};
      };
      break;
    }
    default:
      // The teacher is frozen and its frame layers are unpadded, so each
      // crop's teacher activations are a row slice of the whole utterance's.
      if (recipe.eta > 0.0) {
        for (const Utterance& u : corpus.train) {
          Graph g;
          longs.push_back(
              frame_activations(g, teacher, u.features.detached()));
        }
      }
      step = [&](std::span<const std::size_t> utts,
                 std::span<const std::size_t> offsets,
                 std::span<const Tensor> crops,
                 std::span<const std::size_t> labels) {
        LossGradients ce =
            cross_entropy_gradients(model, crops, labels, cfg.aam);
        StepResult r{ce.value, 0.0, std::move(ce.gradients)};
        if (recipe.eta > 0.0) {
          const std::size_t rows =
              cfg.short_frames - teacher.spec().min_frames() + 1;
          std::vector<Inference> outs;
          for (std::size_t j = 0; j < utts.size(); ++j) {
            const Tensor frames = crop_rows(longs[utts[j]], offsets[j], rows);
            outs.push_back(infer_frames(teacher, frames, cfg.aam,
                                        cfg.temperature));
          }
          const LossGradients kd =
              distillation_gradients(recipe.method, outs, model, crops,
                                     recipe.eta, cfg.aam, cfg.temperature);
          r.kd = kd.value;
          r.loss += recipe.eta * kd.value;
          add_into(r.gradients, kd.gradients);
        }
        return r;
      };
  }
  run_epochs(cfg, corpus, seed, cfg.student_epochs, cfg.student_lr, model,
             step, log);
  return model;
}

Evaluation evaluate(const Model& model, const Corpus& corpus,
                    const ExperimentConfig& cfg) {
  Evaluation e;
  std::size_t correct = 0;
  for (const Utterance& u : corpus.heldout) {
    const Tensor p = infer(model, u.features, cfg.aam).probs;
    auto v = p.values();
    const auto best =
        static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
    correct += best == u.speaker;
  }
  e.accuracy = corpus.heldout.empty()
                   ? 0.0
                   : static_cast<double>(correct) /
                         static_cast<double>(corpus.heldout.size());
  std::vector<std::vector<double>> emb;
  emb.reserve(corpus.eval.size());
  for (const Utterance& u : corpus.eval) {
    emb.push_back(embed(model, u.features).to_vector());
  }
  ScoreSet scores;
  for (const Trial& t : corpus.trials) {
    scores.add(cosine_score(emb[t.a], emb[t.b]), t.target);
  }
  e.eer = compute_eer(scores).eer;
  e.min_dcf = compute_min_dcf(scores, cfg.dcf);
  return e;
}

std::vector<double> attribution_curve(const Model& model, const Utterance& u,
                                      const ExperimentConfig& cfg) {
  const ScalarFunction f =
      target_output(model, u.speaker, cfg.aam, cfg.attribution_output);
  const Saliency s = integrated_gradients(
      f, u.features, make_baseline(u.features, cfg.baseline),
      cfg.attribution_steps, u.speaker);
  return time_weight_curve(s);
}

}  // namespace imlkd
