// Copyright 2026 The imlkd Authors
// SPDX-License-Identifier: Apache-2.0

#include "imlkd/losses.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace imlkd {

namespace {

constexpr DistillMethod kMethods[] = {
    DistillMethod::kBaseline, DistillMethod::kVanillaKd,
    DistillMethod::kEmbL2,    DistillMethod::kEmbCos,
    DistillMethod::kMultiLevel, DistillMethod::kIml,
};

void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
  if (a.shape() != b.shape()) {
    throw std::invalid_argument(std::string(what) + ": shape mismatch " +
                                shape_string(a.shape()) + " vs " +
                                shape_string(b.shape()));
  }
}

void require_pair(const BatchOutputs& t, const BatchOutputs& s,
                  const char* what, bool embeddings) {
  require_same_shape(t.probs, s.probs, what);
  if (t.probs.rank() != 2) {
    throw std::invalid_argument(std::string(what) + ": probs must be [B,C]");
  }
  if (embeddings) {
    require_same_shape(t.embeddings, s.embeddings, what);
    if (t.embeddings.rank() != 2 || t.embeddings.rows() != t.probs.rows()) {
      throw std::invalid_argument(std::string(what) +
                                  ": embeddings must be [B,E]");
    }
  }
}

Tensor one_hot_rows(std::size_t classes, std::span<const std::size_t> labels) {
  std::vector<double> v(labels.size() * classes, 0.0);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] >= classes) {
      throw std::invalid_argument("label " + std::to_string(labels[i]) +
                                  " out of range for " +
                                  std::to_string(classes) + " classes");
    }
    v[i * classes + labels[i]] = 1.0;
  }
  return Tensor::create({labels.size(), classes}, std::move(v));
}

// Axis that reduces one instance: everything for rank 1, columns for [B,*].
int instance_axis(const Tensor& t) { return t.rank() == 1 ? -1 : 1; }

// Sum over rows of the Euclidean row norms of m.
Tensor row_norm_sum(Graph& g, const Tensor& m) {
  return g.sum(g.sqrt(g.sum(g.square(m), 1)));
}

// Rows of e [B,E] scaled to unit length.
Tensor normalize_rows(Graph& g, const Tensor& e) {
  const Tensor norms = g.sqrt(g.sum(g.square(e), 1));
  for (double n : norms.values()) {
    if (n == 0.0) {
      throw std::invalid_argument("batch_loss: zero-norm embedding row");
    }
  }
  // [B] broadcasts along the trailing axis of e^T [E,B].
  return g.transpose(g.divide(g.transpose(e), norms));
}

// Cosine Gram of the rows.
Tensor cosine_gram(Graph& g, const Tensor& e) {
  const Tensor n = normalize_rows(g, e);
  return g.matmul(n, g.transpose(n));
}

// Probabilities and embedding of one input, no margin.
std::pair<Tensor, Tensor> inference_outputs(Graph& g, const Model& model,
                                            const Tensor& x,
                                            const AamParams& aam,
                                            double temperature) {
  const Tensor e = forward_embed(g, model, x);
  Tensor logits = aam_logits(g, e, model, aam, std::nullopt);
  if (temperature != 1.0) logits = g.scale(logits, 1.0 / temperature);
  return {g.softmax(logits), e};
}

void accumulate(std::vector<std::vector<double>>& total,
                const GradientMap& grads, const Model& bound) {
  for (std::size_t p = 0; p < total.size(); ++p) {
    const Tensor gp = grads.at(bound.parameter(p));
    auto v = gp.values();
    for (std::size_t i = 0; i < v.size(); ++i) total[p][i] += v[i];
  }
}

}  // namespace

std::string_view method_name(DistillMethod method) {
  switch (method) {
    case DistillMethod::kBaseline: return "baseline";
    case DistillMethod::kVanillaKd: return "vanilla-kd";
    case DistillMethod::kEmbL2: return "emb-l2";
    case DistillMethod::kEmbCos: return "emb-cos";
    case DistillMethod::kMultiLevel: return "multi-level";
    case DistillMethod::kIml: return "iml";
  }
  return "unknown";
}

DistillMethod parse_method(std::string_view name) {
  for (DistillMethod m : kMethods) {
    if (method_name(m) == name) return m;
  }
  throw std::invalid_argument("unknown method '" + std::string(name) +
                              "' (expected baseline, vanilla-kd, emb-l2, "
                              "emb-cos, multi-level or iml)");
}

double default_eta(DistillMethod method) {
  switch (method) {
    case DistillMethod::kEmbL2: return 1.0;
    case DistillMethod::kEmbCos: return 20.0;
    default: return 9.0;
  }
}

void DistillConfig::validate() const {
  if (!(eta >= 0.0) || !std::isfinite(eta)) {
    throw std::invalid_argument("eta must be a finite value >= 0");
  }
  if (ig_steps < 1) throw std::invalid_argument("ig-steps must be >= 1");
  if (long_frames < 1) throw std::invalid_argument("long-frames must be >= 1");
  if (!(temperature > 0.0) || !std::isfinite(temperature)) {
    throw std::invalid_argument("temperature must be > 0");
  }
}

void BatchOutputs::validate() const {
  if (probs.rank() != 2 || probs.rows() < 1) {
    throw std::invalid_argument("batch outputs: probs must be [B,C] with B >= 1");
  }
  if (embeddings.rank() != 2 || embeddings.rows() != probs.rows()) {
    throw std::invalid_argument("batch outputs: embeddings must be [B,E]");
  }
  if (!labels.empty() && labels.size() != probs.rows()) {
    throw std::invalid_argument("batch outputs: expected " +
                                std::to_string(probs.rows()) + " labels");
  }
  const std::size_t c = probs.cols();
  for (std::size_t label : labels) {
    if (label >= c) throw std::invalid_argument("batch outputs: bad label");
  }
  for (std::size_t b = 0; b < probs.rows(); ++b) {
    double total = 0.0;
    for (std::size_t j = 0; j < c; ++j) total += probs.at(b, j);
    if (std::abs(total - 1.0) > 1e-9) {
      throw std::invalid_argument("batch outputs: probability row " +
                                  std::to_string(b) + " sums to " +
                                  std::to_string(total));
    }
  }
}

Tensor cross_entropy(Graph& g, const Tensor& probs, std::size_t label) {
  if (probs.rank() != 1) {
    throw std::invalid_argument("cross_entropy: probs must be rank 1, got " +
                                shape_string(probs.shape()));
  }
  const std::size_t labels[] = {label};
  const Tensor mask = g.reshape(one_hot_rows(probs.size(), labels),
                                {probs.size()});
  const Tensor p = g.clamp_min(g.sum(g.multiply(probs, mask)),
                               kProbabilityFloor);
  return g.scale(g.log(p), -1.0);
}

Tensor mean_cross_entropy(Graph& g, const Tensor& probs,
                          std::span<const std::size_t> labels) {
  if (probs.rank() != 2 || probs.rows() != labels.size()) {
    throw std::invalid_argument("mean_cross_entropy: probs " +
                                shape_string(probs.shape()) + " vs " +
                                std::to_string(labels.size()) + " labels");
  }
  const Tensor mask = one_hot_rows(probs.cols(), labels);
  const Tensor p =
      g.clamp_min(g.sum(g.multiply(probs, mask), 1), kProbabilityFloor);
  return g.scale(g.mean(g.log(p)), -1.0);
}

Tensor kl_div(Graph& g, const Tensor& y_t, const Tensor& y_s) {
  require_same_shape(y_t, y_s, "kl_div");
  // y_t log y_t vanishes where y_t = 0 whatever the floor.
  const Tensor log_t = g.log(g.clamp_min(y_t, kProbabilityFloor));
  const Tensor log_s = g.log(g.clamp_min(y_s, kProbabilityFloor));
  return g.sum(g.multiply(y_t, g.subtract(log_t, log_s)), instance_axis(y_t));
}

Tensor embedding_loss(Graph& g, const Tensor& e_t, const Tensor& e_s,
                      EmbeddingMetric metric) {
  require_same_shape(e_t, e_s, "embedding_loss");
  const int axis = instance_axis(e_t);
  if (metric == EmbeddingMetric::kL2) {
    return g.mean(g.square(g.subtract(e_t, e_s)), axis);
  }
  const Tensor nt = g.sum(g.square(e_t), axis);
  const Tensor ns = g.sum(g.square(e_s), axis);
  for (const Tensor* n : {&nt, &ns}) {
    for (double v : n->values()) {
      if (v == 0.0) {
        throw std::invalid_argument("embedding_loss: zero vector under cos");
      }
    }
  }
  const Tensor cosine = g.divide(g.sum(g.multiply(e_t, e_s), axis),
                                 g.sqrt(g.multiply(nt, ns)));
  return g.add_scalar(g.scale(cosine, -1.0), 1.0);
}

Tensor vanilla_kd_loss(Graph& g, const BatchOutputs& student,
                       const BatchOutputs& teacher, double eta) {
  require_pair(teacher, student, "vanilla_kd_loss", false);
  const Tensor ce = mean_cross_entropy(g, student.probs, student.labels);
  if (eta == 0.0) return ce;
  return g.add(ce, g.scale(g.mean(kl_div(g, teacher.probs, student.probs)),
                           eta));
}

Tensor embedding_kd_loss(Graph& g, const BatchOutputs& student,
                         const BatchOutputs& teacher, double eta,
                         EmbeddingMetric metric) {
  require_pair(teacher, student, "embedding_kd_loss", true);
  const Tensor ce = mean_cross_entropy(g, student.probs, student.labels);
  if (eta == 0.0) return ce;
  const Tensor d =
      g.mean(embedding_loss(g, teacher.embeddings, student.embeddings, metric));
  return g.add(ce, g.scale(d, eta));
}

Tensor instance_loss(Graph& g, const BatchOutputs& teacher,
                     const BatchOutputs& student) {
  require_pair(teacher, student, "instance_loss", true);
  return g.add(g.mean(kl_div(g, teacher.probs, student.probs)),
               g.mean(embedding_loss(g, teacher.embeddings,
                                     student.embeddings, EmbeddingMetric::kL2)));
}

Tensor class_loss(Graph& g, const BatchOutputs& teacher,
                  const BatchOutputs& student) {
  require_pair(teacher, student, "class_loss", false);
  const Tensor yt = g.matmul(g.transpose(teacher.probs), teacher.probs);
  const Tensor ys = g.matmul(g.transpose(student.probs), student.probs);
  return g.scale(row_norm_sum(g, g.subtract(yt, ys)),
                 1.0 / static_cast<double>(teacher.probs.cols()));
}

Tensor batch_loss(Graph& g, const BatchOutputs& teacher,
                  const BatchOutputs& student) {
  require_pair(teacher, student, "batch_loss", true);
  const Tensor pt = g.matmul(teacher.probs, g.transpose(teacher.probs));
  const Tensor ps = g.matmul(student.probs, g.transpose(student.probs));
  const Tensor et = cosine_gram(g, teacher.embeddings);
  const Tensor es = cosine_gram(g, student.embeddings);
  const Tensor total = g.add(row_norm_sum(g, g.subtract(pt, ps)),
                             row_norm_sum(g, g.subtract(et, es)));
  return g.scale(total, 1.0 / static_cast<double>(teacher.probs.rows()));
}

Tensor ml_loss(Graph& g, const BatchOutputs& teacher,
               const BatchOutputs& student) {
  return g.add(g.add(batch_loss(g, teacher, student),
                     class_loss(g, teacher, student)),
               instance_loss(g, teacher, student));
}

TeacherLadder teacher_ladder(const Model& teacher, const Tensor& long_segment,
                             const DistillConfig& cfg, const AamParams& aam) {
  cfg.validate();
  if (long_segment.rows() != cfg.long_frames) {
    throw std::invalid_argument(
        "teacher_ladder: long segment has " +
        std::to_string(long_segment.rows()) + " frames, expected " +
        std::to_string(cfg.long_frames));
  }
  const IntegratedInputs path =
      integrated_inputs(long_segment, make_baseline(long_segment, cfg.baseline),
                        cfg.ig_steps);
  TeacherLadder ladder;
  Graph scratch;  // teacher is constant, nothing gets recorded
  for (const Tensor& x : path.steps) {
    auto [p, e] = inference_outputs(scratch, teacher, x, aam, cfg.temperature);
    ladder.probs.push_back(p.detached());
    ladder.embeddings.push_back(e.detached());
  }
  return ladder;
}

LossGradients cross_entropy_gradients(const Model& student,
                                      std::span<const Tensor> batch,
                                      std::span<const std::size_t> labels,
                                      const AamParams& aam) {
  if (batch.empty() || labels.size() != batch.size()) {
    throw std::invalid_argument("cross_entropy_gradients: batch of " +
                                std::to_string(batch.size()) + " with " +
                                std::to_string(labels.size()) + " labels");
  }
  Graph g;
  const Model s = student.bind(g);
  std::vector<Tensor> rows;
  rows.reserve(batch.size());
  for (std::size_t b = 0; b < batch.size(); ++b) {
    rows.push_back(forward_classify(g, s, batch[b], aam, labels[b]));
  }
  const Tensor ce = mean_cross_entropy(g, stack_rows(g, rows), labels);
  const GradientMap grads = backward(ce, g);
  LossGradients out;
  out.value = ce.item();
  for (std::size_t p = 0; p < s.parameters().size(); ++p) {
    out.gradients.push_back(grads.at(s.parameter(p)).detached());
  }
  return out;
}

LossGradients distillation_gradients(DistillMethod method,
                                     std::span<const Inference> teacher,
                                     const Model& student,
                                     std::span<const Tensor> batch,
                                     double eta, const AamParams& aam,
                                     double temperature) {
  if (batch.empty() || teacher.size() != batch.size()) {
    throw std::invalid_argument(
        "distillation_gradients: teacher outputs and batch differ in size");
  }
  Graph g;
  const Model s = student.bind(g);
  std::vector<Tensor> sp, se, tp, te;
  for (std::size_t b = 0; b < batch.size(); ++b) {
    auto [p, e] = inference_outputs(g, s, batch[b], aam, temperature);
    sp.push_back(p);
    se.push_back(e);
    tp.push_back(teacher[b].probs);
    te.push_back(teacher[b].embedding);
  }
  const BatchOutputs t{stack_rows(g, tp), stack_rows(g, te), {}};
  const BatchOutputs st{stack_rows(g, sp), stack_rows(g, se), {}};
  Tensor term;
  switch (method) {
    case DistillMethod::kVanillaKd:
      term = g.mean(kl_div(g, t.probs, st.probs));
      break;
    case DistillMethod::kEmbL2:
      term = g.mean(embedding_loss(g, t.embeddings, st.embeddings,
                                   EmbeddingMetric::kL2));
      break;
    case DistillMethod::kEmbCos:
      term = g.mean(embedding_loss(g, t.embeddings, st.embeddings,
                                   EmbeddingMetric::kCos));
      break;
    case DistillMethod::kMultiLevel:
      term = ml_loss(g, t, st);
      break;
    default:
      throw std::invalid_argument("distillation_gradients: method " +
                                  std::string(method_name(method)) +
                                  " has no short-input distillation term");
  }
  const GradientMap grads = backward(g.scale(term, eta), g);
  LossGradients out;
  out.value = term.item();
  for (std::size_t p = 0; p < s.parameters().size(); ++p) {
    out.gradients.push_back(grads.at(s.parameter(p)).detached());
  }
  return out;
}

ImlResult iml_loss(std::span<const TeacherLadder> teacher,
                   const Model& student, std::span<const Tensor> short_batch,
                   std::span<const std::size_t> labels,
                   std::span<const Tensor> long_batch, const DistillConfig& cfg,
                   const AamParams& aam) {
  cfg.validate();
  const std::size_t batch = short_batch.size();
  if (batch == 0 || labels.size() != batch || long_batch.size() != batch ||
      teacher.size() != batch) {
    throw std::invalid_argument("iml_loss: short batch, labels, long batch "
                                "and teacher ladders must have equal size");
  }
  for (std::size_t b = 0; b < batch; ++b) {
    if (long_batch[b].rows() != cfg.long_frames) {
      throw std::invalid_argument(
          "iml_loss: long input " + std::to_string(b) + " has " +
          std::to_string(long_batch[b].rows()) + " frames, expected " +
          std::to_string(cfg.long_frames));
    }
    if (cfg.eta > 0.0 && (teacher[b].probs.size() != cfg.ig_steps ||
                          teacher[b].embeddings.size() != cfg.ig_steps)) {
      throw std::invalid_argument("iml_loss: teacher ladder has wrong length");
    }
  }

  ImlResult result;
  LossGradients ce =
      cross_entropy_gradients(student, short_batch, labels, aam);
  result.cross_entropy = ce.value;
  std::vector<std::vector<double>> grads;
  for (const Tensor& t : ce.gradients) grads.push_back(t.to_vector());

  // With eta = 0 the objective is the cross-entropy step exactly.
  if (cfg.eta > 0.0) {
    std::vector<IntegratedInputs> paths;
    paths.reserve(batch);
    for (const Tensor& x : long_batch) {
      paths.push_back(
          integrated_inputs(x, make_baseline(x, cfg.baseline), cfg.ig_steps));
    }
    const double weight = cfg.eta / static_cast<double>(cfg.ig_steps);
    double kd_total = 0.0;
    for (std::size_t k = 0; k < cfg.ig_steps; ++k) {
      Graph g;
      const Model s = student.bind(g);
      std::vector<Tensor> sp, se, tp, te;
      for (std::size_t b = 0; b < batch; ++b) {
        auto [p, e] =
            inference_outputs(g, s, paths[b].steps[k], aam, cfg.temperature);
        sp.push_back(p);
        se.push_back(e);
        tp.push_back(teacher[b].probs[k]);
        te.push_back(teacher[b].embeddings[k]);
      }
      const BatchOutputs t{stack_rows(g, tp), stack_rows(g, te), {}};
      const BatchOutputs st{stack_rows(g, sp), stack_rows(g, se), {}};
      const Tensor ml = ml_loss(g, t, st);
      kd_total += ml.item();
      accumulate(grads, backward(g.scale(ml, weight), g), s);
    }
    result.kd = kd_total / static_cast<double>(cfg.ig_steps);
  }

  result.total = result.cross_entropy + cfg.eta * result.kd;
  for (std::size_t p = 0; p < grads.size(); ++p) {
    result.gradients.push_back(
        Tensor::create(student.parameter(p).shape(), std::move(grads[p])));
  }
  return result;
}

ImlResult iml_loss(const Model& teacher, const Model& student,
                   std::span<const Tensor> short_batch,
                   std::span<const std::size_t> labels,
                   std::span<const Tensor> long_batch, const DistillConfig& cfg,
                   const AamParams& aam) {
  std::vector<TeacherLadder> ladders;
  ladders.reserve(long_batch.size());
  for (const Tensor& x : long_batch) {
    ladders.push_back(teacher_ladder(teacher, x, cfg, aam));
  }
  return iml_loss(ladders, student, short_batch, labels, long_batch, cfg, aam);
}

}  // namespace imlkd
