// Copyright 2026 The imlkd Authors
// SPDX-License-Identifier: Apache-2.0
//
// Training objectives: cross-entropy, KL soft-target distillation, embedding
// distillation, the instance/class/batch alignment losses and the combined
// objective over integrated inputs.
//
// Every loss takes recorded or constant tensors and returns a recorded (when
// any input is recorded) scalar of shape [1]. KL is taken as
// KL(teacher || student).

#ifndef IMLKD_LOSSES_HPP
#define IMLKD_LOSSES_HPP

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "imlkd/attribution.hpp"
#include "imlkd/graph.hpp"
#include "imlkd/model.hpp"

namespace imlkd {

inline constexpr double kProbabilityFloor = 1e-30;

enum class DistillMethod { kBaseline, kVanillaKd, kEmbL2, kEmbCos, kMultiLevel, kIml };

std::string_view method_name(DistillMethod method);
// Accepts the names printed by method_name.
DistillMethod parse_method(std::string_view name);
// 1 for emb-l2, 20 for emb-cos, 9 otherwise.
double default_eta(DistillMethod method);

struct DistillConfig {
  DistillMethod method = DistillMethod::kIml;
  double eta = 9.0;
  std::size_t ig_steps = 8;
  std::size_t long_frames = 600;
  // Softmax temperature for the distillation terms; 1 leaves them as is.
  double temperature = 1.0;
  BaselineKind baseline = BaselineKind::kTimeMean;

  void validate() const;
};

// Per-instance outputs of a batch: probs [B,C], embeddings [B,E].
struct BatchOutputs {
  Tensor probs;
  Tensor embeddings;
  std::vector<std::size_t> labels;

  std::size_t batch() const { return probs.rows(); }
  // Checks shapes and that each probability row sums to 1 within 1e-9.
  void validate() const;
};

enum class EmbeddingMetric { kL2, kCos };

// -log(max(probs[label], 1e-30)) for probs [C].
Tensor cross_entropy(Graph& g, const Tensor& probs, std::size_t label);
// Sum over classes of y_t (log y_t - log y_s), with y_s floored at 1e-30 and
// zero-probability teacher entries contributing 0. Rank-1 inputs give a
// scalar; [B,C] inputs give the per-row values [B].
Tensor kl_div(Graph& g, const Tensor& y_t, const Tensor& y_s);
// l2: mean over dims of the squared difference. cos: 1 - cosine similarity.
// Rank-1 inputs give a scalar; [B,E] inputs give per-row values [B].
Tensor embedding_loss(Graph& g, const Tensor& e_t, const Tensor& e_s,
                      EmbeddingMetric metric);

// Mean over the batch of cross-entropy plus eta times KL.
Tensor vanilla_kd_loss(Graph& g, const BatchOutputs& student,
                       const BatchOutputs& teacher, double eta);
// Mean over the batch of cross-entropy plus eta times the embedding distance.
Tensor embedding_kd_loss(Graph& g, const BatchOutputs& student,
                         const BatchOutputs& teacher, double eta,
                         EmbeddingMetric metric);

// Mean over the batch of KL(y_t, y_s) + squared-distance embedding term.
Tensor instance_loss(Graph& g, const BatchOutputs& teacher,
                     const BatchOutputs& student);
// (1/C) * sum over rows of ||(y_t^T y_t - y_s^T y_s)_row||_2.
Tensor class_loss(Graph& g, const BatchOutputs& teacher,
                  const BatchOutputs& student);
// (1/B) * sum over rows of ||(y_t y_t^T - y_s y_s^T)_row||_2 +
// ||(E_t - E_s)_row||_2, E being the cosine Gram of the embeddings.
Tensor batch_loss(Graph& g, const BatchOutputs& teacher,
                  const BatchOutputs& student);
Tensor ml_loss(Graph& g, const BatchOutputs& teacher,
               const BatchOutputs& student);

// Mean cross-entropy of the rows of probs [B,C] against labels.
Tensor mean_cross_entropy(Graph& g, const Tensor& probs,
                          std::span<const std::size_t> labels);

// Frozen-teacher outputs on the integrated-input ladder of one long segment:
// step k holds probs [C] and embedding [E] for k = 1..m.
struct TeacherLadder {
  std::vector<Tensor> probs;
  std::vector<Tensor> embeddings;
};

TeacherLadder teacher_ladder(const Model& teacher, const Tensor& long_segment,
                             const DistillConfig& cfg, const AamParams& aam);

struct LossGradients {
  double value = 0.0;
  // One gradient per student parameter, in declaration order.
  std::vector<Tensor> gradients;
};

// Mean margin-mode cross-entropy of the student over a batch, with its
// parameter gradients. Every training objective starts from this term.
LossGradients cross_entropy_gradients(const Model& student,
                                      std::span<const Tensor> batch,
                                      std::span<const std::size_t> labels,
                                      const AamParams& aam);

// Distillation term of a short-input method (vanilla-kd: mean KL; emb-l2 /
// emb-cos: mean embedding distance; multi-level: ml_loss) between frozen
// teacher outputs and the student's margin-free outputs on the same batch.
// `value` is the unweighted term; gradients are of eta times it.
LossGradients distillation_gradients(DistillMethod method,
                                     std::span<const Inference> teacher,
                                     const Model& student,
                                     std::span<const Tensor> batch,
                                     double eta, const AamParams& aam,
                                     double temperature = 1.0);

struct ImlResult {
  double total = 0.0;
  double cross_entropy = 0.0;
  // (1/m) * sum over steps of ml_loss.
  double kd = 0.0;
  // One gradient per student parameter, in declaration order.
  std::vector<Tensor> gradients;
};

// Cross-entropy of the student on the short crops (margin applied) plus
// eta times the step-averaged multi-level loss between teacher and student
// on the integrated inputs of the long segments. Only student parameters
// receive gradients.
ImlResult iml_loss(const Model& teacher, const Model& student,
                   std::span<const Tensor> short_batch,
                   std::span<const std::size_t> labels,
                   std::span<const Tensor> long_batch, const DistillConfig& cfg,
                   const AamParams& aam);

// Same objective with precomputed teacher ladders (one per long segment);
// with eta = 0 the ladders are not read and may be empty.
ImlResult iml_loss(std::span<const TeacherLadder> teacher,
                   const Model& student, std::span<const Tensor> short_batch,
                   std::span<const std::size_t> labels,
                   std::span<const Tensor> long_batch, const DistillConfig& cfg,
                   const AamParams& aam);

}  // namespace imlkd

#endif  // IMLKD_LOSSES_HPP
