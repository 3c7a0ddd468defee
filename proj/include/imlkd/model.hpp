// Copyright 2026 The imlkd Authors
// SPDX-License-Identifier: Apache-2.0
//
// Frame-level speaker classifiers: time-delay frame layers (sliding-window
// linear + relu), statistics pooling, a linear embedding layer and an
// additive-angular-margin cosine classifier.

#ifndef IMLKD_MODEL_HPP
#define IMLKD_MODEL_HPP

#include <cstddef>
#include <cstdint>
#include <istream>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include "imlkd/graph.hpp"
#include "imlkd/tensor.hpp"

namespace imlkd {

struct ModelSpec {
  std::size_t input_dim = 16;
  std::vector<std::size_t> frame_widths;
  // Odd window sizes, one per frame layer.
  std::vector<std::size_t> contexts;
  std::size_t embedding_dim = 16;
  std::size_t num_classes = 32;
  std::uint64_t seed = 0;

  // Throws std::invalid_argument naming the offending field.
  void validate() const;
  // Shortest input the stacked windows accept.
  std::size_t min_frames() const;

  friend bool operator==(const ModelSpec&, const ModelSpec&) = default;
};

struct AamParams {
  double scale = 30.0;
  double margin = 0.2;

  void validate() const;
};

struct NamedTensor {
  std::string name;
  Tensor value;
};

class Model {
 public:
  const ModelSpec& spec() const { return spec_; }
  const std::vector<NamedTensor>& parameters() const { return params_; }
  const Tensor& parameter(std::string_view name) const;
  const Tensor& parameter(std::size_t index) const {
    return params_.at(index).value;
  }
  // Replaces a value; the shape must not change.
  void set_parameter(std::size_t index, Tensor value);
  std::size_t parameter_count() const;

  // Copy whose parameters are leaves of g, for computing gradients.
  Model bind(Graph& g) const;

 private:
  friend Model build_model(const ModelSpec& spec);
  ModelSpec spec_;
  std::vector<NamedTensor> params_;
};

// Glorot-uniform weights, zero biases, from Rng(spec.seed).
Model build_model(const ModelSpec& spec);

// Checkpoint: one line holding the parameter count, then one tensor dump per
// parameter in declaration order.
void save_model(std::ostream& out, const Model& model);
Model load_model(std::istream& in, const ModelSpec& spec);

// [T,D] -> [2D]: per-dimension mean, then population std with the variance
// floored by adding 1e-10.
Tensor stats_pooling(Graph& g, const Tensor& frames);

// features [T,F] -> last frame layer [T - min_frames() + 1, H]. Frame layers
// are unpadded, so the activations of a crop are a row slice of those of the
// whole utterance.
Tensor frame_activations(Graph& g, const Model& model,
                         const Tensor& features);
// Frame activations -> embedding [E] (stats pooling, then the linear layer).
Tensor embed_frames(Graph& g, const Model& model, const Tensor& frames);

// features [T,F] -> embedding [E].
Tensor forward_embed(Graph& g, const Model& model, const Tensor& features);

// Scaled cosines between the normalized embedding and normalized classifier
// rows. With a target, its entry becomes cos(theta + margin).
Tensor aam_logits(Graph& g, const Tensor& embedding, const Model& model,
                  const AamParams& params, std::optional<std::size_t> target);

// softmax(aam_logits(forward_embed(...))).
Tensor forward_classify(Graph& g, const Model& model, const Tensor& features,
                        const AamParams& params,
                        std::optional<std::size_t> target);

// Unrecorded helpers for constant models.
Tensor embed(const Model& model, const Tensor& features);
Tensor classify(const Model& model, const Tensor& features,
                const AamParams& params);
struct Inference {
  Tensor probs;      // margin-free
  Tensor embedding;
};
// Softmax of the margin-free logits divided by the temperature.
Inference infer(const Model& model, const Tensor& features,
                const AamParams& params, double temperature = 1.0);
// Same, starting from precomputed frame_activations.
Inference infer_frames(const Model& model, const Tensor& frames,
                       const AamParams& params, double temperature = 1.0);

// Stacks equally shaped rank-1 tensors into [rows.size(), n].
Tensor stack_rows(Graph& g, const std::vector<Tensor>& rows);

}  // namespace imlkd

#endif  // IMLKD_MODEL_HPP
