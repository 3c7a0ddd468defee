// Copyright 2026 The imlkd Authors
// SPDX-License-Identifier: Apache-2.0

#include "imlkd/model.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <utility>

#include "imlkd/random.hpp"

namespace imlkd {

namespace {

constexpr double kVarianceFloor = 1e-10;

Tensor glorot(Rng& rng, std::size_t fan_in, std::size_t fan_out, Shape shape) {
  const double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::vector<double> v(shape_size(shape));
  for (double& x : v) x = rng.uniform(-a, a);
  return Tensor::create(std::move(shape), std::move(v));
}

}  // namespace

void ModelSpec::validate() const {
  if (input_dim == 0) throw std::invalid_argument("model spec: input_dim is 0");
  if (frame_widths.empty()) {
    throw std::invalid_argument("model spec: at least one frame layer needed");
  }
  if (contexts.size() != frame_widths.size()) {
    throw std::invalid_argument(
        "model spec: one context size per frame layer needed");
  }
  for (std::size_t w : frame_widths) {
    if (w == 0) throw std::invalid_argument("model spec: zero frame width");
  }
  for (std::size_t c : contexts) {
    if (c == 0 || c % 2 == 0) {
      throw std::invalid_argument("model spec: context sizes must be odd");
    }
  }
  if (embedding_dim < 2) {
    throw std::invalid_argument("model spec: embedding_dim must be >= 2");
  }
  if (num_classes < 2) {
    throw std::invalid_argument("model spec: num_classes must be >= 2");
  }
}

std::size_t ModelSpec::min_frames() const {
  std::size_t n = 1;
  for (std::size_t c : contexts) n += c - 1;
  return n;
}

void AamParams::validate() const {
  if (!(scale > 0.0)) throw std::invalid_argument("aam: scale must be > 0");
  if (!(margin >= 0.0 && margin < std::numbers::pi / 2)) {
    throw std::invalid_argument("aam: margin must lie in [0, pi/2)");
  }
}

const Tensor& Model::parameter(std::string_view name) const {
  for (const auto& p : params_) {
    if (p.name == name) return p.value;
  }
  throw std::out_of_range("model: no parameter '" + std::string(name) + "'");
}

void Model::set_parameter(std::size_t index, Tensor value) {
  Tensor& slot = params_.at(index).value;
  if (slot.shape() != value.shape()) {
    throw std::invalid_argument("model: parameter '" + params_[index].name +
                                "' shape change " +
                                shape_string(slot.shape()) + " -> " +
                                shape_string(value.shape()));
  }
  slot = value.detached();
}

std::size_t Model::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.value.size();
  return n;
}

Model Model::bind(Graph& g) const {
  Model bound = *this;
  for (auto& p : bound.params_) p.value = g.variable(p.value);
  return bound;
}

Model build_model(const ModelSpec& spec) {
  spec.validate();
  Model m;
  m.spec_ = spec;
  Rng rng(spec.seed);
  std::size_t in = spec.input_dim;
  for (std::size_t i = 0; i < spec.frame_widths.size(); ++i) {
    const std::size_t fan_in = in * spec.contexts[i];
    const std::size_t out = spec.frame_widths[i];
    const std::string prefix = "frame" + std::to_string(i);
    m.params_.push_back(
        {prefix + ".weight", glorot(rng, fan_in, out, {fan_in, out})});
    m.params_.push_back({prefix + ".bias", Tensor::zeros({out})});
    in = out;
  }
  const std::size_t pooled = 2 * in;
  m.params_.push_back(
      {"embed.weight",
       glorot(rng, pooled, spec.embedding_dim, {pooled, spec.embedding_dim})});
  m.params_.push_back({"embed.bias", Tensor::zeros({spec.embedding_dim})});
  m.params_.push_back(
      {"classifier.weight",
       glorot(rng, spec.embedding_dim, spec.num_classes,
              {spec.num_classes, spec.embedding_dim})});
  return m;
}

void save_model(std::ostream& out, const Model& model) {
  out << model.parameters().size() << '\n';
  for (const auto& p : model.parameters()) write_tensor(out, p.name, p.value);
}

Model load_model(std::istream& in, const ModelSpec& spec) {
  Model m = build_model(spec);
  std::size_t count = 0;
  if (!(in >> count)) {
    throw std::runtime_error("checkpoint: missing parameter count");
  }
  if (count != m.parameters().size()) {
    throw std::runtime_error("checkpoint: holds " + std::to_string(count) +
                             " parameters, spec expects " +
                             std::to_string(m.parameters().size()));
  }
  for (std::size_t i = 0; i < count; ++i) {
    Tensor t;
    const std::string name = read_tensor(in, t);
    if (name != m.parameters()[i].name) {
      throw std::runtime_error("checkpoint: expected '" +
                               m.parameters()[i].name + "', found '" + name +
                               "'");
    }
    try {
      m.set_parameter(i, t);
    } catch (const std::invalid_argument& e) {
      throw std::runtime_error(std::string("checkpoint: ") + e.what());
    }
  }
  return m;
}

Tensor stats_pooling(Graph& g, const Tensor& frames) {
  if (frames.rank() != 2 || frames.rows() == 0) {
    throw std::invalid_argument("stats_pooling: expects [T,D] with T >= 1");
  }
  const Tensor mean = g.mean(frames, 0);
  const Tensor centered = g.subtract(frames, mean);
  const Tensor var = g.mean(g.square(centered), 0);
  const Tensor std = g.sqrt(g.add_scalar(var, kVarianceFloor));
  return g.concat({mean, std});
}

Tensor frame_activations(Graph& g, const Model& model,
                         const Tensor& features) {
  const ModelSpec& spec = model.spec();
  if (features.rank() != 2 || features.cols() != spec.input_dim) {
    throw std::invalid_argument("forward_embed: features " +
                                shape_string(features.shape()) +
                                " do not have width " +
                                std::to_string(spec.input_dim));
  }
  if (features.rows() < spec.min_frames()) {
    throw std::invalid_argument(
        "forward_embed: " + std::to_string(features.rows()) +
        " frames, model needs at least " + std::to_string(spec.min_frames()));
  }
  Tensor h = features;
  for (std::size_t layer = 0; layer < spec.frame_widths.size(); ++layer) {
    const std::size_t ctx = spec.contexts[layer];
    Tensor window = h;
    if (ctx > 1) {
      const std::size_t out_rows = h.rows() - ctx + 1;
      std::vector<Tensor> taps;
      taps.reserve(ctx);
      for (std::size_t j = 0; j < ctx; ++j) {
        taps.push_back(g.slice_rows(h, j, j + out_rows));
      }
      window = g.concat(taps);
    }
    h = g.relu(g.add(g.matmul(window, model.parameter(2 * layer)),
                     model.parameter(2 * layer + 1)));
  }
  return h;
}

Tensor embed_frames(Graph& g, const Model& model, const Tensor& frames) {
  const Tensor pooled = stats_pooling(g, frames);
  return g.add(g.matmul(pooled, model.parameter("embed.weight")),
               model.parameter("embed.bias"));
}

Tensor forward_embed(Graph& g, const Model& model, const Tensor& features) {
  return embed_frames(g, model, frame_activations(g, model, features));
}

Tensor aam_logits(Graph& g, const Tensor& embedding, const Model& model,
                  const AamParams& params, std::optional<std::size_t> target) {
  params.validate();
  const std::size_t classes = model.spec().num_classes;
  if (target && *target >= classes) {
    throw std::invalid_argument("aam_logits: target " +
                                std::to_string(*target) + " outside [0," +
                                std::to_string(classes) + ")");
  }
  double norm2 = 0.0;
  for (double v : embedding.values()) norm2 += v * v;
  if (norm2 == 0.0) {
    throw std::invalid_argument("aam_logits: zero-norm embedding");
  }
  const Tensor unit =
      g.divide(embedding, g.sqrt(g.sum(g.square(embedding))));
  const Tensor& w = model.parameter("classifier.weight");
  // Columns of w^T are classifier rows; dividing by the row norms broadcasts
  // along the trailing axis.
  const Tensor w_unit_t =
      g.divide(g.transpose(w), g.sqrt(g.sum(g.square(w), 1)));
  Tensor cosines = g.matmul(unit, w_unit_t);
  if (target) cosines = g.angular_margin(cosines, *target, params.margin);
  return g.scale(cosines, params.scale);
}

Tensor forward_classify(Graph& g, const Model& model, const Tensor& features,
                        const AamParams& params,
                        std::optional<std::size_t> target) {
  return g.softmax(
      aam_logits(g, forward_embed(g, model, features), model, params, target));
}

Tensor embed(const Model& model, const Tensor& features) {
  Graph g;
  return forward_embed(g, model, features.detached());
}

Tensor classify(const Model& model, const Tensor& features,
                const AamParams& params) {
  Graph g;
  return forward_classify(g, model, features.detached(), params, std::nullopt);
}

namespace {

Inference infer_embedding(Graph& g, const Model& model, Tensor embedding,
                          const AamParams& params, double temperature) {
  Inference out;
  out.embedding = std::move(embedding);
  Tensor logits = aam_logits(g, out.embedding, model, params, std::nullopt);
  if (temperature != 1.0) logits = g.scale(logits, 1.0 / temperature);
  out.probs = g.softmax(logits);
  return out;
}

}  // namespace

Inference infer(const Model& model, const Tensor& features,
                const AamParams& params, double temperature) {
  Graph g;
  return infer_embedding(g, model,
                         forward_embed(g, model, features.detached()), params,
                         temperature);
}

Inference infer_frames(const Model& model, const Tensor& frames,
                       const AamParams& params, double temperature) {
  Graph g;
  return infer_embedding(g, model, embed_frames(g, model, frames.detached()),
                         params, temperature);
}

Tensor stack_rows(Graph& g, const std::vector<Tensor>& rows) {
  if (rows.empty()) throw std::invalid_argument("stack_rows: no rows");
  std::vector<Tensor> shaped;
  shaped.reserve(rows.size());
  for (const Tensor& r : rows) {
    if (r.rank() != 1) throw std::invalid_argument("stack_rows: rank-1 rows");
    shaped.push_back(g.reshape(r, {1, r.size()}));
  }
  return g.concat(shaped, 0);
}

}  // namespace imlkd
