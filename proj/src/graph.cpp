// Copyright 2026 The imlkd Authors
// SPDX-License-Identifier: Apache-2.0

#include "imlkd/graph.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <numbers>
#include <utility>

namespace imlkd {

namespace {

using RowMatrix =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMatrix>;
using MutMap = Eigen::Map<RowMatrix>;

std::atomic<std::uint64_t> next_graph_id{1};

enum class Broadcast { kSame, kScalar, kRow };

[[noreturn]] void shape_error(Primitive kind, const std::string& what) {
  throw std::invalid_argument(std::string(primitive_name(kind)) + ": " + what);
}

Broadcast binary_broadcast(Primitive kind, const Tensor& a, const Tensor& b) {
  if (a.shape() == b.shape()) return Broadcast::kSame;
  if (b.size() == 1) return Broadcast::kScalar;
  if (a.rank() == 2 && b.rank() == 1 && b.size() == a.cols()) {
    return Broadcast::kRow;
  }
  shape_error(kind, "cannot broadcast " + shape_string(b.shape()) + " onto " +
                        shape_string(a.shape()));
}

inline std::size_t rhs_index(Broadcast mode, std::size_t i, std::size_t cols) {
  switch (mode) {
    case Broadcast::kSame:
      return i;
    case Broadcast::kScalar:
      return 0;
    case Broadcast::kRow:
      return i % cols;
  }
  return i;
}

// Folds a full-size gradient onto the right operand's broadcast shape.
std::vector<double> reduce_to_rhs(Broadcast mode, const std::vector<double>& g,
                                  std::size_t rhs_size, std::size_t cols) {
  if (mode == Broadcast::kSame) return g;
  std::vector<double> out(rhs_size, 0.0);
  for (std::size_t i = 0; i < g.size(); ++i) {
    out[rhs_index(mode, i, cols)] += g[i];
  }
  return out;
}

void require_rank(Primitive kind, const Tensor& t, std::size_t lo,
                  std::size_t hi) {
  if (t.rank() < lo || t.rank() > hi) {
    shape_error(kind, "unsupported rank " + std::to_string(t.rank()) +
                          " for shape " + shape_string(t.shape()));
  }
}

std::size_t normalize_axis(Primitive kind, int axis, std::size_t rank) {
  if (axis == -1) return rank - 1;
  if (axis < 0 || static_cast<std::size_t>(axis) >= rank) {
    shape_error(kind, "axis " + std::to_string(axis) + " out of range");
  }
  return static_cast<std::size_t>(axis);
}

struct ForwardResult {
  Shape shape;
  std::vector<double> values;
};

// Saved-activation policy: which forward values the backward rule reads.
enum SaveMask : unsigned { kSaveNone = 0, kSaveInputs = 1, kSaveOutput = 2 };

unsigned save_policy(Primitive kind) {
  switch (kind) {
    case Primitive::kMatMul:
    case Primitive::kMultiply:
    case Primitive::kDivide:
    case Primitive::kLog:
    case Primitive::kSquare:
    case Primitive::kAngularMargin:
    case Primitive::kClampMin:
      return kSaveInputs;
    case Primitive::kRelu:
    case Primitive::kExp:
    case Primitive::kTanh:
    case Primitive::kSoftmax:
    case Primitive::kLogSoftmax:
    case Primitive::kSqrt:
      return kSaveOutput;
    default:
      return kSaveNone;
  }
}

std::size_t expected_arity(Primitive kind) {
  switch (kind) {
    case Primitive::kMatMul:
    case Primitive::kAdd:
    case Primitive::kSubtract:
    case Primitive::kMultiply:
    case Primitive::kDivide:
      return 2;
    case Primitive::kConcat:
    case Primitive::kLeaf:
      return 0;  // variadic / none
    default:
      return 1;
  }
}

void softmax_rows(std::span<const double> in, std::size_t cols,
                  std::vector<double>& out, bool log_space) {
  out.resize(in.size());
  for (std::size_t r = 0; r * cols < in.size(); ++r) {
    const double* x = in.data() + r * cols;
    double* y = out.data() + r * cols;
    double mx = x[0];
    for (std::size_t j = 1; j < cols; ++j) mx = std::max(mx, x[j]);
    double z = 0.0;
    for (std::size_t j = 0; j < cols; ++j) z += std::exp(x[j] - mx);
    if (log_space) {
      const double lz = std::log(z);
      for (std::size_t j = 0; j < cols; ++j) y[j] = x[j] - mx - lz;
    } else {
      for (std::size_t j = 0; j < cols; ++j) y[j] = std::exp(x[j] - mx) / z;
    }
  }
}

struct MarginValue {
  double value;
  double slope;
};

MarginValue apply_margin(double c, double margin) {
  if (margin == 0.0) return {c, 1.0};
  const double clamped = std::clamp(c, -1.0, 1.0);
  const double theta = std::acos(clamped);
  if (theta + margin >= std::numbers::pi) return {-1.0, 0.0};
  const double sin_theta = std::max(std::sqrt(1.0 - clamped * clamped), 1e-6);
  return {std::cos(theta + margin), std::sin(theta + margin) / sin_theta};
}

ForwardResult evaluate(Primitive kind, std::span<const Tensor> in,
                       const PrimitiveAttrs& attrs) {
  ForwardResult r;
  auto unary = [&](auto fn) {
    require_rank(kind, in[0], 0, 2);
    r.shape = in[0].shape();
    auto v = in[0].values();
    r.values.resize(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) r.values[i] = fn(v[i]);
  };
  auto binary = [&](auto fn) {
    const Broadcast mode = binary_broadcast(kind, in[0], in[1]);
    r.shape = in[0].shape();
    auto a = in[0].values();
    auto b = in[1].values();
    const std::size_t cols = in[0].cols();
    r.values.resize(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
      r.values[i] = fn(a[i], b[rhs_index(mode, i, cols)]);
    }
  };

  switch (kind) {
    case Primitive::kLeaf:
      shape_error(kind, "leaves are created with Graph::variable");
    case Primitive::kMatMul: {
      const Tensor& a = in[0];
      const Tensor& b = in[1];
      require_rank(kind, a, 1, 2);
      require_rank(kind, b, 2, 2);
      const std::size_t n = a.rows();
      const std::size_t k = a.cols();
      if (b.shape()[0] != k) {
        shape_error(kind, "inner dimensions differ: " +
                              shape_string(a.shape()) + " x " +
                              shape_string(b.shape()));
      }
      const std::size_t m = b.shape()[1];
      r.shape = a.rank() == 1 ? Shape{m} : Shape{n, m};
      r.values.assign(n * m, 0.0);
      MutMap(r.values.data(), n, m).noalias() =
          ConstMap(a.values().data(), n, k) * ConstMap(b.values().data(), k, m);
      break;
    }
    case Primitive::kAdd:
      binary([](double x, double y) { return x + y; });
      break;
    case Primitive::kSubtract:
      binary([](double x, double y) { return x - y; });
      break;
    case Primitive::kMultiply:
      binary([](double x, double y) { return x * y; });
      break;
    case Primitive::kDivide:
      binary([](double x, double y) { return x / y; });
      break;
    case Primitive::kScale:
      unary([s = attrs.scalar](double x) { return s * x; });
      break;
    case Primitive::kAddScalar:
      unary([s = attrs.scalar](double x) { return x + s; });
      break;
    case Primitive::kRelu:
      unary([](double x) { return x > 0.0 ? x : 0.0; });
      break;
    case Primitive::kExp:
      unary([](double x) { return std::exp(x); });
      break;
    case Primitive::kLog:
      for (double x : in[0].values()) {
        if (!(x > 0.0)) {
          throw DomainError("log of non-positive value " + std::to_string(x));
        }
      }
      unary([](double x) { return std::log(x); });
      break;
    case Primitive::kTanh:
      unary([](double x) { return std::tanh(x); });
      break;
    case Primitive::kClampMin:
      unary([f = attrs.scalar](double x) { return x < f ? f : x; });
      break;
    case Primitive::kSquare:
      unary([](double x) { return x * x; });
      break;
    case Primitive::kSqrt:
      for (double x : in[0].values()) {
        if (x < 0.0) {
          throw DomainError("sqrt of negative value " + std::to_string(x));
        }
      }
      unary([](double x) { return std::sqrt(x); });
      break;
    case Primitive::kSoftmax:
    case Primitive::kLogSoftmax:
      require_rank(kind, in[0], 1, 2);
      r.shape = in[0].shape();
      softmax_rows(in[0].values(), in[0].cols(), r.values,
                   kind == Primitive::kLogSoftmax);
      break;
    case Primitive::kSum:
    case Primitive::kMean: {
      const Tensor& a = in[0];
      require_rank(kind, a, 1, 2);
      auto v = a.values();
      if (attrs.axis == -1 || a.rank() == 1) {
        if (attrs.axis > 0) shape_error(kind, "axis out of range");
        double s = 0.0;
        for (double x : v) s += x;
        if (kind == Primitive::kMean) s /= static_cast<double>(v.size());
        r.shape = {1};
        r.values = {s};
        break;
      }
      const std::size_t rows = a.rows();
      const std::size_t cols = a.cols();
      if (attrs.axis == 0) {
        r.shape = {cols};
        r.values.assign(cols, 0.0);
        for (std::size_t i = 0; i < rows; ++i) {
          for (std::size_t j = 0; j < cols; ++j) {
            r.values[j] += v[i * cols + j];
          }
        }
        if (kind == Primitive::kMean) {
          for (double& x : r.values) x /= static_cast<double>(rows);
        }
      } else if (attrs.axis == 1) {
        r.shape = {rows};
        r.values.assign(rows, 0.0);
        for (std::size_t i = 0; i < rows; ++i) {
          for (std::size_t j = 0; j < cols; ++j) {
            r.values[i] += v[i * cols + j];
          }
        }
        if (kind == Primitive::kMean) {
          for (double& x : r.values) x /= static_cast<double>(cols);
        }
      } else {
        shape_error(kind, "axis " + std::to_string(attrs.axis) +
                              " out of range");
      }
      break;
    }
    case Primitive::kConcat: {
      if (in.empty()) shape_error(kind, "no inputs");
      const std::size_t rank = in[0].rank();
      require_rank(kind, in[0], 1, 2);
      const std::size_t axis = normalize_axis(kind, attrs.axis, rank);
      for (const Tensor& t : in) {
        if (t.rank() != rank) shape_error(kind, "rank mismatch");
        for (std::size_t d = 0; d < rank; ++d) {
          if (d != axis && t.shape()[d] != in[0].shape()[d]) {
            shape_error(kind, "extent mismatch " + shape_string(t.shape()) +
                                  " vs " + shape_string(in[0].shape()));
          }
        }
      }
      r.shape = in[0].shape();
      r.shape[axis] = 0;
      for (const Tensor& t : in) r.shape[axis] += t.shape()[axis];
      if (axis == 0) {
        for (const Tensor& t : in) {
          auto v = t.values();
          r.values.insert(r.values.end(), v.begin(), v.end());
        }
      } else {
        const std::size_t rows = rank == 1 ? 1 : in[0].rows();
        const std::size_t out_cols = r.shape[axis];
        r.values.resize(rows * out_cols);
        std::size_t offset = 0;
        for (const Tensor& t : in) {
          const std::size_t c = t.cols();
          auto v = t.values();
          for (std::size_t i = 0; i < rows; ++i) {
            std::copy_n(v.data() + i * c, c,
                        r.values.data() + i * out_cols + offset);
          }
          offset += c;
        }
      }
      break;
    }
    case Primitive::kSliceRows: {
      const Tensor& a = in[0];
      require_rank(kind, a, 2, 2);
      if (attrs.begin >= attrs.end || attrs.end > a.rows()) {
        shape_error(kind, "rows [" + std::to_string(attrs.begin) + "," +
                              std::to_string(attrs.end) + ") outside " +
                              shape_string(a.shape()));
      }
      const std::size_t cols = a.cols();
      r.shape = {attrs.end - attrs.begin, cols};
      auto v = a.values();
      r.values.assign(v.begin() + attrs.begin * cols,
                      v.begin() + attrs.end * cols);
      break;
    }
    case Primitive::kTranspose: {
      const Tensor& a = in[0];
      require_rank(kind, a, 2, 2);
      const std::size_t rows = a.rows();
      const std::size_t cols = a.cols();
      r.shape = {cols, rows};
      r.values.resize(a.size());
      auto v = a.values();
      for (std::size_t i = 0; i < rows; ++i) {
        for (std::size_t j = 0; j < cols; ++j) {
          r.values[j * rows + i] = v[i * cols + j];
        }
      }
      break;
    }
    case Primitive::kReshape:
      if (shape_size(attrs.shape) != in[0].size()) {
        shape_error(kind, "cannot view " + shape_string(in[0].shape()) +
                              " as " + shape_string(attrs.shape));
      }
      r.shape = attrs.shape;
      r.values = in[0].to_vector();
      break;
    case Primitive::kAngularMargin: {
      const Tensor& a = in[0];
      require_rank(kind, a, 1, 1);
      if (attrs.index >= a.size()) shape_error(kind, "index out of range");
      if (attrs.scalar < 0.0 || attrs.scalar >= std::numbers::pi / 2) {
        shape_error(kind, "margin outside [0, pi/2)");
      }
      r.shape = a.shape();
      r.values = a.to_vector();
      r.values[attrs.index] = apply_margin(a[attrs.index], attrs.scalar).value;
      break;
    }
  }
  return r;
}

void accumulate(std::optional<std::vector<double>>& slot,
                std::vector<double>&& g) {
  if (!slot) {
    slot = std::move(g);
    return;
  }
  for (std::size_t i = 0; i < g.size(); ++i) (*slot)[i] += g[i];
}

}  // namespace

const char* primitive_name(Primitive kind) {
  switch (kind) {
    case Primitive::kLeaf: return "leaf";
    case Primitive::kMatMul: return "matmul";
    case Primitive::kAdd: return "add";
    case Primitive::kSubtract: return "subtract";
    case Primitive::kMultiply: return "multiply";
    case Primitive::kDivide: return "divide";
    case Primitive::kScale: return "scale";
    case Primitive::kAddScalar: return "add_scalar";
    case Primitive::kRelu: return "relu";
    case Primitive::kExp: return "exp";
    case Primitive::kLog: return "log";
    case Primitive::kTanh: return "tanh";
    case Primitive::kSoftmax: return "softmax";
    case Primitive::kLogSoftmax: return "log_softmax";
    case Primitive::kSum: return "sum";
    case Primitive::kMean: return "mean";
    case Primitive::kSquare: return "square";
    case Primitive::kSqrt: return "sqrt";
    case Primitive::kConcat: return "concat";
    case Primitive::kSliceRows: return "slice_rows";
    case Primitive::kTranspose: return "transpose";
    case Primitive::kReshape: return "reshape";
    case Primitive::kAngularMargin: return "angular_margin";
    case Primitive::kClampMin: return "clamp_min";
  }
  return "unknown";
}

Graph::Graph() : id_(next_graph_id.fetch_add(1)) {}

bool Graph::owns(const Tensor& t) const {
  return t.node_ && t.node_->graph == id_;
}

Tensor Graph::variable(const Tensor& value) {
  if (value.empty()) throw std::invalid_argument("variable: empty tensor");
  Node n;
  n.kind = Primitive::kLeaf;
  n.shape = value.shape();
  nodes_.push_back(std::move(n));
  return Tensor(value.shape(), value.data_, NodeRef{id_, nodes_.size() - 1});
}

Tensor Graph::apply(Primitive kind, std::span<const Tensor> inputs,
                    const PrimitiveAttrs& attrs) {
  const std::size_t arity = expected_arity(kind);
  if (arity != 0 && inputs.size() != arity) {
    shape_error(kind, "expects " + std::to_string(arity) + " inputs, got " +
                          std::to_string(inputs.size()));
  }
  bool recorded = false;
  for (const Tensor& t : inputs) {
    if (t.empty()) shape_error(kind, "empty input");
    if (t.node_) {
      if (t.node_->graph != id_) {
        shape_error(kind, "input is recorded in a different graph");
      }
      recorded = true;
    }
  }

  const std::size_t next_index = nodes_.size();
  ForwardResult r;
  try {
    r = evaluate(kind, inputs, attrs);
  } catch (const DomainError& e) {
    throw DomainError(std::string(primitive_name(kind)) + " at node #" +
                      std::to_string(next_index) + ": " + e.what());
  }
  for (double v : r.values) {
    if (!std::isfinite(v)) {
      throw DomainError(std::string(primitive_name(kind)) + " at node #" +
                        std::to_string(next_index) +
                        " produced a non-finite value");
    }
  }

  auto data = std::make_shared<const std::vector<double>>(std::move(r.values));
  if (!recorded) return Tensor(std::move(r.shape), std::move(data), std::nullopt);

  Node n;
  n.kind = kind;
  n.shape = r.shape;
  n.attrs = attrs;
  for (const Tensor& t : inputs) {
    n.inputs.push_back(t.node_ ? std::optional<std::size_t>(t.node_->index)
                               : std::nullopt);
  }
  const unsigned policy = save_policy(kind);
  if (policy & kSaveInputs) {
    for (const Tensor& t : inputs) n.saved.push_back(t.detached());
  }
  // Shapes of every input are needed by the reductions and broadcasts.
  if (policy == kSaveNone) {
    for (const Tensor& t : inputs) {
      n.saved.push_back(Tensor(t.shape(), nullptr, std::nullopt));
    }
  }
  Tensor out(r.shape, data, NodeRef{id_, next_index});
  if (policy & kSaveOutput) n.saved.push_back(out.detached());
  nodes_.push_back(std::move(n));
  return out;
}

Tensor Graph::matmul(const Tensor& a, const Tensor& b) {
  const Tensor in[] = {a, b};
  return apply(Primitive::kMatMul, in);
}
Tensor Graph::add(const Tensor& a, const Tensor& b) {
  const Tensor in[] = {a, b};
  return apply(Primitive::kAdd, in);
}
Tensor Graph::subtract(const Tensor& a, const Tensor& b) {
  const Tensor in[] = {a, b};
  return apply(Primitive::kSubtract, in);
}
Tensor Graph::multiply(const Tensor& a, const Tensor& b) {
  const Tensor in[] = {a, b};
  return apply(Primitive::kMultiply, in);
}
Tensor Graph::divide(const Tensor& a, const Tensor& b) {
  const Tensor in[] = {a, b};
  return apply(Primitive::kDivide, in);
}
Tensor Graph::scale(const Tensor& a, double factor) {
  PrimitiveAttrs attrs;
  attrs.scalar = factor;
  return apply(Primitive::kScale, {&a, 1}, attrs);
}
Tensor Graph::add_scalar(const Tensor& a, double offset) {
  PrimitiveAttrs attrs;
  attrs.scalar = offset;
  return apply(Primitive::kAddScalar, {&a, 1}, attrs);
}
Tensor Graph::relu(const Tensor& a) { return apply(Primitive::kRelu, {&a, 1}); }
Tensor Graph::exp(const Tensor& a) { return apply(Primitive::kExp, {&a, 1}); }
Tensor Graph::log(const Tensor& a) { return apply(Primitive::kLog, {&a, 1}); }
Tensor Graph::tanh(const Tensor& a) { return apply(Primitive::kTanh, {&a, 1}); }
Tensor Graph::softmax(const Tensor& a) {
  return apply(Primitive::kSoftmax, {&a, 1});
}
Tensor Graph::log_softmax(const Tensor& a) {
  return apply(Primitive::kLogSoftmax, {&a, 1});
}
Tensor Graph::sum(const Tensor& a, int axis) {
  PrimitiveAttrs attrs;
  attrs.axis = axis;
  return apply(Primitive::kSum, {&a, 1}, attrs);
}
Tensor Graph::mean(const Tensor& a, int axis) {
  PrimitiveAttrs attrs;
  attrs.axis = axis;
  return apply(Primitive::kMean, {&a, 1}, attrs);
}
Tensor Graph::square(const Tensor& a) {
  return apply(Primitive::kSquare, {&a, 1});
}
Tensor Graph::sqrt(const Tensor& a) { return apply(Primitive::kSqrt, {&a, 1}); }
Tensor Graph::concat(std::span<const Tensor> parts, int axis) {
  PrimitiveAttrs attrs;
  attrs.axis = axis;
  return apply(Primitive::kConcat, parts, attrs);
}
Tensor Graph::concat(std::initializer_list<Tensor> parts, int axis) {
  return concat(std::span<const Tensor>(parts.begin(), parts.size()), axis);
}
Tensor Graph::slice_rows(const Tensor& a, std::size_t begin, std::size_t end) {
  PrimitiveAttrs attrs;
  attrs.begin = begin;
  attrs.end = end;
  return apply(Primitive::kSliceRows, {&a, 1}, attrs);
}
Tensor Graph::transpose(const Tensor& a) {
  return apply(Primitive::kTranspose, {&a, 1});
}
Tensor Graph::reshape(const Tensor& a, Shape shape) {
  PrimitiveAttrs attrs;
  attrs.shape = std::move(shape);
  return apply(Primitive::kReshape, {&a, 1}, attrs);
}
Tensor Graph::clamp_min(const Tensor& a, double floor) {
  PrimitiveAttrs attrs;
  attrs.scalar = floor;
  return apply(Primitive::kClampMin, {&a, 1}, attrs);
}

Tensor Graph::angular_margin(const Tensor& cosines, std::size_t index,
                             double margin) {
  PrimitiveAttrs attrs;
  attrs.index = index;
  attrs.scalar = margin;
  return apply(Primitive::kAngularMargin, {&cosines, 1}, attrs);
}

bool GradientMap::contains(std::size_t index) const {
  return index < grads_.size() && grads_[index].has_value();
}

bool GradientMap::contains(const Tensor& t) const {
  auto node = t.node();
  return node && node->graph == graph_ && contains(node->index);
}

Tensor GradientMap::at(std::size_t index) const {
  if (!contains(index)) {
    throw std::out_of_range("gradient: node #" + std::to_string(index) +
                            " is not an ancestor of the loss");
  }
  return Tensor::create(shapes_[index], *grads_[index]);
}

Tensor GradientMap::at(const Tensor& t) const {
  if (contains(t)) return at(t.node()->index);
  return Tensor::zeros(t.shape());
}

std::size_t GradientMap::count() const {
  return static_cast<std::size_t>(
      std::count_if(grads_.begin(), grads_.end(),
                    [](const auto& g) { return g.has_value(); }));
}

GradientMap backward(const Tensor& loss, const Graph& graph) {
  if (loss.size() != 1) {
    throw std::invalid_argument("backward: loss must be scalar, got shape " +
                                shape_string(loss.shape()));
  }
  if (!graph.owns(loss)) {
    throw std::invalid_argument(
        "backward: loss is not recorded in this graph");
  }
  const std::size_t root = loss.node()->index;

  GradientMap result;
  result.graph_ = graph.id();
  result.shapes_.resize(root + 1);
  result.grads_.resize(root + 1);
  auto& grads = result.grads_;
  grads[root] = std::vector<double>{1.0};

  for (std::size_t step = root + 1; step-- > 0;) {
    if (!grads[step]) continue;
    const Graph::Node& node = graph.node(step);
    result.shapes_[step] = node.shape;
    if (node.kind == Primitive::kLeaf) continue;

    const std::vector<double>& g = *grads[step];
    auto wants = [&](std::size_t i) { return node.inputs[i].has_value(); };
    auto push = [&](std::size_t i, std::vector<double> gi) {
      accumulate(grads[*node.inputs[i]], std::move(gi));
    };
    const auto& saved = node.saved;

    switch (node.kind) {
      case Primitive::kLeaf:
        break;
      case Primitive::kMatMul: {
        const Tensor& a = saved[0];
        const Tensor& b = saved[1];
        const std::size_t n = a.rows();
        const std::size_t k = a.cols();
        const std::size_t m = b.shape()[1];
        ConstMap gm(g.data(), n, m);
        if (wants(0)) {
          std::vector<double> ga(n * k);
          MutMap(ga.data(), n, k).noalias() =
              gm * ConstMap(b.values().data(), k, m).transpose();
          push(0, std::move(ga));
        }
        if (wants(1)) {
          std::vector<double> gb(k * m);
          MutMap(gb.data(), k, m).noalias() =
              ConstMap(a.values().data(), n, k).transpose() * gm;
          push(1, std::move(gb));
        }
        break;
      }
      case Primitive::kAdd:
      case Primitive::kSubtract:
      case Primitive::kMultiply:
      case Primitive::kDivide: {
        const Tensor& a = saved[0];
        const Tensor& b = saved[1];
        Broadcast mode = Broadcast::kSame;
        if (a.shape() != b.shape()) {
          mode = shape_size(b.shape()) == 1 ? Broadcast::kScalar
                                            : Broadcast::kRow;
        }
        const std::size_t cols = a.cols();
        const std::size_t rhs_size = shape_size(b.shape());
        std::vector<double> ga(g.size());
        std::vector<double> gb(g.size());
        for (std::size_t i = 0; i < g.size(); ++i) {
          const std::size_t j = rhs_index(mode, i, cols);
          switch (node.kind) {
            case Primitive::kAdd:
              ga[i] = g[i];
              gb[i] = g[i];
              break;
            case Primitive::kSubtract:
              ga[i] = g[i];
              gb[i] = -g[i];
              break;
            case Primitive::kMultiply:
              ga[i] = g[i] * b[j];
              gb[i] = g[i] * a[i];
              break;
            default:
              ga[i] = g[i] / b[j];
              gb[i] = -g[i] * a[i] / (b[j] * b[j]);
              break;
          }
        }
        if (wants(0)) push(0, std::move(ga));
        if (wants(1)) push(1, reduce_to_rhs(mode, gb, rhs_size, cols));
        break;
      }
      case Primitive::kScale: {
        std::vector<double> ga(g.size());
        for (std::size_t i = 0; i < g.size(); ++i) {
          ga[i] = g[i] * node.attrs.scalar;
        }
        push(0, std::move(ga));
        break;
      }
      case Primitive::kAddScalar:
      case Primitive::kReshape:
        push(0, g);
        break;
      case Primitive::kRelu:
      case Primitive::kExp:
      case Primitive::kTanh:
      case Primitive::kSqrt: {
        const Tensor& y = saved[0];
        std::vector<double> ga(g.size());
        for (std::size_t i = 0; i < g.size(); ++i) {
          switch (node.kind) {
            case Primitive::kRelu:
              ga[i] = y[i] > 0.0 ? g[i] : 0.0;
              break;
            case Primitive::kExp:
              ga[i] = g[i] * y[i];
              break;
            case Primitive::kTanh:
              ga[i] = g[i] * (1.0 - y[i] * y[i]);
              break;
            default:
              // Zero subgradient at the cusp, so norms of a zero residual
              // stay differentiable.
              ga[i] = y[i] > 0.0 ? g[i] / (2.0 * y[i]) : 0.0;
              break;
          }
        }
        push(0, std::move(ga));
        break;
      }
      case Primitive::kLog:
      case Primitive::kSquare:
      case Primitive::kClampMin: {
        const Tensor& x = saved[0];
        std::vector<double> ga(g.size());
        for (std::size_t i = 0; i < g.size(); ++i) {
          switch (node.kind) {
            case Primitive::kLog:
              ga[i] = g[i] / x[i];
              break;
            case Primitive::kSquare:
              ga[i] = 2.0 * x[i] * g[i];
              break;
            default:
              ga[i] = x[i] < node.attrs.scalar ? 0.0 : g[i];
              break;
          }
        }
        push(0, std::move(ga));
        break;
      }
      case Primitive::kSoftmax:
      case Primitive::kLogSoftmax: {
        const Tensor& y = saved[0];
        const std::size_t cols = y.cols();
        std::vector<double> ga(g.size());
        for (std::size_t r = 0; r * cols < g.size(); ++r) {
          const std::size_t o = r * cols;
          if (node.kind == Primitive::kSoftmax) {
            double dot = 0.0;
            for (std::size_t j = 0; j < cols; ++j) dot += g[o + j] * y[o + j];
            for (std::size_t j = 0; j < cols; ++j) {
              ga[o + j] = y[o + j] * (g[o + j] - dot);
            }
          } else {
            double total = 0.0;
            for (std::size_t j = 0; j < cols; ++j) total += g[o + j];
            for (std::size_t j = 0; j < cols; ++j) {
              ga[o + j] = g[o + j] - std::exp(y[o + j]) * total;
            }
          }
        }
        push(0, std::move(ga));
        break;
      }
      case Primitive::kSum:
      case Primitive::kMean: {
        const Shape& in_shape = saved[0].shape();
        const std::size_t size = shape_size(in_shape);
        const std::size_t cols = in_shape.back();
        const std::size_t rows = size / cols;
        std::vector<double> ga(size);
        const bool mean = node.kind == Primitive::kMean;
        if (node.attrs.axis == -1 || in_shape.size() == 1) {
          const double v = mean ? g[0] / static_cast<double>(size) : g[0];
          std::fill(ga.begin(), ga.end(), v);
        } else if (node.attrs.axis == 0) {
          const double d = mean ? static_cast<double>(rows) : 1.0;
          for (std::size_t i = 0; i < rows; ++i) {
            for (std::size_t j = 0; j < cols; ++j) ga[i * cols + j] = g[j] / d;
          }
        } else {
          const double d = mean ? static_cast<double>(cols) : 1.0;
          for (std::size_t i = 0; i < rows; ++i) {
            for (std::size_t j = 0; j < cols; ++j) ga[i * cols + j] = g[i] / d;
          }
        }
        push(0, std::move(ga));
        break;
      }
      case Primitive::kConcat: {
        const std::size_t rank = node.shape.size();
        const std::size_t axis =
            node.attrs.axis == -1 ? rank - 1
                                  : static_cast<std::size_t>(node.attrs.axis);
        if (axis == 0) {
          std::size_t offset = 0;
          for (std::size_t i = 0; i < saved.size(); ++i) {
            const std::size_t len = shape_size(saved[i].shape());
            if (wants(i)) {
              push(i, std::vector<double>(g.begin() + offset,
                                          g.begin() + offset + len));
            }
            offset += len;
          }
        } else {
          const std::size_t out_cols = node.shape.back();
          const std::size_t rows = shape_size(node.shape) / out_cols;
          std::size_t offset = 0;
          for (std::size_t i = 0; i < saved.size(); ++i) {
            const std::size_t c = saved[i].shape().back();
            if (wants(i)) {
              std::vector<double> gi(rows * c);
              for (std::size_t r = 0; r < rows; ++r) {
                std::copy_n(g.data() + r * out_cols + offset, c,
                            gi.data() + r * c);
              }
              push(i, std::move(gi));
            }
            offset += c;
          }
        }
        break;
      }
      case Primitive::kSliceRows: {
        const Shape& in_shape = saved[0].shape();
        const std::size_t cols = in_shape[1];
        std::vector<double> ga(shape_size(in_shape), 0.0);
        std::copy(g.begin(), g.end(), ga.begin() + node.attrs.begin * cols);
        push(0, std::move(ga));
        break;
      }
      case Primitive::kTranspose: {
        const std::size_t rows = node.shape[0];
        const std::size_t cols = node.shape[1];
        std::vector<double> ga(g.size());
        for (std::size_t i = 0; i < rows; ++i) {
          for (std::size_t j = 0; j < cols; ++j) {
            ga[j * rows + i] = g[i * cols + j];
          }
        }
        push(0, std::move(ga));
        break;
      }
      case Primitive::kAngularMargin: {
        const Tensor& c = saved[0];
        std::vector<double> ga = g;
        const std::size_t t = node.attrs.index;
        ga[t] = g[t] * apply_margin(c[t], node.attrs.scalar).slope;
        push(0, std::move(ga));
        break;
      }
    }
  }
  return result;
}

Tensor finite_difference_gradient(
    const std::function<double(const Tensor&)>& f, const Tensor& x,
    double eps) {
  if (!(eps > 0.0)) {
    throw std::invalid_argument("finite_difference_gradient: eps must be > 0");
  }
  std::vector<double> base = x.to_vector();
  std::vector<double> grad(base.size());
  for (std::size_t i = 0; i < base.size(); ++i) {
    const double orig = base[i];
    base[i] = orig + eps;
    const double up = f(Tensor::create(x.shape(), base));
    base[i] = orig - eps;
    const double down = f(Tensor::create(x.shape(), base));
    base[i] = orig;
    if (!std::isfinite(up) || !std::isfinite(down)) {
      throw DomainError("finite_difference_gradient: non-finite evaluation "
                        "at coordinate " +
                        std::to_string(i));
    }
    grad[i] = (up - down) / (2.0 * eps);
  }
  return Tensor::create(x.shape(), std::move(grad));
}

}  // namespace imlkd
