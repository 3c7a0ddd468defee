// Copyright 2026 The imlkd Authors
// SPDX-License-Identifier: Apache-2.0
//
// Reverse-mode automatic differentiation over a tape of primitives.
//
// A Graph records every primitive whose inputs include at least one recorded
// tensor. Primitives applied to constants only are evaluated eagerly and
// return constants, so a frozen model run against a Graph leaves no trace.
//
// Shape rules (all tensors rank 1 or 2 unless noted):
//   matmul        [n,k]x[k,m] -> [n,m]; [k]x[k,m] -> [m]
//   add, subtract, multiply, divide
//                 equal shapes, or the right operand broadcast: size 1
//                 (scalar) or a vector matching the trailing extent
//   scale, add_scalar, relu, exp, log, tanh, square, sqrt
//                 elementwise, shape preserved
//   softmax, log_softmax
//                 along the trailing axis
//   sum, mean     axis -1 reduces everything to [1]; axis 0 of [n,m] gives
//                 [m]; axis 1 of [n,m] gives [n]
//   concat        axis 0 stacks along the leading extent, axis -1 (or the
//                 last axis) joins along the trailing extent
//   slice_rows    [T,D] -> [end-begin, D] (the time axis)
//   transpose     [n,m] -> [m,n]
//   reshape       any shape with the same element count
//   angular_margin
//                 [C] cosines; entry `index` becomes cos(min(acos(c)+m, pi))
//   clamp_min     max(x, floor) elementwise; zero gradient where clamped
//
// sqrt takes the zero subgradient at 0.

#ifndef IMLKD_GRAPH_HPP
#define IMLKD_GRAPH_HPP

#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "imlkd/tensor.hpp"

namespace imlkd {

enum class Primitive {
  kLeaf,
  kMatMul,
  kAdd,
  kSubtract,
  kMultiply,
  kDivide,
  kScale,
  kAddScalar,
  kRelu,
  kExp,
  kLog,
  kTanh,
  kSoftmax,
  kLogSoftmax,
  kSum,
  kMean,
  kSquare,
  kSqrt,
  kConcat,
  kSliceRows,
  kTranspose,
  kReshape,
  kAngularMargin,
  kClampMin,
};

const char* primitive_name(Primitive kind);

struct PrimitiveAttrs {
  double scalar = 0.0;
  int axis = -1;
  std::size_t begin = 0;
  std::size_t end = 0;
  std::size_t index = 0;
  Shape shape;
};

// Raised for log of a non-positive value, sqrt of a negative value or any
// primitive that would produce NaN/Inf.
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

class Graph {
 public:
  struct Node {
    Primitive kind = Primitive::kLeaf;
    // Recorded inputs; nullopt marks a constant operand.
    std::vector<std::optional<std::size_t>> inputs;
    Shape shape;
    // Forward values the backward rule needs (inputs and/or output).
    std::vector<Tensor> saved;
    PrimitiveAttrs attrs;
  };

  Graph();
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;
  Graph(Graph&&) = default;
  Graph& operator=(Graph&&) = default;

  // Registers a leaf whose gradient backward() will report.
  Tensor variable(const Tensor& value);

  Tensor apply(Primitive kind, std::span<const Tensor> inputs,
               const PrimitiveAttrs& attrs = {});

  Tensor matmul(const Tensor& a, const Tensor& b);
  Tensor add(const Tensor& a, const Tensor& b);
  Tensor subtract(const Tensor& a, const Tensor& b);
  Tensor multiply(const Tensor& a, const Tensor& b);
  Tensor divide(const Tensor& a, const Tensor& b);
  Tensor scale(const Tensor& a, double factor);
  Tensor add_scalar(const Tensor& a, double offset);
  Tensor relu(const Tensor& a);
  Tensor exp(const Tensor& a);
  Tensor log(const Tensor& a);
  Tensor tanh(const Tensor& a);
  Tensor softmax(const Tensor& a);
  Tensor log_softmax(const Tensor& a);
  Tensor sum(const Tensor& a, int axis = -1);
  Tensor mean(const Tensor& a, int axis = -1);
  Tensor square(const Tensor& a);
  Tensor sqrt(const Tensor& a);
  Tensor concat(std::span<const Tensor> parts, int axis = -1);
  Tensor concat(std::initializer_list<Tensor> parts, int axis = -1);
  Tensor slice_rows(const Tensor& a, std::size_t begin, std::size_t end);
  Tensor transpose(const Tensor& a);
  Tensor reshape(const Tensor& a, Shape shape);
  Tensor angular_margin(const Tensor& cosines, std::size_t index,
                        double margin);
  Tensor clamp_min(const Tensor& a, double floor);

  std::uint64_t id() const { return id_; }
  std::size_t size() const { return nodes_.size(); }
  const Node& node(std::size_t index) const { return nodes_.at(index); }
  // True when t is recorded in this graph.
  bool owns(const Tensor& t) const;

 private:
  std::uint64_t id_;
  std::vector<Node> nodes_;
};

// d(loss)/d(node) for every recorded ancestor of a scalar loss.
class GradientMap {
 public:
  GradientMap() = default;

  bool contains(const Tensor& t) const;
  // Gradient with the shape of t; zeros when t is a constant or does not
  // influence the loss.
  Tensor at(const Tensor& t) const;
  // Raw access by node index within the graph.
  bool contains(std::size_t index) const;
  Tensor at(std::size_t index) const;
  std::size_t count() const;

 private:
  friend GradientMap backward(const Tensor& loss, const Graph& graph);
  std::uint64_t graph_ = 0;
  std::vector<Shape> shapes_;
  std::vector<std::optional<std::vector<double>>> grads_;
};

// Pure function of the record: repeated calls are bitwise identical.
// Throws std::invalid_argument for a non-scalar loss or a loss that is not
// recorded in graph.
GradientMap backward(const Tensor& loss, const Graph& graph);

// Central differences (f(x+eps e_i) - f(x-eps e_i)) / (2 eps) per coordinate.
Tensor finite_difference_gradient(
    const std::function<double(const Tensor&)>& f, const Tensor& x,
    double eps);

}  // namespace imlkd

#endif  // IMLKD_GRAPH_HPP
