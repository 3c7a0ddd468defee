// Copyright 2026 The imlkd Authors
// SPDX-License-Identifier: Apache-2.0
//
// Dense row-major tensors of doubles. A tensor is either a constant or the
// output of a node in a Graph (see graph.hpp); the value buffer is shared and
// immutable, so copies are cheap and saved activations alias their outputs.

#ifndef IMLKD_TENSOR_HPP
#define IMLKD_TENSOR_HPP

#include <cstddef>
#include <cstdint>
#include <istream>
#include <memory>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

namespace imlkd {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape);
std::string shape_string(const Shape& shape);

// Identity of a node inside one specific Graph.
struct NodeRef {
  std::uint64_t graph = 0;
  std::size_t index = 0;

  friend bool operator==(const NodeRef&, const NodeRef&) = default;
};

class Tensor {
 public:
  Tensor() = default;

  // Throws std::invalid_argument on size mismatch or non-finite values.
  static Tensor create(Shape shape, std::vector<double> values);
  static Tensor zeros(Shape shape);
  static Tensor filled(Shape shape, double value);
  static Tensor scalar(double value);
  static Tensor vector(std::vector<double> values);
  // rows × cols from row-major values.
  static Tensor matrix(std::size_t rows, std::size_t cols,
                       std::vector<double> values);

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return data_ ? data_->size() : 0; }
  bool empty() const { return size() == 0; }

  // Leading and trailing extents; a rank-1 tensor is one row.
  std::size_t rows() const;
  std::size_t cols() const;

  std::span<const double> values() const;
  double operator[](std::size_t i) const { return (*data_)[i]; }
  double at(std::size_t row, std::size_t col) const;
  // Scalar value of a size-1 tensor.
  double item() const;

  std::optional<NodeRef> node() const { return node_; }
  bool is_constant() const { return !node_.has_value(); }
  // Same values and shape, no graph identity.
  Tensor detached() const;

  // Copy of the values, for building derived tensors.
  std::vector<double> to_vector() const;

 private:
  friend class Graph;
  Tensor(Shape shape, std::shared_ptr<const std::vector<double>> data,
         std::optional<NodeRef> node);

  Shape shape_;
  std::shared_ptr<const std::vector<double>> data_;
  std::optional<NodeRef> node_;
};

// Exact equality of shape and values (bitwise for finite doubles).
bool same_values(const Tensor& a, const Tensor& b);
double max_abs_difference(const Tensor& a, const Tensor& b);

// Tensor dump: a header line `name rank dims...` followed by the values,
// whitespace separated, 17 significant digits. Parsing is exact for dumps
// written by write_tensor.
void write_tensor(std::ostream& out, const std::string& name,
                  const Tensor& t);
// Returns the name; throws std::runtime_error on malformed input.
std::string read_tensor(std::istream& in, Tensor& t);

}  // namespace imlkd

#endif  // IMLKD_TENSOR_HPP
