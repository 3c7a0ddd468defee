// Copyright 2026 The imlkd Authors
// SPDX-License-Identifier: Apache-2.0

#include "imlkd/tensor.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <sstream>
#include <stdexcept>
#include <utility>

namespace imlkd {

std::size_t shape_size(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

std::string shape_string(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

Tensor::Tensor(Shape shape, std::shared_ptr<const std::vector<double>> data,
               std::optional<NodeRef> node)
    : shape_(std::move(shape)), data_(std::move(data)), node_(node) {}

Tensor Tensor::create(Shape shape, std::vector<double> values) {
  if (shape_size(shape) != values.size()) {
    throw std::invalid_argument("tensor: shape " + shape_string(shape) +
                                " does not hold " +
                                std::to_string(values.size()) + " values");
  }
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!std::isfinite(values[i])) {
      throw std::invalid_argument("tensor: non-finite value at index " +
                                  std::to_string(i));
    }
  }
  return Tensor(std::move(shape),
                std::make_shared<const std::vector<double>>(std::move(values)),
                std::nullopt);
}

Tensor Tensor::zeros(Shape shape) { return filled(std::move(shape), 0.0); }

Tensor Tensor::filled(Shape shape, double value) {
  std::vector<double> v(shape_size(shape), value);
  return create(std::move(shape), std::move(v));
}

Tensor Tensor::scalar(double value) { return create({1}, {value}); }

Tensor Tensor::vector(std::vector<double> values) {
  const std::size_t n = values.size();
  return create({n}, std::move(values));
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols,
                      std::vector<double> values) {
  return create({rows, cols}, std::move(values));
}

std::size_t Tensor::rows() const {
  if (shape_.empty()) return 1;
  return shape_.size() == 1 ? 1 : shape_.front();
}

std::size_t Tensor::cols() const {
  return shape_.empty() ? 1 : shape_.back();
}

std::span<const double> Tensor::values() const {
  if (!data_) return {};
  return {data_->data(), data_->size()};
}

double Tensor::at(std::size_t row, std::size_t col) const {
  return (*data_)[row * cols() + col];
}

double Tensor::item() const {
  if (size() != 1) {
    throw std::invalid_argument("tensor: item() on tensor of shape " +
                                shape_string(shape_));
  }
  return (*data_)[0];
}

Tensor Tensor::detached() const { return Tensor(shape_, data_, std::nullopt); }

std::vector<double> Tensor::to_vector() const {
  auto v = values();
  return {v.begin(), v.end()};
}

bool same_values(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) return false;
  auto av = a.values();
  auto bv = b.values();
  for (std::size_t i = 0; i < av.size(); ++i) {
    if (av[i] != bv[i]) return false;
  }
  return true;
}

double max_abs_difference(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw std::invalid_argument("max_abs_difference: shape mismatch " +
                                shape_string(a.shape()) + " vs " +
                                shape_string(b.shape()));
  }
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    worst = std::max(worst, std::abs(a[i] - b[i]));
  }
  return worst;
}

void write_tensor(std::ostream& out, const std::string& name,
                  const Tensor& t) {
  if (name.empty() || name.find_first_of(" \t\n") != std::string::npos) {
    throw std::invalid_argument("write_tensor: invalid name '" + name + "'");
  }
  out << name << ' ' << t.rank();
  for (std::size_t d : t.shape()) out << ' ' << d;
  out << '\n';
  char buf[32];
  auto v = t.values();
  for (std::size_t i = 0; i < v.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%.17g", v[i]);
    out << buf << ((i + 1) % 8 == 0 || i + 1 == v.size() ? '\n' : ' ');
  }
}

std::string read_tensor(std::istream& in, Tensor& t) {
  std::string header;
  while (header.empty() && std::getline(in, header)) {
  }
  if (header.empty()) throw std::runtime_error("read_tensor: missing header");
  std::istringstream hs(header);
  std::string name;
  std::size_t rank = 0;
  if (!(hs >> name >> rank)) {
    throw std::runtime_error("read_tensor: malformed header '" + header + "'");
  }
  Shape shape(rank);
  for (auto& d : shape) {
    if (!(hs >> d)) {
      throw std::runtime_error("read_tensor: header '" + header +
                               "' is missing dimensions");
    }
  }
  std::vector<double> values(shape_size(shape));
  std::string token;
  for (auto& v : values) {
    if (!(in >> token)) {
      throw std::runtime_error("read_tensor: truncated values for '" + name +
                               "'");
    }
    auto [ptr, ec] =
        std::from_chars(token.data(), token.data() + token.size(), v);
    if (ec != std::errc() || ptr != token.data() + token.size()) {
      throw std::runtime_error("read_tensor: bad value '" + token + "' in '" +
                               name + "'");
    }
  }
  // Consume the rest of the last value line.
  std::getline(in, token);
  t = Tensor::create(std::move(shape), std::move(values));
  return name;
}

}  // namespace imlkd
