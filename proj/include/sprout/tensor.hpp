// Copyright 2026 The Sprout Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace sprout {

using Shape = std::vector<std::int64_t>;

std::int64_t numel(const Shape& shape);
std::string shape_str(const Shape& shape);

/// Dense row-major tensor of 64-bit floats. Image tensors are NCHW, feature
/// tensors are [batch, features].
struct Tensor {
  Shape shape;
  std::vector<double> data;

  Tensor() = default;
  explicit Tensor(Shape s, double fill = 0.0);
  Tensor(Shape s, std::vector<double> values);

  static Tensor scalar(double v) { return Tensor({1}, {v}); }

  std::size_t size() const { return data.size(); }
  std::size_t rank() const { return shape.size(); }
  std::int64_t dim(std::size_t i) const { return shape.at(i); }
  bool empty() const { return data.empty(); }

  double& operator[](std::size_t i) { return data[i]; }
  double operator[](std::size_t i) const { return data[i]; }

  std::span<double> values() { return data; }
  std::span<const double> values() const { return data; }

  bool all_finite() const;
  bool operator==(const Tensor& other) const = default;
};

Tensor zeros_like(const Tensor& t);
void add_inplace(Tensor& dst, const Tensor& src);
double dot(const Tensor& a, const Tensor& b);
double max_abs(const Tensor& t);

}  // namespace sprout
