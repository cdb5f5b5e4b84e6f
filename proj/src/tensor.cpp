// Copyright 2026 The Sprout Authors
// SPDX-License-Identifier: Apache-2.0

#include "sprout/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "sprout/error.hpp"

namespace sprout {

std::int64_t numel(const Shape& shape) {
  std::int64_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out << ", ";
    out << shape[i];
  }
  out << ']';
  return out.str();
}

Tensor::Tensor(Shape s, double fill) : shape(std::move(s)) {
  for (auto d : shape) {
    if (d <= 0) throw Error("tensor dimensions must be positive, got " + shape_str(shape));
  }
  data.assign(static_cast<std::size_t>(numel(shape)), fill);
}

Tensor::Tensor(Shape s, std::vector<double> values) : shape(std::move(s)), data(std::move(values)) {
  if (static_cast<std::int64_t>(data.size()) != numel(shape)) {
    throw Error("tensor data length " + std::to_string(data.size()) + " does not match shape " +
                shape_str(shape));
  }
}

bool Tensor::all_finite() const {
  return std::all_of(data.begin(), data.end(), [](double v) { return std::isfinite(v); });
}

Tensor zeros_like(const Tensor& t) { return Tensor(t.shape, 0.0); }

void add_inplace(Tensor& dst, const Tensor& src) {
  if (dst.shape != src.shape) {
    throw Error("add_inplace shape mismatch " + shape_str(dst.shape) + " vs " + shape_str(src.shape));
  }
  for (std::size_t i = 0; i < dst.data.size(); ++i) dst.data[i] += src.data[i];
}

double dot(const Tensor& a, const Tensor& b) {
  if (a.size() != b.size()) throw Error("dot size mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double max_abs(const Tensor& t) {
  double m = 0.0;
  for (double v : t.data) m = std::max(m, std::abs(v));
  return m;
}

}  // namespace sprout
