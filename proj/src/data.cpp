// Copyright 2026 The Sprout Authors
// SPDX-License-Identifier: Apache-2.0

#include "sprout/data.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <numbers>
#include <numeric>
#include <random>

#include <fmt/core.h>

#include "sprout/error.hpp"

namespace sprout {
namespace {

void shuffle_examples(Dataset& d, std::mt19937_64& rng) {
  const auto n = d.size();
  std::vector<std::int64_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  const Batch b = d.batch(order);
  d.inputs = b.inputs;
  d.targets = b.targets;
}

std::uint32_t read_u32(std::istream& in) {
  unsigned char buf[4];
  if (!in.read(reinterpret_cast<char*>(buf), 4)) throw FormatError("tiny image file: truncated header");
  return static_cast<std::uint32_t>(buf[0]) | (static_cast<std::uint32_t>(buf[1]) << 8) |
         (static_cast<std::uint32_t>(buf[2]) << 16) | (static_cast<std::uint32_t>(buf[3]) << 24);
}

void write_u32(std::ostream& out, std::uint32_t v) {
  const unsigned char buf[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                                static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  out.write(reinterpret_cast<const char*>(buf), 4);
}

}  // namespace

Shape Dataset::example_shape() const { return Shape(inputs.shape.begin() + 1, inputs.shape.end()); }

Batch Dataset::batch(std::span<const std::int64_t> indices) const {
  if (indices.empty()) throw Error("empty batch");
  const auto row = numel(example_shape());
  const auto trow = static_cast<std::int64_t>(targets.size()) / size();
  Shape in_shape = inputs.shape;
  in_shape[0] = static_cast<std::int64_t>(indices.size());
  Shape t_shape = targets.shape;
  t_shape[0] = static_cast<std::int64_t>(indices.size());
  Batch b{Tensor(in_shape), Tensor(t_shape), static_cast<std::int64_t>(indices.size())};
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const auto src = indices[i];
    if (src < 0 || src >= size()) throw Error(fmt::format("example index {} out of range", src));
    std::copy_n(inputs.data.begin() + src * row, row, b.inputs.data.begin() + static_cast<std::int64_t>(i) * row);
    std::copy_n(targets.data.begin() + src * trow, trow, b.targets.data.begin() + static_cast<std::int64_t>(i) * trow);
  }
  return b;
}

Batch Dataset::all() const {
  std::vector<std::int64_t> idx(size());
  std::iota(idx.begin(), idx.end(), 0);
  return batch(idx);
}

Dataset Dataset::subset(std::int64_t begin, std::int64_t end) const {
  std::vector<std::int64_t> idx(end - begin);
  std::iota(idx.begin(), idx.end(), begin);
  const Batch b = batch(idx);
  return Dataset{b.inputs, b.targets, task, classes};
}

Dataset make_spirals(std::int64_t size, double noise, int classes, std::uint64_t seed) {
  if (size < 1 || classes < 2) throw ConfigError("spirals need size >= 1 and at least 2 classes");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> jitter(0.0, noise);
  Dataset d{Tensor({size, 2}), Tensor({size}), Task::classification, classes};
  constexpr double kTurns = 1.75;
  for (std::int64_t i = 0; i < size; ++i) {
    const int c = static_cast<int>(i % classes);
    const double t = unit(rng);
    const double angle = 2.0 * std::numbers::pi * (static_cast<double>(c) / classes + kTurns * t);
    const double r = 0.1 + 0.9 * t;
    d.inputs.data[2 * i] = r * std::cos(angle) + jitter(rng);
    d.inputs.data[2 * i + 1] = r * std::sin(angle) + jitter(rng);
    d.targets.data[i] = c;
  }
  shuffle_examples(d, rng);
  return d;
}

Dataset make_parity(std::int64_t size, int bits, double noise, std::uint64_t seed) {
  if (size < 1 || bits < 1) throw ConfigError("parity needs size >= 1 and bits >= 1");
  std::mt19937_64 rng(seed);
  std::bernoulli_distribution coin(0.5);
  std::normal_distribution<double> jitter(0.0, noise);
  Dataset d{Tensor({size, bits}), Tensor({size}), Task::classification, 2};
  for (std::int64_t i = 0; i < size; ++i) {
    int parity = 0;
    for (int b = 0; b < bits; ++b) {
      const bool on = coin(rng);
      parity ^= on ? 1 : 0;
      d.inputs.data[i * bits + b] = (on ? 1.0 : -1.0) + jitter(rng);
    }
    d.targets.data[i] = parity;
  }
  return d;
}

Dataset load_tiny_images(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(fmt::format("cannot read '{}'", path.string()));
  char magic[8];
  if (!in.read(magic, 8) || std::string(magic, 8) != "TINYIMG1") throw FormatError("tiny image file: bad magic");
  const auto count = read_u32(in), channels = read_u32(in), height = read_u32(in), width = read_u32(in),
             classes = read_u32(in);
  if (count == 0 || channels == 0 || height == 0 || width == 0 || classes < 2) {
    throw FormatError("tiny image file: invalid header");
  }
  if (height > 16 || width > 16) throw FormatError("tiny image file: images larger than 16x16 are not supported");
  const std::int64_t pixels = std::int64_t{channels} * height * width;
  Dataset d{Tensor({count, channels, height, width}), Tensor({count}), Task::classification,
            static_cast<int>(classes)};
  std::vector<unsigned char> buf(static_cast<std::size_t>(pixels) + 1);
  for (std::uint32_t i = 0; i < count; ++i) {
    if (!in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()))) {
      throw FormatError("tiny image file: truncated payload");
    }
    if (buf[0] >= classes) throw FormatError(fmt::format("tiny image file: label {} out of range", buf[0]));
    d.targets.data[i] = buf[0];
    for (std::int64_t p = 0; p < pixels; ++p) d.inputs.data[i * pixels + p] = buf[p + 1] / 255.0;
  }
  return d;
}

void save_tiny_images(const std::filesystem::path& path, const Dataset& data) {
  if (data.inputs.rank() != 4) throw Error("tiny image file needs NCHW inputs");
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(fmt::format("cannot write '{}'", path.string()));
  out.write("TINYIMG1", 8);
  for (std::size_t i = 0; i < 4; ++i) write_u32(out, static_cast<std::uint32_t>(data.inputs.dim(i)));
  write_u32(out, static_cast<std::uint32_t>(data.classes));
  const auto pixels = numel(data.example_shape());
  for (std::int64_t i = 0; i < data.size(); ++i) {
    out.put(static_cast<char>(static_cast<unsigned char>(data.targets.data[i])));
    for (std::int64_t p = 0; p < pixels; ++p) {
      const double v = std::clamp(data.inputs.data[i * pixels + p], 0.0, 1.0);
      out.put(static_cast<char>(static_cast<unsigned char>(std::lround(v * 255.0))));
    }
  }
}

Dataset generate(const DatasetSpec& spec) {
  if (spec.kind == "synthetic-spirals") return make_spirals(spec.size, spec.noise, spec.classes, spec.seed);
  if (spec.kind == "synthetic-parity") return make_parity(spec.size, spec.bits, spec.noise, spec.seed);
  if (spec.kind == "tiny-image-file") return load_tiny_images(spec.path);
  throw ConfigError(fmt::format("unknown dataset kind '{}'", spec.kind));
}

std::pair<Dataset, Dataset> split(const Dataset& data, double val_fraction) {
  if (!(val_fraction > 0.0 && val_fraction < 1.0)) throw ConfigError("val_fraction must be in (0, 1)");
  const auto n = data.size();
  const auto n_val = static_cast<std::int64_t>(std::ceil(val_fraction * static_cast<double>(n) - 1e-9));
  if (n_val < 1 || n_val >= n) throw ConfigError("dataset too small for the requested validation split");
  return {data.subset(0, n - n_val), data.subset(n - n_val, n)};
}

std::uint64_t dataset_hash(const Dataset& data) {
  std::uint64_t h = 1469598103934665603ULL;
  auto mix = [&h](std::uint64_t v) {
    for (int i = 0; i < 8; ++i) {
      h ^= (v >> (8 * i)) & 0xffU;
      h *= 1099511628211ULL;
    }
  };
  for (auto d : data.inputs.shape) mix(static_cast<std::uint64_t>(d));
  for (auto d : data.targets.shape) mix(static_cast<std::uint64_t>(d));
  for (double v : data.inputs.data) mix(std::bit_cast<std::uint64_t>(v));
  for (double v : data.targets.data) mix(std::bit_cast<std::uint64_t>(v));
  mix(static_cast<std::uint64_t>(data.classes));
  return h;
}

}  // namespace sprout
