// Copyright 2026 The Sprout Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <utility>

#include "sprout/ops.hpp"
#include "sprout/tensor.hpp"

namespace sprout {

enum class Task { classification, regression };

/// Examples along the leading axis. Classification targets are class indices
/// stored as doubles, shape [N].
struct Dataset {
  Tensor inputs;
  Tensor targets;
  Task task = Task::classification;
  int classes = 0;

  std::int64_t size() const { return inputs.rank() == 0 ? 0 : inputs.dim(0); }
  Shape example_shape() const;
  Batch batch(std::span<const std::int64_t> indices) const;
  Batch all() const;
  Dataset subset(std::int64_t begin, std::int64_t end) const;
};

struct DatasetSpec {
  std::string kind = "synthetic-spirals";
  std::int64_t size = 2500;
  double noise = 0.1;
  int classes = 2;
  std::uint64_t seed = 0;
  int bits = 4;
  std::string path;
  double val_fraction = 0.2;
};

Dataset make_spirals(std::int64_t size, double noise, int classes, std::uint64_t seed);
Dataset make_parity(std::int64_t size, int bits, double noise, std::uint64_t seed);

/// Tiny image file: magic "TINYIMG1", then u32 LE count, channels, height,
/// width, classes, then per example one u8 label and channels*height*width
/// u8 pixels (CHW). Pixels are scaled to [0, 1].
Dataset load_tiny_images(const std::filesystem::path& path);
void save_tiny_images(const std::filesystem::path& path, const Dataset& data);

Dataset generate(const DatasetSpec& spec);

/// The last ceil(val_fraction * N) examples form the validation split.
std::pair<Dataset, Dataset> split(const Dataset& data, double val_fraction);

/// FNV-1a over shapes, inputs and targets.
std::uint64_t dataset_hash(const Dataset& data);

}  // namespace sprout
