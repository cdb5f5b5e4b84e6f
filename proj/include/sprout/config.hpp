// Copyright 2026 The Sprout Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "json.hpp"
#include "sprout/data.hpp"
#include "sprout/genotype.hpp"

namespace sprout {

struct RunConfig {
  SearchMode mode = SearchMode::macro;
  std::string opset = "toy";
  int i_max = 3;
  double lambda = 0.001;
  MergeVariant merge = MergeVariant::cp_each;
  bool isolated = true;
  Skeleton skeleton;
  int seed_epochs = 20;
  int weak_epochs = 20;
  int child_epochs = 20;
  double lr0 = 0.05;
  double weight_decay = 1e-4;
  int batch_size = 32;
  int growth_iterations = 8;
  int workers = 1;
  std::uint64_t seed = 0;
  /// Multiply-add budget K for final-model filtering; 0 disables it.
  std::int64_t cost_budget = 0;
  /// Wall-clock limit for the search in seconds; 0 disables it.
  double max_seconds = 0.0;
  /// Largest acceptable weak-learning / child-training compute ratio.
  double amortization_bound = 16.0;
  DatasetSpec dataset;
  std::string output_dir = "sprout-out";

  /// Throws ConfigError naming the first field out of range.
  void validate() const;

  nlohmann::json to_json() const;
  /// Rejects unknown keys; missing keys keep their defaults.
  static RunConfig from_json(const nlohmann::json& doc);
  static RunConfig load(const std::filesystem::path& path);
};

}  // namespace sprout
