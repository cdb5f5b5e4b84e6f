// Copyright 2026 The Sprout Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "sprout/config.hpp"
#include "sprout/data.hpp"
#include "sprout/growth.hpp"

namespace sprout {

struct HullPoint {
  double cost = 0.0;
  double error = 0.0;
};

/// Indices of the lower-left convex hull, sorted by cost ascending with
/// error strictly descending. Points on a hull edge are kept; among equal
/// costs only the lowest error (then lowest index) survives.
std::vector<std::size_t> lower_convex_hull(const std::vector<HullPoint>& points);

/// One pass of sequential acceptance over `counts` (most accurate first):
/// model k is accepted with probability 1 / (counts[k] + 1). A pass that
/// accepts nothing restarts.
std::size_t pick_parent_index(const std::vector<std::int64_t>& counts, std::mt19937_64& rng);

/// Exact selection probabilities of pick_parent_index.
std::vector<double> parent_distribution(const std::vector<std::int64_t>& counts);

enum class RecordStatus { training, done, failed };
std::string_view to_string(RecordStatus status);

struct ModelRecord {
  int id = 0;
  Genotype genotype;
  std::string checkpoint;
  std::int64_t cost = 0;
  std::int64_t param_count = 0;
  std::optional<double> val_error;
  int parent_id = -1;
  std::int64_t sample_count = 0;
  RecordStatus status = RecordStatus::training;
  std::string message;
};

struct SearchState {
  std::map<int, ModelRecord> records;
  /// Model ids, cost ascending.
  std::vector<int> hull;
  std::uint64_t seed = 0;
  int iteration = 0;
  std::int64_t budget = 0;

  /// Recomputes the hull from evaluated, non-failed records.
  void update_hull();
};

/// Draws a hull model, scanning from the most accurate, and increments its
/// sample count.
int sample_parent(SearchState& state, std::mt19937_64& rng);

/// Hull models with cost in [0.8, 1.2] * budget, or the nearest one.
std::vector<int> filter_for_final(const SearchState& state, std::int64_t budget);

/// Classification: fraction misclassified (argmax, ties to the lower class).
/// Regression: mean loss mapped through x / (1 + x).
double evaluate(const Graph& graph, const ParameterStore& params, const Dataset& validation);

inline constexpr char kRegressionNormalization[] = "mean_loss/(1+mean_loss)";

struct GrowthResult {
  Model child;
  bool failed = false;
  std::string message;
  /// Multiply-adds x examples for weak learning and for child training.
  double weak_compute = 0.0;
  double child_compute = 0.0;
  std::vector<std::uint64_t> cell_hashes;
  std::string candidate_report;
};

/// One growth step: candidates on every boostable layer (macro) or on the
/// last normal cell (cell), weak learning, finalization, tying, rebuild and
/// child training.
GrowthResult grow_child(const Model& parent, const RunConfig& config, const Dataset& train,
                        std::uint64_t seed);

/// Builds the seed model for a dataset and trains it.
Model train_seed(const RunConfig& config, const Dataset& train);

struct SearchEvent {
  int iter = 0;
  int worker = 0;
  int parent_id = -1;
  int child_id = 0;
  std::int64_t cost = 0;
  std::int64_t param_count = 0;
  std::optional<double> val_error;
  double wall_time = 0.0;
  double amortization = 0.0;
  std::string status;
};

nlohmann::json to_json(const SearchEvent& e);

struct SearchOutput {
  SearchState state;
  std::vector<SearchEvent> events;
  nlohmann::json manifest;
};

/// Runs the search. With a non-empty `out_dir` writes manifest.json,
/// search.jsonl, hull.csv, genotypes/ and checkpoints/.
SearchOutput search_loop(const RunConfig& config, const Dataset& train, const Dataset& validation,
                         const std::filesystem::path& out_dir = {});

/// Hull table rebuilt from search.jsonl events.
std::vector<SearchEvent> read_search_log(const std::filesystem::path& path);
std::string hull_csv(const std::vector<SearchEvent>& events);

}  // namespace sprout
