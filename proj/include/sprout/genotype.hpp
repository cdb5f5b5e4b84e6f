// Copyright 2026 The Sprout Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "sprout/data.hpp"
#include "sprout/tensor.hpp"

namespace sprout {

enum class SearchMode { cell, macro };
enum class MergeVariant { cp_each, cp_end, ws };

/// Entries of the shortcut operation set. Toy entries act on [batch, width]
/// tensors, image entries on NCHW tensors.
enum class ShortcutOp {
  dense_relu,
  dense_tanh,
  identity,
  avg_pool_1d,
  sep_conv_3x3,
  sep_conv_5x5,
  dil_conv_3x3,
  dil_conv_5x5,
  max_pool_3x3,
  avg_pool_3x3,
};

using Opset = std::vector<ShortcutOp>;

std::string_view to_string(SearchMode mode);
SearchMode parse_search_mode(std::string_view name);
std::string_view to_string(MergeVariant merge);
MergeVariant parse_merge_variant(std::string_view name);
std::string_view to_string(ShortcutOp op);
ShortcutOp parse_shortcut_op(std::string_view name);

/// {dense_relu, dense_tanh, identity, avg_pool_1d}
Opset toy_opset();
/// {sep 3x3, sep 5x5, dil 3x3, dil 5x5, max pool 3x3, avg pool 3x3, identity}
Opset image_opset();
Opset opset_by_name(std::string_view name);

struct Skeleton {
  int cells_per_stage = 1;
  int filters = 8;
  int stages = 1;

  bool operator==(const Skeleton&) const = default;
};

struct Shortcut {
  std::string source;
  std::string target;
  ShortcutOp op = ShortcutOp::identity;
  double alpha = 0.0;

  bool operator==(const Shortcut&) const = default;
};

/// Shortcuts merged into one new layer that feeds `target` through a gate.
struct MergeGroup {
  std::string layer;
  std::string target = "out";
  MergeVariant merge = MergeVariant::cp_each;
  std::vector<Shortcut> shortcuts;

  bool operator==(const MergeGroup&) const = default;
};

enum class CellKind { normal, transition };

struct CellDescriptor {
  CellKind kind = CellKind::normal;
  std::vector<MergeGroup> groups;

  bool operator==(const CellDescriptor&) const = default;
};

struct Genotype {
  static constexpr int kSchemaVersion = 1;

  SearchMode mode = SearchMode::macro;
  std::string opset = "toy";
  Skeleton skeleton;
  MergeVariant merge = MergeVariant::cp_each;
  Shape input;
  int classes = 2;
  Task task = Task::classification;
  std::vector<CellDescriptor> cells;

  /// Largest number of growth groups in any cell.
  int growth_rounds() const;
  std::vector<int> normal_cells() const;

  nlohmann::json to_json() const;
  static Genotype from_json(const nlohmann::json& doc);

  bool operator==(const Genotype&) const = default;
};

/// Cell list for a skeleton: per stage N normal cells, then one transition
/// cell between adjacent stages.
std::vector<CellDescriptor> skeleton_cells(const Skeleton& skeleton);

}  // namespace sprout
