// Copyright 2026 The Sprout Authors
// SPDX-License-Identifier: Apache-2.0

#include "sprout/genotype.hpp"

#include <algorithm>
#include <array>
#include <utility>

#include <fmt/core.h>

#include "sprout/error.hpp"

namespace sprout {
namespace {

constexpr std::array<std::pair<ShortcutOp, std::string_view>, 10> kShortcutNames{{
    {ShortcutOp::dense_relu, "dense_relu"},
    {ShortcutOp::dense_tanh, "dense_tanh"},
    {ShortcutOp::identity, "identity"},
    {ShortcutOp::avg_pool_1d, "avg_pool_1d"},
    {ShortcutOp::sep_conv_3x3, "sep_conv_3x3"},
    {ShortcutOp::sep_conv_5x5, "sep_conv_5x5"},
    {ShortcutOp::dil_conv_3x3, "dil_conv_3x3"},
    {ShortcutOp::dil_conv_5x5, "dil_conv_5x5"},
    {ShortcutOp::max_pool_3x3, "max_pool_3x3"},
    {ShortcutOp::avg_pool_3x3, "avg_pool_3x3"},
}};

}  // namespace

std::string_view to_string(SearchMode mode) { return mode == SearchMode::cell ? "cell" : "macro"; }

SearchMode parse_search_mode(std::string_view name) {
  if (name == "cell") return SearchMode::cell;
  if (name == "macro") return SearchMode::macro;
  throw ConfigError(fmt::format("unknown search mode '{}'", name));
}

std::string_view to_string(MergeVariant merge) {
  switch (merge) {
    case MergeVariant::cp_each: return "cp-each";
    case MergeVariant::cp_end: return "cp-end";
    case MergeVariant::ws: return "ws";
  }
  return "cp-each";
}

MergeVariant parse_merge_variant(std::string_view name) {
  if (name == "cp-each") return MergeVariant::cp_each;
  if (name == "cp-end") return MergeVariant::cp_end;
  if (name == "ws") return MergeVariant::ws;
  throw ConfigError(fmt::format("unknown merge variant '{}'", name));
}

std::string_view to_string(ShortcutOp op) {
  for (const auto& [k, name] : kShortcutNames) {
    if (k == op) return name;
  }
  return "unknown";
}

ShortcutOp parse_shortcut_op(std::string_view name) {
  for (const auto& [k, n] : kShortcutNames) {
    if (n == name) return k;
  }
  throw ConfigError(fmt::format("unknown shortcut op '{}'", name));
}

Opset toy_opset() {
  return {ShortcutOp::dense_relu, ShortcutOp::dense_tanh, ShortcutOp::identity, ShortcutOp::avg_pool_1d};
}

Opset image_opset() {
  return {ShortcutOp::sep_conv_3x3, ShortcutOp::sep_conv_5x5, ShortcutOp::dil_conv_3x3,
          ShortcutOp::dil_conv_5x5, ShortcutOp::max_pool_3x3, ShortcutOp::avg_pool_3x3,
          ShortcutOp::identity};
}

Opset opset_by_name(std::string_view name) {
  if (name == "toy") return toy_opset();
  if (name == "image") return image_opset();
  throw ConfigError(fmt::format("unknown opset '{}'", name));
}

std::vector<CellDescriptor> skeleton_cells(const Skeleton& s) {
  if (s.cells_per_stage < 1 || s.filters < 1 || s.stages < 1) {
    throw ConfigError(fmt::format("invalid skeleton N={} F={} stages={}", s.cells_per_stage, s.filters, s.stages));
  }
  std::vector<CellDescriptor> cells;
  for (int stage = 0; stage < s.stages; ++stage) {
    for (int i = 0; i < s.cells_per_stage; ++i) cells.push_back({CellKind::normal, {}});
    if (stage + 1 < s.stages) cells.push_back({CellKind::transition, {}});
  }
  return cells;
}

int Genotype::growth_rounds() const {
  std::size_t best = 0;
  for (const auto& c : cells) best = std::max(best, c.groups.size());
  return static_cast<int>(best);
}

std::vector<int> Genotype::normal_cells() const {
  std::vector<int> out;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (cells[i].kind == CellKind::normal) out.push_back(static_cast<int>(i));
  }
  return out;
}

nlohmann::json Genotype::to_json() const {
  nlohmann::json cells_json = nlohmann::json::array();
  for (std::size_t i = 0; i < cells.size(); ++i) {
    nlohmann::json groups = nlohmann::json::array();
    for (const auto& g : cells[i].groups) {
      nlohmann::json shortcuts = nlohmann::json::array();
      for (const auto& s : g.shortcuts) {
        shortcuts.push_back({{"source", s.source}, {"target", s.target}, {"op", std::string(to_string(s.op))},
                             {"alpha", s.alpha}});
      }
      groups.push_back({{"layer", g.layer}, {"target", g.target}, {"merge", std::string(to_string(g.merge))},
                        {"shortcuts", std::move(shortcuts)}});
    }
    cells_json.push_back({{"index", i},
                          {"kind", cells[i].kind == CellKind::normal ? "normal" : "transition"},
                          {"groups", std::move(groups)}});
  }
  return {{"schema", "sprout.genotype/1"},
          {"mode", std::string(to_string(mode))},
          {"opset", opset},
          {"skeleton", {{"cells_per_stage", skeleton.cells_per_stage}, {"filters", skeleton.filters},
                        {"stages", skeleton.stages}}},
          {"merge", std::string(to_string(merge))},
          {"input", input},
          {"classes", classes},
          {"task", task == Task::classification ? "classification" : "regression"},
          {"cells", std::move(cells_json)}};
}

Genotype Genotype::from_json(const nlohmann::json& doc) {
  if (doc.value("schema", "") != "sprout.genotype/1") {
    throw FormatError("genotype document has missing or unsupported schema");
  }
  Genotype g;
  g.mode = parse_search_mode(doc.at("mode").get<std::string>());
  g.opset = doc.at("opset").get<std::string>();
  opset_by_name(g.opset);
  const auto& sk = doc.at("skeleton");
  g.skeleton = {sk.at("cells_per_stage").get<int>(), sk.at("filters").get<int>(), sk.at("stages").get<int>()};
  g.merge = parse_merge_variant(doc.at("merge").get<std::string>());
  g.input = doc.at("input").get<Shape>();
  g.classes = doc.at("classes").get<int>();
  const auto task = doc.at("task").get<std::string>();
  if (task != "classification" && task != "regression") throw FormatError("genotype: unknown task " + task);
  g.task = task == "classification" ? Task::classification : Task::regression;
  for (const auto& cj : doc.at("cells")) {
    CellDescriptor c;
    c.kind = cj.at("kind").get<std::string>() == "normal" ? CellKind::normal : CellKind::transition;
    for (const auto& gj : cj.at("groups")) {
      MergeGroup group;
      group.layer = gj.at("layer").get<std::string>();
      group.target = gj.at("target").get<std::string>();
      group.merge = parse_merge_variant(gj.at("merge").get<std::string>());
      for (const auto& sj : gj.at("shortcuts")) {
        group.shortcuts.push_back({sj.at("source").get<std::string>(), sj.at("target").get<std::string>(),
                                   parse_shortcut_op(sj.at("op").get<std::string>()), sj.at("alpha").get<double>()});
      }
      c.groups.push_back(std::move(group));
    }
    g.cells.push_back(std::move(c));
  }
  if (g.cells.size() != skeleton_cells(g.skeleton).size()) {
    throw FormatError("genotype: cell count does not match skeleton");
  }
  return g;
}

}  // namespace sprout
