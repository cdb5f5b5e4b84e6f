// Copyright 2026 The Sprout Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <climits>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "json.hpp"
#include "sprout/error.hpp"

namespace sprout {

enum class OpKind {
  input,
  parameter,
  dense,
  conv,
  sep_conv,
  dilated_conv,
  max_pool,
  avg_pool,
  global_avg_pool,
  identity,
  add,
  mul,
  concat,
  proj_1x1,
  batch_norm,
  relu,
  tanh,
  stop_gradient,
  stop_forward,
  scalar_gate,
  weighted_sum,
  softmax_xent,
  mse,
};

std::string_view to_string(OpKind kind);
OpKind parse_op_kind(std::string_view name);
bool is_loss(OpKind kind);

/// Where a node sits in the cell structure. `layer` nodes and `cell_output`
/// nodes are the candidates for shortcut inputs.
enum class Role { none, layer, cell_output };

std::string_view to_string(Role role);
Role parse_role(std::string_view name);

inline constexpr int kStemCell = -1;
inline constexpr int kNoCell = INT_MIN;

struct Node {
  NodeId id = -1;
  OpKind op = OpKind::identity;
  std::vector<NodeId> inputs;
  std::vector<std::string> params;
  std::map<std::string, std::int64_t> attrs;
  bool is_out = false;
  int cell = kNoCell;
  Role role = Role::none;
  std::string tag;
  std::map<std::string, std::string> meta;

  std::int64_t attr(const std::string& name, std::int64_t fallback) const;
  std::optional<std::string> meta_value(const std::string& key) const;

  bool operator==(const Node&) const = default;
};

/// Nodes stored in topological order. Ids are stable across edits; positions
/// are not.
class Graph {
 public:
  Graph() = default;

  NodeId add(Node node);
  NodeId insert_before(NodeId anchor, Node node);
  void erase(const std::vector<NodeId>& ids);

  const std::vector<Node>& nodes() const { return nodes_; }
  std::size_t size() const { return nodes_.size(); }
  bool contains(NodeId id) const { return index_.count(id) != 0; }
  std::size_t position(NodeId id) const;
  const Node& node(NodeId id) const;
  Node& node(NodeId id);

  std::vector<NodeId> consumers(NodeId id) const;
  /// Replaces every use of `from` as an input with `to`.
  void replace_uses(NodeId from, NodeId to);

  NodeId input_id() const;
  NodeId loss_id() const;
  /// The node feeding the loss.
  NodeId prediction_id() const;
  std::optional<NodeId> find_tag(int cell, const std::string& tag) const;
  std::optional<NodeId> cell_output(int cell) const;
  std::vector<int> cells() const;

  /// Checks ids, topological order and arity.
  void validate() const;

  nlohmann::json to_json() const;
  static Graph from_json(const nlohmann::json& doc);
  std::string to_dot() const;

  bool operator==(const Graph& other) const { return nodes_ == other.nodes_; }

 private:
  void reindex();

  std::vector<Node> nodes_;
  std::unordered_map<NodeId, std::size_t> index_;
  NodeId next_id_ = 0;
};

}  // namespace sprout
