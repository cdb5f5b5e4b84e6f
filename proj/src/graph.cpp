// Copyright 2026 The Sprout Authors
// SPDX-License-Identifier: Apache-2.0

#include "sprout/graph.hpp"

#include <algorithm>
#include <array>
#include <set>
#include <sstream>
#include <unordered_set>
#include <utility>

#include <fmt/core.h>

namespace sprout {
namespace {

constexpr std::array<std::pair<OpKind, std::string_view>, 23> kOpNames{{
    {OpKind::input, "input"},
    {OpKind::parameter, "parameter"},
    {OpKind::dense, "dense"},
    {OpKind::conv, "conv"},
    {OpKind::sep_conv, "sep_conv"},
    {OpKind::dilated_conv, "dilated_conv"},
    {OpKind::max_pool, "max_pool"},
    {OpKind::avg_pool, "avg_pool"},
    {OpKind::global_avg_pool, "global_avg_pool"},
    {OpKind::identity, "identity"},
    {OpKind::add, "add"},
    {OpKind::mul, "mul"},
    {OpKind::concat, "concat"},
    {OpKind::proj_1x1, "proj_1x1"},
    {OpKind::batch_norm, "batch_norm"},
    {OpKind::relu, "relu"},
    {OpKind::tanh, "tanh"},
    {OpKind::stop_gradient, "stop_gradient"},
    {OpKind::stop_forward, "stop_forward"},
    {OpKind::scalar_gate, "scalar_gate"},
    {OpKind::weighted_sum, "weighted_sum"},
    {OpKind::softmax_xent, "softmax_xent"},
    {OpKind::mse, "mse"},
}};

// Expected (inputs, params); -1 means "one or more" / "one per input".
struct Arity {
  int inputs;
  int params;
};

Arity arity(OpKind kind) {
  switch (kind) {
    case OpKind::input: return {0, 0};
    case OpKind::parameter: return {0, 1};
    case OpKind::dense: return {1, 2};
    case OpKind::conv: return {1, 1};
    case OpKind::sep_conv:
    case OpKind::dilated_conv: return {1, 2};
    case OpKind::proj_1x1: return {1, 1};
    case OpKind::batch_norm: return {1, 4};
    case OpKind::scalar_gate: return {1, 1};
    case OpKind::add:
    case OpKind::concat: return {-1, 0};
    case OpKind::weighted_sum: return {-1, -1};
    case OpKind::mul: return {2, 0};
    default: return {1, 0};
  }
}

}  // namespace

std::string_view to_string(OpKind kind) {
  for (const auto& [k, name] : kOpNames) {
    if (k == kind) return name;
  }
  return "unknown";
}

OpKind parse_op_kind(std::string_view name) {
  for (const auto& [k, n] : kOpNames) {
    if (n == name) return k;
  }
  throw Error(fmt::format("unknown op_kind '{}'", name));
}

bool is_loss(OpKind kind) { return kind == OpKind::softmax_xent || kind == OpKind::mse; }

std::string_view to_string(Role role) {
  switch (role) {
    case Role::layer: return "layer";
    case Role::cell_output: return "cell_output";
    default: return "none";
  }
}

Role parse_role(std::string_view name) {
  if (name == "layer") return Role::layer;
  if (name == "cell_output") return Role::cell_output;
  if (name == "none") return Role::none;
  throw Error(fmt::format("unknown role '{}'", name));
}

std::int64_t Node::attr(const std::string& name, std::int64_t fallback) const {
  auto it = attrs.find(name);
  return it == attrs.end() ? fallback : it->second;
}

std::optional<std::string> Node::meta_value(const std::string& key) const {
  auto it = meta.find(key);
  if (it == meta.end()) return std::nullopt;
  return it->second;
}

NodeId Graph::add(Node node) {
  if (node.id < 0) node.id = next_id_;
  if (contains(node.id)) throw Error(fmt::format("duplicate node id {}", node.id));
  next_id_ = std::max(next_id_, node.id + 1);
  index_[node.id] = nodes_.size();
  nodes_.push_back(std::move(node));
  return nodes_.back().id;
}

NodeId Graph::insert_before(NodeId anchor, Node node) {
  const auto pos = position(anchor);
  if (node.id < 0) node.id = next_id_;
  if (contains(node.id)) throw Error(fmt::format("duplicate node id {}", node.id));
  next_id_ = std::max(next_id_, node.id + 1);
  const NodeId id = node.id;
  nodes_.insert(nodes_.begin() + static_cast<std::ptrdiff_t>(pos), std::move(node));
  reindex();
  return id;
}

void Graph::erase(const std::vector<NodeId>& ids) {
  std::unordered_set<NodeId> doomed(ids.begin(), ids.end());
  std::erase_if(nodes_, [&](const Node& n) { return doomed.count(n.id) != 0; });
  reindex();
}

void Graph::reindex() {
  index_.clear();
  for (std::size_t i = 0; i < nodes_.size(); ++i) index_[nodes_[i].id] = i;
}

std::size_t Graph::position(NodeId id) const {
  auto it = index_.find(id);
  if (it == index_.end()) throw Error(fmt::format("node {} not found", id));
  return it->second;
}

const Node& Graph::node(NodeId id) const { return nodes_[position(id)]; }
Node& Graph::node(NodeId id) { return nodes_[position(id)]; }

std::vector<NodeId> Graph::consumers(NodeId id) const {
  std::vector<NodeId> out;
  for (const auto& n : nodes_) {
    if (std::find(n.inputs.begin(), n.inputs.end(), id) != n.inputs.end()) out.push_back(n.id);
  }
  return out;
}

void Graph::replace_uses(NodeId from, NodeId to) {
  for (auto& n : nodes_) {
    for (auto& in : n.inputs) {
      if (in == from) in = to;
    }
  }
}

NodeId Graph::input_id() const {
  for (const auto& n : nodes_) {
    if (n.op == OpKind::input) return n.id;
  }
  throw Error("graph has no input node");
}

NodeId Graph::loss_id() const {
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    if (is_loss(it->op)) return it->id;
  }
  throw Error("graph has no loss node");
}

NodeId Graph::prediction_id() const { return node(loss_id()).inputs.at(0); }

std::optional<NodeId> Graph::find_tag(int cell, const std::string& tag) const {
  for (const auto& n : nodes_) {
    if (n.cell == cell && n.tag == tag) return n.id;
  }
  return std::nullopt;
}

std::optional<NodeId> Graph::cell_output(int cell) const {
  for (const auto& n : nodes_) {
    if (n.cell == cell && n.role == Role::cell_output) return n.id;
  }
  return std::nullopt;
}

std::vector<int> Graph::cells() const {
  std::set<int> seen;
  for (const auto& n : nodes_) {
    if (n.cell >= 0) seen.insert(n.cell);
  }
  return {seen.begin(), seen.end()};
}

void Graph::validate() const {
  std::unordered_set<NodeId> earlier;
  for (const auto& n : nodes_) {
    for (auto in : n.inputs) {
      if (!earlier.count(in)) {
        throw Error(fmt::format("node {} ({}) reads node {} which is not topologically earlier",
                                n.id, to_string(n.op), in));
      }
    }
    const auto a = arity(n.op);
    const int nin = static_cast<int>(n.inputs.size());
    const int npar = static_cast<int>(n.params.size());
    const bool inputs_ok = a.inputs < 0 ? nin >= 1 : nin == a.inputs;
    const bool params_ok = a.params < 0 ? npar == nin : npar == a.params;
    if (!inputs_ok || !params_ok) {
      throw Error(fmt::format("node {} ({}) has {} inputs and {} params, arity mismatch", n.id,
                              to_string(n.op), nin, npar));
    }
    if (n.is_out && n.role != Role::cell_output) {
      throw Error(fmt::format("node {} is flagged is_out but is not a cell boundary", n.id));
    }
    earlier.insert(n.id);
  }
}

nlohmann::json Graph::to_json() const {
  nlohmann::json nodes = nlohmann::json::array();
  for (const auto& n : nodes_) {
    nlohmann::json j;
    j["id"] = n.id;
    j["op"] = std::string(to_string(n.op));
    j["inputs"] = n.inputs;
    j["params"] = n.params;
    j["attrs"] = n.attrs;
    j["is_out"] = n.is_out;
    if (n.cell != kNoCell) j["cell"] = n.cell;
    j["role"] = std::string(to_string(n.role));
    if (!n.tag.empty()) j["tag"] = n.tag;
    if (!n.meta.empty()) j["meta"] = n.meta;
    nodes.push_back(std::move(j));
  }
  return {{"schema", "sprout.graph/1"}, {"nodes", std::move(nodes)}};
}

Graph Graph::from_json(const nlohmann::json& doc) {
  if (doc.value("schema", "") != "sprout.graph/1") {
    throw FormatError("graph document has missing or unsupported schema");
  }
  Graph g;
  for (const auto& j : doc.at("nodes")) {
    Node n;
    n.id = j.at("id").get<NodeId>();
    n.op = parse_op_kind(j.at("op").get<std::string>());
    n.inputs = j.at("inputs").get<std::vector<NodeId>>();
    n.params = j.at("params").get<std::vector<std::string>>();
    n.attrs = j.at("attrs").get<std::map<std::string, std::int64_t>>();
    n.is_out = j.at("is_out").get<bool>();
    n.cell = j.value("cell", kNoCell);
    n.role = parse_role(j.value("role", "none"));
    n.tag = j.value("tag", "");
    if (j.contains("meta")) n.meta = j.at("meta").get<std::map<std::string, std::string>>();
    g.add(std::move(n));
  }
  g.validate();
  return g;
}

std::string Graph::to_dot() const {
  std::ostringstream out;
  out << "digraph sprout {\n  rankdir=TB;\n  node [shape=box, fontname=\"Helvetica\"];\n";
  for (const auto& n : nodes_) {
    std::string label = fmt::format("{}: {}", n.id, to_string(n.op));
    if (!n.tag.empty()) label += fmt::format("\\n{}", n.tag);
    if (n.cell >= 0) label += fmt::format("\\ncell {}", n.cell);
    std::string style;
    if (n.op == OpKind::stop_gradient || n.op == OpKind::stop_forward) {
      style = ", style=dashed, color=red";
    } else if (n.is_out) {
      style = ", style=bold";
    }
    out << fmt::format("  n{} [label=\"{}\"{}];\n", n.id, label, style);
  }
  for (const auto& n : nodes_) {
    for (auto in : n.inputs) out << fmt::format("  n{} -> n{};\n", in, n.id);
  }
  out << "}\n";
  return out.str();
}

}  // namespace sprout
