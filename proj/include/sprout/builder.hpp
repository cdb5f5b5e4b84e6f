// Copyright 2026 The Sprout Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>

#include "sprout/genotype.hpp"
#include "sprout/graph.hpp"
#include "sprout/params.hpp"

namespace sprout {

/// Fan-in-scaled uniform U(-1/sqrt(fan_in), 1/sqrt(fan_in)). The stream is
/// keyed by (seed, key) so a parameter's initial value does not depend on
/// construction order.
Tensor init_uniform(const Shape& shape, std::int64_t fan_in, std::uint64_t seed, const std::string& key);

std::uint64_t fnv1a(std::string_view text, std::uint64_t basis = 1469598103934665603ULL);

/// Example shape recorded on the graph's input node.
Shape example_input_shape(const Graph& graph);

/// Appends (or inserts before an anchor) nodes and their parameters while
/// tracking per-example shapes. Parameters already present in `inherit` with
/// a matching shape are copied instead of initialized.
class GraphBuilder {
 public:
  GraphBuilder(Graph& graph, ParameterStore& params, std::uint64_t seed,
               const ParameterStore* inherit = nullptr);

  void set_anchor(std::optional<NodeId> anchor) { anchor_ = anchor; }
  void set_cell(int cell) { cell_ = cell; }

  const Shape& shape(NodeId id) const;
  NodeId emit(Node node);

  NodeId input(const Shape& example);
  NodeId dense(NodeId in, std::int64_t out, const std::string& prefix);
  NodeId proj(NodeId in, std::int64_t out, std::int64_t stride, const std::string& prefix);
  NodeId conv(NodeId in, std::int64_t out, std::int64_t kernel, const std::string& prefix);
  NodeId sep_conv(NodeId in, std::int64_t out, std::int64_t kernel, std::int64_t stride,
                  const std::string& prefix);
  NodeId dilated_conv(NodeId in, std::int64_t kernel, const std::string& prefix);
  NodeId batch_norm(NodeId in, const std::string& prefix);
  NodeId unary(OpKind op, NodeId in);
  NodeId pool(OpKind op, NodeId in, std::int64_t kernel, std::int64_t stride);
  NodeId gate(NodeId in, const std::string& key, double init);
  NodeId weighted_sum(const std::vector<NodeId>& ins, const std::vector<std::string>& keys,
                      const std::vector<double>& init);
  NodeId nary(OpKind op, const std::vector<NodeId>& ins);
  NodeId loss(OpKind op, NodeId prediction);

  /// Input adapter mapping `in` to the per-example `target` shape:
  /// relu -> strided projection -> batch norm.
  NodeId adapter(NodeId in, const Shape& target, const std::string& prefix);
  /// One shortcut operation applied to `in`, followed by batch norm when
  /// `normalize` is set. `in` must already have the target shape.
  NodeId shortcut_op(ShortcutOp op, NodeId in, const std::string& prefix, bool normalize);

  Tensor& param(const std::string& key, const Shape& shape, std::int64_t fan_in, double fill_or_nan);

 private:
  Graph& graph_;
  ParameterStore& params_;
  std::uint64_t seed_;
  const ParameterStore* inherit_;
  std::optional<NodeId> anchor_;
  int cell_ = kNoCell;
  std::unordered_map<NodeId, Shape> shapes_;
};

}  // namespace sprout
