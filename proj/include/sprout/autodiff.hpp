// Copyright 2026 The Sprout Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <map>
#include <string>
#include <unordered_map>

#include "sprout/graph.hpp"
#include "sprout/ops.hpp"
#include "sprout/params.hpp"

namespace sprout {

struct ForwardResult {
  std::unordered_map<NodeId, Tensor> activations;
  double loss = 0.0;
  Mode mode = Mode::eval;
  RunningUpdates running;

  const Tensor& at(NodeId id) const;
};

struct Gradients {
  /// One entry per trainable key referenced by the graph.
  std::map<std::string, Tensor> params;
  /// Gradient of the objective w.r.t. each node output that received one.
  std::unordered_map<NodeId, Tensor> nodes;
};

/// Evaluates every node in order. Throws NumericError naming the first node
/// whose output is non-finite.
ForwardResult forward(const Graph& graph, const ParameterStore& params, const Batch& batch,
                      Mode mode);

/// Reverse sweep seeded with d(loss)/d(loss) = 1.
Gradients backward(const Graph& graph, const ParameterStore& params, const Batch& batch,
                   const ForwardResult& fwd);

/// Reverse sweep seeded with arbitrary output gradients.
Gradients backward_from(const Graph& graph, const ParameterStore& params, const Batch& batch,
                        const ForwardResult& fwd,
                        const std::unordered_map<NodeId, Tensor>& seeds);

}  // namespace sprout

namespace sprout {

/// Output shape of every node for a batch whose input has `batch_input` shape.
std::unordered_map<NodeId, Shape> infer_shapes(const Graph& graph, const ParameterStore& params,
                                               const Shape& batch_input);

}  // namespace sprout
