// Copyright 2026 The Sprout Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "sprout/graph.hpp"
#include "sprout/params.hpp"
#include "sprout/tensor.hpp"

namespace sprout {

enum class Mode { train, eval };

struct Batch {
  Tensor inputs;
  Tensor targets;
  std::int64_t size = 0;
};

inline constexpr double kBatchNormEps = 1e-5;
inline constexpr double kBatchNormMomentum = 0.9;

/// Output shape of `node` given its input shapes. `batch_input` is the shape
/// an `input` node produces. Throws ShapeError on any mismatch.
Shape output_shape(const Node& node, std::span<const Shape> inputs, const ParameterStore& params,
                   const Shape& batch_input);

/// Running-statistic updates collected from batch_norm nodes in train mode.
using RunningUpdates = std::map<std::string, Tensor>;

Tensor eval_node(const Node& node, std::span<const Tensor* const> inputs,
                 const ParameterStore& params, Mode mode, const Batch& batch,
                 RunningUpdates* running = nullptr);

/// Vector-Jacobian product of one node. Entries are empty when the node
/// passes no gradient to that input or parameter.
struct NodeGradients {
  std::vector<std::optional<Tensor>> inputs;
  std::vector<std::optional<Tensor>> params;
};

NodeGradients backward_node(const Node& node, std::span<const Tensor* const> inputs,
                            const Tensor& output, const Tensor& grad_output,
                            const ParameterStore& params, Mode mode, const Batch& batch);

}  // namespace sprout
