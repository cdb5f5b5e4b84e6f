// Copyright 2026 The Sprout Authors
// SPDX-License-Identifier: Apache-2.0

#include "sprout/autodiff.hpp"

#include <fmt/core.h>

namespace sprout {

const Tensor& ForwardResult::at(NodeId id) const {
  auto it = activations.find(id);
  if (it == activations.end()) throw Error(fmt::format("no activation recorded for node {}", id));
  return it->second;
}

ForwardResult forward(const Graph& graph, const ParameterStore& params, const Batch& batch, Mode mode) {
  ForwardResult result;
  result.mode = mode;
  result.activations.reserve(graph.size());
  std::vector<const Tensor*> inputs;
  for (const auto& node : graph.nodes()) {
    inputs.clear();
    for (auto in : node.inputs) inputs.push_back(&result.at(in));
    Tensor value = eval_node(node, inputs, params, mode, batch, mode == Mode::train ? &result.running : nullptr);
    if (!value.all_finite()) {
      throw NumericError(node.id, fmt::format("non-finite value produced by node {} ({})", node.id,
                                              to_string(node.op)));
    }
    result.activations.emplace(node.id, std::move(value));
  }
  result.loss = result.at(graph.loss_id()).data.at(0);
  return result;
}

Gradients backward(const Graph& graph, const ParameterStore& params, const Batch& batch,
                   const ForwardResult& fwd) {
  std::unordered_map<NodeId, Tensor> seeds;
  seeds.emplace(graph.loss_id(), Tensor::scalar(1.0));
  return backward_from(graph, params, batch, fwd, seeds);
}

Gradients backward_from(const Graph& graph, const ParameterStore& params, const Batch& batch,
                        const ForwardResult& fwd, const std::unordered_map<NodeId, Tensor>& seeds) {
  Gradients grads;
  for (const auto& node : graph.nodes()) {
    for (const auto& key : node.params) {
      const auto& e = params.entry(key);
      if (e.trainable && !grads.params.count(key)) grads.params.emplace(key, zeros_like(e.value));
    }
  }
  for (const auto& [id, g] : seeds) {
    const auto& act = fwd.at(id);
    if (act.shape != g.shape) {
      throw Error(fmt::format("seed gradient for node {} has shape {}, activation has {}", id,
                              shape_str(g.shape), shape_str(act.shape)));
    }
    grads.nodes[id] = g;
  }

  const auto& nodes = graph.nodes();
  std::vector<const Tensor*> inputs;
  for (auto it = nodes.rbegin(); it != nodes.rend(); ++it) {
    const auto& node = *it;
    auto git = grads.nodes.find(node.id);
    if (git == grads.nodes.end()) continue;
    inputs.clear();
    for (auto in : node.inputs) {
      auto ait = fwd.activations.find(in);
      if (ait == fwd.activations.end()) {
        throw Error(fmt::format("gradient requested through node {} but activation of input {} is missing",
                                node.id, in));
      }
      inputs.push_back(&ait->second);
    }
    auto local = backward_node(node, inputs, fwd.at(node.id), git->second, params, fwd.mode, batch);
    for (std::size_t k = 0; k < node.params.size(); ++k) {
      if (!local.params[k]) continue;
      auto pit = grads.params.find(node.params[k]);
      if (pit == grads.params.end()) continue;
      add_inplace(pit->second, *local.params[k]);
    }
    for (std::size_t k = 0; k < node.inputs.size(); ++k) {
      if (!local.inputs[k]) continue;
      auto [slot, inserted] = grads.nodes.try_emplace(node.inputs[k]);
      if (inserted) {
        slot->second = std::move(*local.inputs[k]);
      } else {
        add_inplace(slot->second, *local.inputs[k]);
      }
    }
  }
  return grads;
}

}  // namespace sprout

namespace sprout {

std::unordered_map<NodeId, Shape> infer_shapes(const Graph& graph, const ParameterStore& params,
                                               const Shape& batch_input) {
  std::unordered_map<NodeId, Shape> shapes;
  std::vector<Shape> ins;
  for (const auto& node : graph.nodes()) {
    ins.clear();
    for (auto in : node.inputs) ins.push_back(shapes.at(in));
    shapes.emplace(node.id, output_shape(node, ins, params, batch_input));
  }
  return shapes;
}

}  // namespace sprout
