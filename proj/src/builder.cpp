// Copyright 2026 The Sprout Authors
// SPDX-License-Identifier: Apache-2.0

#include "sprout/builder.hpp"

#include <cmath>
#include <limits>
#include <random>

#include <fmt/core.h>

#include "sprout/autodiff.hpp"
#include "sprout/ops.hpp"

namespace sprout {

std::uint64_t fnv1a(std::string_view text, std::uint64_t basis) {
  std::uint64_t h = basis;
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

Tensor init_uniform(const Shape& shape, std::int64_t fan_in, std::uint64_t seed, const std::string& key) {
  std::mt19937_64 rng(fnv1a(key, seed * 0x9E3779B97F4A7C15ULL + 1469598103934665603ULL));
  const double bound = 1.0 / std::sqrt(static_cast<double>(std::max<std::int64_t>(1, fan_in)));
  std::uniform_real_distribution<double> dist(-bound, bound);
  Tensor t(shape);
  for (auto& v : t.data) v = dist(rng);
  return t;
}

Shape example_input_shape(const Graph& graph) {
  const auto& in = graph.node(graph.input_id());
  const auto rank = in.attr("rank", 0);
  if (rank <= 0) throw Error("input node does not record its example shape");
  Shape s;
  for (std::int64_t i = 0; i < rank; ++i) s.push_back(in.attr(fmt::format("dim{}", i), 0));
  return s;
}

GraphBuilder::GraphBuilder(Graph& graph, ParameterStore& params, std::uint64_t seed, const ParameterStore* inherit)
    : graph_(graph), params_(params), seed_(seed), inherit_(inherit) {
  if (graph_.size() > 0) {
    Shape batch_input{1};
    for (auto d : example_input_shape(graph_)) batch_input.push_back(d);
    shapes_ = infer_shapes(graph_, params_, batch_input);
  }
}

const Shape& GraphBuilder::shape(NodeId id) const {
  auto it = shapes_.find(id);
  if (it == shapes_.end()) throw Error(fmt::format("builder has no shape for node {}", id));
  return it->second;
}

NodeId GraphBuilder::emit(Node node) {
  if (node.cell == kNoCell) node.cell = cell_;
  std::vector<Shape> ins;
  for (auto in : node.inputs) ins.push_back(shape(in));
  Shape batch_input{1};
  if (node.op == OpKind::input) {
    for (std::int64_t i = 0; i < node.attr("rank", 0); ++i) batch_input.push_back(node.attr(fmt::format("dim{}", i), 0));
  }
  const Shape out = output_shape(node, ins, params_, batch_input);
  const NodeId id = anchor_ ? graph_.insert_before(*anchor_, std::move(node)) : graph_.add(std::move(node));
  shapes_[id] = out;
  return id;
}

Tensor& GraphBuilder::param(const std::string& key, const Shape& shape, std::int64_t fan_in, double fill) {
  if (!params_.contains(key)) {
    if (inherit_ && inherit_->contains(key) && inherit_->get(key).shape == shape) {
      params_.set(key, inherit_->entry(key));
    } else if (std::isnan(fill)) {
      params_.set(key, init_uniform(shape, fan_in, seed_, key));
    } else {
      params_.set(key, Tensor(shape, fill));
    }
  }
  auto& t = params_.get(key);
  if (t.shape != shape) {
    throw Error(fmt::format("parameter '{}' exists with shape {}, wanted {}", key, shape_str(t.shape), shape_str(shape)));
  }
  return t;
}

namespace {
constexpr double kRandom = std::numeric_limits<double>::quiet_NaN();
}

NodeId GraphBuilder::input(const Shape& example) {
  Node n;
  n.op = OpKind::input;
  n.attrs["rank"] = static_cast<std::int64_t>(example.size());
  for (std::size_t i = 0; i < example.size(); ++i) n.attrs[fmt::format("dim{}", i)] = example[i];
  return emit(std::move(n));
}

NodeId GraphBuilder::dense(NodeId in, std::int64_t out, const std::string& prefix) {
  const auto fan_in = shape(in).at(1);
  param(prefix + "/w", {out, fan_in}, fan_in, kRandom);
  param(prefix + "/b", {out}, fan_in, 0.0);
  Node n;
  n.op = OpKind::dense;
  n.inputs = {in};
  n.params = {prefix + "/w", prefix + "/b"};
  n.attrs["out_channels"] = out;
  return emit(std::move(n));
}

NodeId GraphBuilder::proj(NodeId in, std::int64_t out, std::int64_t stride, const std::string& prefix) {
  const auto& s = shape(in);
  const auto fan_in = s.at(1);
  Node n;
  n.op = OpKind::proj_1x1;
  n.inputs = {in};
  n.params = {prefix + "/w"};
  n.attrs["out_channels"] = out;
  if (s.size() == 4) {
    param(prefix + "/w", {out, fan_in, 1, 1}, fan_in, kRandom);
    n.attrs["stride"] = stride;
  } else {
    param(prefix + "/w", {out, fan_in}, fan_in, kRandom);
  }
  return emit(std::move(n));
}

NodeId GraphBuilder::conv(NodeId in, std::int64_t out, std::int64_t kernel, const std::string& prefix) {
  const auto c_in = shape(in).at(1);
  param(prefix + "/w", {out, c_in, kernel, kernel}, c_in * kernel * kernel, kRandom);
  Node n;
  n.op = OpKind::conv;
  n.inputs = {in};
  n.params = {prefix + "/w"};
  n.attrs = {{"kernel", kernel}, {"stride", 1}, {"out_channels", out}};
  return emit(std::move(n));
}

NodeId GraphBuilder::sep_conv(NodeId in, std::int64_t out, std::int64_t kernel, std::int64_t stride,
                              const std::string& prefix) {
  const auto c = shape(in).at(1);
  param(prefix + "/dw", {c, 1, kernel, kernel}, kernel * kernel, kRandom);
  param(prefix + "/pw", {out, c, 1, 1}, c, kRandom);
  Node n;
  n.op = OpKind::sep_conv;
  n.inputs = {in};
  n.params = {prefix + "/dw", prefix + "/pw"};
  n.attrs = {{"kernel", kernel}, {"stride", stride}, {"dilation", 1}, {"out_channels", out}};
  return emit(std::move(n));
}

NodeId GraphBuilder::dilated_conv(NodeId in, std::int64_t kernel, const std::string& prefix) {
  const auto c = shape(in).at(1);
  param(prefix + "/dw", {c, 1, kernel, kernel}, kernel * kernel, kRandom);
  param(prefix + "/pw", {c, c, 1, 1}, c, kRandom);
  Node n;
  n.op = OpKind::dilated_conv;
  n.inputs = {in};
  n.params = {prefix + "/dw", prefix + "/pw"};
  n.attrs = {{"kernel", kernel}, {"stride", 1}, {"dilation", 2}, {"out_channels", c}};
  return emit(std::move(n));
}

NodeId GraphBuilder::batch_norm(NodeId in, const std::string& prefix) {
  const auto c = shape(in).at(1);
  param(prefix + "/gamma", {c}, 1, 1.0);
  param(prefix + "/beta", {c}, 1, 0.0);
  param(prefix + "/running_mean", {c}, 1, 0.0);
  param(prefix + "/running_var", {c}, 1, 1.0);
  Node n;
  n.op = OpKind::batch_norm;
  n.inputs = {in};
  n.params = {prefix + "/gamma", prefix + "/beta", prefix + "/running_mean", prefix + "/running_var"};
  return emit(std::move(n));
}

NodeId GraphBuilder::unary(OpKind op, NodeId in) {
  Node n;
  n.op = op;
  n.inputs = {in};
  return emit(std::move(n));
}

NodeId GraphBuilder::pool(OpKind op, NodeId in, std::int64_t kernel, std::int64_t stride) {
  Node n;
  n.op = op;
  n.inputs = {in};
  n.attrs = {{"kernel", kernel}, {"stride", stride}};
  return emit(std::move(n));
}

NodeId GraphBuilder::gate(NodeId in, const std::string& key, double init) {
  param(key, {1}, 1, init);
  Node n;
  n.op = OpKind::scalar_gate;
  n.inputs = {in};
  n.params = {key};
  return emit(std::move(n));
}

NodeId GraphBuilder::weighted_sum(const std::vector<NodeId>& ins, const std::vector<std::string>& keys,
                                  const std::vector<double>& init) {
  for (std::size_t i = 0; i < keys.size(); ++i) param(keys[i], {1}, 1, init.at(i));
  Node n;
  n.op = OpKind::weighted_sum;
  n.inputs = ins;
  n.params = keys;
  return emit(std::move(n));
}

NodeId GraphBuilder::nary(OpKind op, const std::vector<NodeId>& ins) {
  Node n;
  n.op = op;
  n.inputs = ins;
  return emit(std::move(n));
}

NodeId GraphBuilder::loss(OpKind op, NodeId prediction) {
  Node n;
  n.op = op;
  n.inputs = {prediction};
  // The loss reduces over the batch, so its shape does not follow the input.
  const auto id = anchor_ ? graph_.insert_before(*anchor_, std::move(n)) : graph_.add(std::move(n));
  shapes_[id] = {1};
  return id;
}

NodeId GraphBuilder::adapter(NodeId in, const Shape& target, const std::string& prefix) {
  const Shape src = shape(in);
  if (src == target) return in;
  if (src.size() != target.size()) {
    throw Error(fmt::format("cannot adapt shape {} to {}", shape_str(src), shape_str(target)));
  }
  std::int64_t stride = 1;
  if (src.size() == 4) {
    if (src[2] % target[2] != 0 || src[3] % target[3] != 0 || src[2] / target[2] != src[3] / target[3]) {
      throw Error(fmt::format("cannot adapt spatial shape {} to {}", shape_str(src), shape_str(target)));
    }
    stride = src[2] / target[2];
  }
  auto mark = [this](NodeId id) {
    graph_.node(id).meta["adapter"] = "1";
    return id;
  };
  NodeId x = mark(unary(OpKind::relu, in));
  x = mark(proj(x, target[1], stride, prefix + "/proj"));
  return mark(batch_norm(x, prefix + "/bn"));
}

NodeId GraphBuilder::shortcut_op(ShortcutOp op, NodeId in, const std::string& prefix, bool normalize) {
  const auto rank = shape(in).size();
  const bool image = op != ShortcutOp::dense_relu && op != ShortcutOp::dense_tanh && op != ShortcutOp::avg_pool_1d &&
                     op != ShortcutOp::identity;
  if (image && rank != 4) throw Error(fmt::format("shortcut op {} needs NCHW input", to_string(op)));
  if ((op == ShortcutOp::dense_relu || op == ShortcutOp::dense_tanh || op == ShortcutOp::avg_pool_1d) && rank != 2) {
    throw Error(fmt::format("shortcut op {} needs [batch, width] input", to_string(op)));
  }
  const auto c = shape(in).at(1);
  NodeId x = in;
  switch (op) {
    case ShortcutOp::dense_relu:
      x = unary(OpKind::relu, dense(in, c, prefix + "/dense"));
      break;
    case ShortcutOp::dense_tanh:
      x = unary(OpKind::tanh, dense(in, c, prefix + "/dense"));
      break;
    case ShortcutOp::identity:
      x = unary(OpKind::identity, in);
      break;
    case ShortcutOp::avg_pool_1d:
      x = pool(OpKind::avg_pool, in, 3, 1);
      break;
    case ShortcutOp::sep_conv_3x3:
    case ShortcutOp::sep_conv_5x5: {
      const std::int64_t k = op == ShortcutOp::sep_conv_3x3 ? 3 : 5;
      x = unary(OpKind::relu, in);
      x = batch_norm(sep_conv(x, c, k, 1, prefix + "/sep1"), prefix + "/bn1");
      x = unary(OpKind::relu, x);
      x = batch_norm(sep_conv(x, c, k, 1, prefix + "/sep2"), prefix + "/bn2");
      break;
    }
    case ShortcutOp::dil_conv_3x3:
    case ShortcutOp::dil_conv_5x5: {
      const std::int64_t k = op == ShortcutOp::dil_conv_3x3 ? 3 : 5;
      x = unary(OpKind::relu, in);
      x = batch_norm(dilated_conv(x, k, prefix + "/dil"), prefix + "/bn1");
      break;
    }
    case ShortcutOp::max_pool_3x3:
      x = pool(OpKind::max_pool, in, 3, 1);
      break;
    case ShortcutOp::avg_pool_3x3:
      x = pool(OpKind::avg_pool, in, 3, 1);
      break;
  }
  if (normalize) x = batch_norm(x, prefix + "/bn");
  return x;
}

}  // namespace sprout
