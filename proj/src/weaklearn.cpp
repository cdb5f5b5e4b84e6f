// Copyright 2026 The Sprout Authors
// SPDX-License-Identifier: Apache-2.0

#include "sprout/weaklearn.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <fmt/core.h>

#include "json.hpp"
#include "sprout/builder.hpp"
#include "sprout/log.hpp"

namespace sprout {
namespace {

NodeId previous_output(const Graph& graph, int cell, int back) {
  // Cell -1 is the stem; a missing cell two back falls back to the previous one.
  const int c = cell - back;
  if (c >= kStemCell) {
    if (auto id = graph.cell_output(c)) return *id;
  }
  return back > 1 ? previous_output(graph, cell, back - 1) : -1;
}

int next_round(const Graph& graph, int cell) {
  int r = 0;
  while (graph.find_tag(cell, fmt::format("g{}", r))) ++r;
  return r;
}

}  // namespace

InputScope enumerate_inputs(const Graph& graph, NodeId target, SearchMode) {
  if (!graph.contains(target)) throw Error(fmt::format("boost target {} not found", target));
  const auto& xk = graph.node(target);
  if (!xk.is_out) throw Error(fmt::format("node {} is not a boostable cell output", target));
  const auto limit = graph.position(target);
  InputScope scope;
  auto push = [&](NodeId id, const std::string& name) {
    if (id < 0 || graph.position(id) >= limit) return;
    if (std::find(scope.eligible.begin(), scope.eligible.end(), id) != scope.eligible.end()) return;
    scope.eligible.push_back(id);
    scope.names.push_back(name);
  };
  if (xk.cell >= 0) {
    push(previous_output(graph, xk.cell, 2), "in0");
    push(previous_output(graph, xk.cell, 1), "in1");
  }
  for (const auto& n : graph.nodes()) {
    if (n.id == target) break;
    if (n.cell == xk.cell && n.role == Role::layer) push(n.id, n.tag);
  }
  return scope;
}

NodeId resolve_source(const Graph& graph, int cell, const std::string& name) {
  NodeId id = -1;
  if (name == "in0") {
    id = previous_output(graph, cell, 2);
  } else if (name == "in1") {
    id = previous_output(graph, cell, 1);
  } else if (auto found = graph.find_tag(cell, name)) {
    id = *found;
  }
  if (id < 0) throw Error(fmt::format("cell {} has no layer named '{}'", cell, name));
  return id;
}

std::vector<std::string> CandidateSet::alpha_keys() const {
  std::vector<std::string> keys;
  for (const auto& t : terms) keys.push_back(t.weight_key);
  return keys;
}

AugmentedModel initialize_candidates(const Graph& graph, const ParameterStore& params, const NodePredicate& is_out,
                                     const CandidateOptions& options) {
  if (options.opset.empty()) throw ConfigError("candidate opset is empty");
  AugmentedModel model{graph, params, {}, {}};
  std::vector<NodeId> targets;
  for (const auto& n : graph.nodes()) {
    if (n.is_out && is_out(n)) targets.push_back(n.id);
  }
  for (NodeId target : targets) {
    Graph& g = model.graph;
    const auto scope = enumerate_inputs(g, target, options.mode);
    if (scope.eligible.empty()) {
      warn(fmt::format("boost target {} has no eligible inputs; skipped", target));
      continue;
    }
    CandidateSet cand;
    cand.target_node = target;
    cand.cell = g.node(target).cell;
    cand.round = next_round(g, cand.cell);
    cand.prefix = fmt::format("c{}/g{}", cand.cell, cand.round);
    cand.lambda = options.lambda;

    if (g.node(target).op == OpKind::add) {
      cand.merge_node = target;
    } else {
      const auto pos = g.position(target);
      if (pos + 1 >= g.size()) throw Error(fmt::format("boost target {} has no consumer", target));
      Node wrap;
      wrap.op = OpKind::add;
      wrap.inputs = {target};
      wrap.cell = g.node(target).cell;
      const NodeId wrap_id = g.insert_before(g.nodes()[pos + 1].id, std::move(wrap));
      g.replace_uses(target, wrap_id);
      g.node(wrap_id).inputs = {target};
      cand.merge_node = wrap_id;
    }

    GraphBuilder b(g, model.params, options.seed);
    b.set_anchor(target);
    b.set_cell(cand.cell);
    const Shape target_shape = b.shape(target);
    std::vector<NodeId> outputs;
    std::vector<double> init;
    for (std::size_t i = 0; i < scope.eligible.size(); ++i) {
      const auto& src = scope.names[i];
      const auto src_prefix = fmt::format("{}/{}", cand.prefix, src);
      const NodeId guard = options.joint ? b.gate(scope.eligible[i], src_prefix + "/gate", 0.0)
                                         : b.unary(OpKind::stop_gradient, scope.eligible[i]);
      const NodeId adapted = b.adapter(guard, target_shape, src_prefix + "/adapt");
      for (auto op : options.opset) {
        const auto term_prefix = fmt::format("{}/{}", src_prefix, to_string(op));
        const NodeId out = b.shortcut_op(op, adapted, term_prefix, options.normalize);
        auto& node = g.node(out);
        node.meta["src"] = src;
        node.meta["op"] = std::string(to_string(op));
        ShortcutTerm term;
        term.input_node = scope.eligible[i];
        term.source = src;
        term.op = op;
        term.weight_key = term_prefix + "/alpha";
        if (options.normalize) {
          for (const char* leaf : {"gamma", "beta", "running_mean", "running_var"}) {
            term.bn_keys.push_back(fmt::format("{}/bn/{}", term_prefix, leaf));
          }
        }
        term.output_node = out;
        term.guard_node = guard;
        cand.terms.push_back(std::move(term));
        outputs.push_back(out);
        init.push_back(options.alpha_init);
      }
    }
    cand.candidate_node = b.weighted_sum(outputs, cand.alpha_keys(), init);
    g.node(cand.candidate_node).meta["candidate"] = cand.prefix;
    NodeId merged = cand.candidate_node;
    if (!options.joint) {
      cand.sf_node = b.unary(OpKind::stop_forward, cand.candidate_node);
      merged = cand.sf_node;
    }
    g.node(cand.merge_node).inputs.push_back(merged);
    model.extra_loss.push_back({cand.lambda, cand.alpha_keys()});
    model.candidates.push_back(std::move(cand));
  }
  return model;
}

WeakLearnResult weak_learn(AugmentedModel& model, const ParameterStore& parent_params, const Dataset& data,
                           const WeakLearnOptions& options) {
  TrainOptions opts = options.train;
  opts.l1.insert(opts.l1.end(), model.extra_loss.begin(), model.extra_loss.end());
  if (options.freeze_model) {
    for (const auto& key : parent_params.keys()) opts.frozen.insert(key);
  }
  WeakLearnResult result;
  try {
    result.stats = train(model.graph, model.params, data, opts);
  } catch (const NumericError& e) {
    result.diverged = true;
    result.message = fmt::format("weak learning diverged at node {}: {}", e.node(), e.what());
  }
  return result;
}

std::vector<double> candidate_alphas(const CandidateSet& candidate, const ParameterStore& params) {
  std::vector<double> out;
  for (const auto& t : candidate.terms) {
    if (!params.contains(t.weight_key)) throw Error(fmt::format("missing shortcut weight '{}'", t.weight_key));
    out.push_back(params.get(t.weight_key).data.at(0));
  }
  return out;
}

std::vector<std::size_t> select_top(const std::vector<double>& alpha, int i_max) {
  if (i_max < 1) throw ConfigError(fmt::format("I_max must be at least 1, got {}", i_max));
  std::vector<std::size_t> order(alpha.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return std::abs(alpha[a]) > std::abs(alpha[b]); });
  if (order.size() < static_cast<std::size_t>(i_max)) {
    warn(fmt::format("only {} shortcut terms for I_max = {}; selecting all", order.size(), i_max));
  } else {
    order.resize(static_cast<std::size_t>(i_max));
  }
  return order;
}

void write_candidate_report(std::ostream& out, const std::vector<CandidateSet>& candidates,
                            const ParameterStore& params, int i_max) {
  for (const auto& c : candidates) {
    const auto alpha = candidate_alphas(c, params);
    const auto top = select_top(alpha, i_max);
    for (std::size_t i = 0; i < c.terms.size(); ++i) {
      const bool selected = std::find(top.begin(), top.end(), i) != top.end();
      nlohmann::json rec{{"target_node", c.target_node},
                         {"term", i},
                         {"source", c.terms[i].source},
                         {"op", std::string(to_string(c.terms[i].op))},
                         {"alpha", alpha[i]},
                         {"selected", selected}};
      out << rec.dump() << '\n';
    }
  }
}

}  // namespace sprout
