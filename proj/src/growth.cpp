// Copyright 2026 The Sprout Authors
// SPDX-License-Identifier: Apache-2.0

#include "sprout/growth.hpp"

#include <algorithm>
#include <functional>
#include <map>
#include <set>
#include <unordered_map>
#include <unordered_set>

#include <fmt/core.h>

#include "sprout/autodiff.hpp"
#include "sprout/builder.hpp"

namespace sprout {
namespace {

bool is_image(const Genotype& g) { return g.input.size() == 3; }

std::string group_prefix(int cell, int round) { return fmt::format("c{}/g{}", cell, round); }

MergeVariant effective_merge(MergeVariant global, MergeVariant group, bool final_model) {
  if (group == MergeVariant::ws && global == MergeVariant::cp_end && final_model) return MergeVariant::cp_each;
  return group;
}

void mark(Graph& g, NodeId id, const std::string& tag, Role role) {
  auto& n = g.node(id);
  n.tag = tag;
  n.role = role;
}

// Concatenation-projection or weighted sum of shortcut outputs, tagged as a
// new layer of the cell.
NodeId merge_outputs(GraphBuilder& b, Graph& g, int cell, int round, const std::vector<NodeId>& outputs,
                     const std::vector<std::string>& alpha_keys, const std::vector<double>& alphas,
                     MergeVariant merge, const Shape& target) {
  const auto prefix = group_prefix(cell, round);
  NodeId merged;
  if (merge == MergeVariant::ws) {
    merged = b.weighted_sum(outputs, alpha_keys, alphas);
  } else {
    const NodeId cat = b.nary(OpKind::concat, outputs);
    merged = b.proj(cat, target.at(1), 1, prefix + "/proj");
  }
  mark(g, merged, fmt::format("g{}", round), Role::layer);
  g.node(merged).meta["merge"] = std::string(to_string(merge));
  return merged;
}

void build_group(GraphBuilder& b, Graph& g, int cell, int round, const MergeGroup& group, MergeVariant merge) {
  const auto target_id = g.find_tag(cell, group.target);
  if (!target_id) throw Error(fmt::format("cell {} has no target layer '{}'", cell, group.target));
  if (g.node(*target_id).op != OpKind::add) {
    throw Error(fmt::format("target layer '{}' of cell {} cannot take a gated branch", group.target, cell));
  }
  b.set_anchor(*target_id);
  b.set_cell(cell);
  const Shape target = b.shape(*target_id);
  const auto prefix = group_prefix(cell, round);
  std::map<std::string, NodeId> adapted;
  std::vector<NodeId> outputs;
  std::vector<std::string> keys;
  std::vector<double> alphas;
  for (const auto& s : group.shortcuts) {
    const auto src_prefix = fmt::format("{}/{}", prefix, s.source);
    auto it = adapted.find(s.source);
    if (it == adapted.end()) {
      const NodeId src = resolve_source(g, cell, s.source);
      it = adapted.emplace(s.source, b.adapter(src, target, src_prefix + "/adapt")).first;
    }
    const auto term_prefix = fmt::format("{}/{}", src_prefix, to_string(s.op));
    const NodeId out = b.shortcut_op(s.op, it->second, term_prefix, true);
    auto& node = g.node(out);
    node.meta["src"] = s.source;
    node.meta["op"] = std::string(to_string(s.op));
    node.meta["alpha"] = fmt::format("{:.17g}", s.alpha);
    outputs.push_back(out);
    keys.push_back(term_prefix + "/alpha");
    alphas.push_back(s.alpha);
  }
  const NodeId merged = merge_outputs(b, g, cell, round, outputs, keys, alphas, merge, target);
  const NodeId gate = b.gate(merged, prefix + "/eta", 0.0);
  g.node(*target_id).inputs.push_back(gate);
}

// Removes nodes that cannot reach the loss and parameters nobody reads.
void prune(Graph& graph, ParameterStore& params) {
  std::unordered_set<NodeId> live{graph.loss_id(), graph.input_id()};
  const auto& nodes = graph.nodes();
  for (auto it = nodes.rbegin(); it != nodes.rend(); ++it) {
    if (!live.count(it->id)) continue;
    for (auto in : it->inputs) live.insert(in);
  }
  std::vector<NodeId> dead;
  for (const auto& n : nodes) {
    if (!live.count(n.id)) dead.push_back(n.id);
  }
  graph.erase(dead);
  std::set<std::string> used;
  for (const auto& n : graph.nodes()) used.insert(n.params.begin(), n.params.end());
  for (const auto& key : params.keys()) {
    if (!used.count(key)) params.erase(key);
  }
}

}  // namespace

Genotype seed_genotype(SearchMode mode, const std::string& opset, const Skeleton& skeleton, MergeVariant merge,
                       const Shape& input, int classes, Task task) {
  opset_by_name(opset);
  if (input.size() != 1 && input.size() != 3) {
    throw ConfigError(fmt::format("input shape {} is neither [features] nor [C, H, W]", shape_str(input)));
  }
  if (classes < 1) throw ConfigError("class count must be positive");
  Genotype g;
  g.mode = mode;
  g.opset = opset;
  g.skeleton = skeleton;
  g.merge = merge;
  g.input = input;
  g.classes = classes;
  g.task = task;
  g.cells = skeleton_cells(skeleton);
  return g;
}

Model build_model(const Genotype& genotype, std::uint64_t seed, const ParameterStore* inherit, bool final_model) {
  if (genotype.cells != std::vector<CellDescriptor>{} &&
      genotype.cells.size() != skeleton_cells(genotype.skeleton).size()) {
    throw FormatError("genotype cell count does not match its skeleton");
  }
  Model m;
  m.genotype = genotype;
  Graph& g = m.graph;
  GraphBuilder b(g, m.params, seed, inherit);
  const bool image = is_image(genotype);
  const std::int64_t f = genotype.skeleton.filters;

  b.set_cell(kNoCell);
  const NodeId x = b.input(genotype.input);
  b.set_cell(kStemCell);
  NodeId stem;
  if (image) {
    stem = b.batch_norm(b.conv(x, f, 3, "stem/conv"), "stem/bn");
  } else {
    stem = b.dense(x, f, "stem/dense");
  }
  mark(g, stem, "stem", Role::cell_output);

  std::int64_t width = f;
  for (std::size_t ci = 0; ci < genotype.cells.size(); ++ci) {
    const int c = static_cast<int>(ci);
    const auto& desc = genotype.cells[ci];
    b.set_anchor(std::nullopt);
    b.set_cell(c);
    const NodeId in1 = resolve_source(g, c, "in1");
    const auto p = [c](const char* name) { return fmt::format("c{}/{}", c, name); };
    NodeId s1, s2, out;
    if (desc.kind == CellKind::normal) {
      if (image) {
        s1 = b.batch_norm(b.sep_conv(b.unary(OpKind::relu, in1), width, 3, 1, p("s1/sep")), p("s1/bn"));
        s2 = b.batch_norm(b.sep_conv(b.unary(OpKind::relu, s1), width, 3, 1, p("s2/sep")), p("s2/bn"));
      } else {
        s1 = b.unary(OpKind::relu, b.dense(in1, width, p("s1")));
        s2 = b.dense(s1, width, p("s2"));
      }
      mark(g, s1, "s1", Role::layer);
      mark(g, s2, "s2", Role::layer);
      out = b.nary(OpKind::add, {in1, s2});
    } else {
      const std::int64_t wide = 2 * width;
      NodeId res;
      if (image) {
        s1 = b.batch_norm(b.sep_conv(b.unary(OpKind::relu, in1), wide, 3, 2, p("s1/sep")), p("s1/bn"));
        s2 = b.batch_norm(b.sep_conv(b.unary(OpKind::relu, s1), wide, 3, 1, p("s2/sep")), p("s2/bn"));
        res = b.batch_norm(b.proj(b.unary(OpKind::relu, in1), wide, 2, p("res/proj")), p("res/bn"));
      } else {
        s1 = b.unary(OpKind::relu, b.dense(in1, wide, p("s1")));
        s2 = b.dense(s1, wide, p("s2"));
        res = b.proj(in1, wide, 1, p("res/proj"));
      }
      mark(g, s1, "s1", Role::layer);
      mark(g, s2, "s2", Role::layer);
      g.node(res).tag = "res";
      out = b.nary(OpKind::add, {res, s2});
      width = wide;
    }
    mark(g, out, "out", Role::cell_output);
    auto& out_node = g.node(out);
    out_node.is_out = desc.kind == CellKind::normal;
    out_node.meta["kind"] = desc.kind == CellKind::normal ? "normal" : "transition";

    for (std::size_t r = 0; r < desc.groups.size(); ++r) {
      const auto& group = desc.groups[r];
      build_group(b, g, c, static_cast<int>(r), group, effective_merge(genotype.merge, group.merge, final_model));
    }
  }

  b.set_anchor(std::nullopt);
  b.set_cell(kNoCell);
  NodeId last = genotype.cells.empty() ? stem : *g.cell_output(static_cast<int>(genotype.cells.size()) - 1);
  if (image) last = b.unary(OpKind::global_avg_pool, last);
  const NodeId head = b.dense(last, genotype.classes, "head/dense");
  g.node(head).tag = "head";
  b.loss(genotype.task == Task::classification ? OpKind::softmax_xent : OpKind::mse, head);
  g.validate();
  return m;
}

void finalize_candidates(Graph& graph, ParameterStore& params, const std::vector<CandidateSet>& candidates,
                         int i_max, MergeVariant merge) {
  const MergeVariant search_merge = merge == MergeVariant::cp_each ? MergeVariant::cp_each : MergeVariant::ws;
  for (const auto& cand : candidates) {
    const auto alpha = candidate_alphas(cand, params);
    const auto top = select_top(alpha, i_max);
    GraphBuilder b(graph, params, 0);
    b.set_anchor(cand.merge_node);
    b.set_cell(cand.cell);
    const Shape target = b.shape(cand.target_node);
    std::vector<NodeId> outputs;
    std::vector<std::string> keys;
    std::vector<double> alphas;
    for (auto i : top) {
      const auto& term = cand.terms[i];
      graph.node(term.output_node).meta["alpha"] = fmt::format("{:.17g}", alpha[i]);
      outputs.push_back(term.output_node);
      keys.push_back(term.weight_key);
      alphas.push_back(alpha[i]);
    }
    const NodeId merged = merge_outputs(b, graph, cand.cell, cand.round, outputs, keys, alphas, search_merge, target);
    const NodeId gate = b.gate(merged, cand.prefix + "/eta", 0.0);
    const NodeId feed = cand.sf_node >= 0 ? cand.sf_node : cand.candidate_node;
    for (auto& in : graph.node(cand.merge_node).inputs) {
      if (in == feed) in = gate;
    }
    std::set<NodeId> guards;
    for (auto i : top) guards.insert(cand.terms[i].guard_node);
    for (auto guard : guards) graph.replace_uses(guard, graph.node(guard).inputs.at(0));
  }
  prune(graph, params);
  graph.validate();
}

Genotype extract_genotype(const Graph& graph, const Genotype& base) {
  Genotype out = base;
  for (std::size_t ci = 0; ci < out.cells.size(); ++ci) {
    const int c = static_cast<int>(ci);
    auto& desc = out.cells[ci];
    desc.groups.clear();
    for (int r = 0;; ++r) {
      const auto merged_id = graph.find_tag(c, fmt::format("g{}", r));
      if (!merged_id) break;
      const auto& merged = graph.node(*merged_id);
      MergeGroup group;
      group.layer = merged.tag;
      group.merge = parse_merge_variant(merged.meta_value("merge").value_or("cp-each"));
      std::vector<NodeId> terms = merged.inputs;
      if (merged.op == OpKind::proj_1x1) terms = graph.node(merged.inputs.at(0)).inputs;
      for (auto t : terms) {
        const auto& tn = graph.node(t);
        const auto src = tn.meta_value("src");
        const auto op = tn.meta_value("op");
        const auto a = tn.meta_value("alpha");
        if (!src || !op || !a) throw FormatError(fmt::format("node {} lacks shortcut metadata", t));
        group.shortcuts.push_back({*src, "", parse_shortcut_op(*op), std::stod(*a)});
      }
      // Later groups may also read this layer; the gate is the consumer
      // holding the group's eta.
      std::optional<NodeId> gate;
      const auto eta = group_prefix(c, r) + "/eta";
      for (auto id : graph.consumers(*merged_id)) {
        const auto& n = graph.node(id);
        if (n.op == OpKind::scalar_gate && n.params.at(0) == eta) gate = id;
      }
      if (!gate) throw FormatError(fmt::format("group g{} of cell {} is not gated", r, c));
      const auto targets = graph.consumers(*gate);
      if (targets.size() != 1) throw FormatError(fmt::format("gate of group g{} in cell {} has no target", r, c));
      group.target = graph.node(targets[0]).tag;
      for (auto& s : group.shortcuts) s.target = group.target;
      desc.groups.push_back(std::move(group));
    }
  }
  return out;
}

Genotype apply_tying(const Genotype& genotype, int boosted_cell, const MergeGroup& group) {
  if (boosted_cell < 0 || static_cast<std::size_t>(boosted_cell) >= genotype.cells.size()) {
    throw Error(fmt::format("boosted cell {} out of range", boosted_cell));
  }
  Genotype out = genotype;
  std::vector<int> cells;
  if (genotype.mode == SearchMode::cell) {
    cells = genotype.normal_cells();
  } else {
    cells = {boosted_cell};
  }
  for (int c : cells) {
    auto& desc = out.cells[static_cast<std::size_t>(c)];
    std::set<std::string> layers{"in0", "in1", "s1", "s2", "out"};
    for (const auto& g : desc.groups) layers.insert(g.layer);
    for (const auto& s : group.shortcuts) {
      if (!layers.count(s.source)) {
        throw Error(fmt::format("pattern source '{}' does not exist in cell {}", s.source, c));
      }
    }
    if (!layers.count(group.target)) {
      throw Error(fmt::format("pattern target '{}' does not exist in cell {}", group.target, c));
    }
    MergeGroup g = group;
    g.layer = fmt::format("g{}", desc.groups.size());
    desc.groups.push_back(std::move(g));
  }
  return out;
}

std::uint64_t cell_hash(const Graph& graph, int cell) {
  std::unordered_map<NodeId, std::uint64_t> label;
  std::vector<std::uint64_t> all;
  auto mix = [](std::uint64_t h, std::string_view s) { return fnv1a(s, h); };
  for (const auto& n : graph.nodes()) {
    if (n.cell != cell) continue;
    if (n.meta_value("adapter")) {
      const auto in = n.inputs.at(0);
      label[n.id] = label.count(in) ? label[in] : fnv1a("ext");
      continue;
    }
    std::uint64_t h = fnv1a(to_string(n.op));
    h = mix(h, fmt::format("k{}d{}", n.attr("kernel", 0), n.attr("dilation", 0)));
    h = mix(h, n.tag);
    h = mix(h, fmt::format("{}{}", to_string(n.role), n.is_out));
    for (const char* key : {"src", "op", "merge", "kind"}) {
      if (auto v = n.meta_value(key)) h = mix(h, fmt::format("{}={}", key, *v));
    }
    for (auto in : n.inputs) {
      const std::uint64_t l = label.count(in) ? label[in] : fnv1a("ext");
      h = mix(h, fmt::format("{:x}", l));
    }
    label[n.id] = h;
    all.push_back(h);
  }
  std::sort(all.begin(), all.end());
  std::uint64_t h = fnv1a(fmt::format("cell/{}", all.size()));
  for (auto v : all) h = mix(h, fmt::format("{:x}", v));
  return h;
}

std::int64_t node_cost(const Node& node, const std::vector<Shape>& inputs, const Shape& output) {
  auto per_example = [](const Shape& s) { return s.size() <= 1 ? numel(s) : numel(s) / s[0]; };
  auto spatial = [](const Shape& s) { return s.size() == 4 ? s[2] * s[3] : std::int64_t{1}; };
  const auto k = node.attr("kernel", 1);
  switch (node.op) {
    case OpKind::dense:
      return inputs.at(0).at(1) * output.at(1);
    case OpKind::conv:
      return k * k * inputs.at(0).at(1) * output.at(1) * spatial(output);
    case OpKind::sep_conv:
    case OpKind::dilated_conv: {
      const auto c = inputs.at(0).at(1);
      return k * k * c * spatial(output) + c * output.at(1) * spatial(output);
    }
    case OpKind::proj_1x1:
      return inputs.at(0).at(1) * output.at(1) * spatial(output);
    case OpKind::max_pool:
    case OpKind::avg_pool:
      return (output.size() == 4 ? k * k : k) * per_example(output);
    case OpKind::global_avg_pool:
      return per_example(inputs.at(0));
    case OpKind::scalar_gate:
    case OpKind::mul:
      return per_example(output);
    case OpKind::weighted_sum:
      return static_cast<std::int64_t>(inputs.size()) * per_example(output);
    default:
      return 0;
  }
}

std::int64_t graph_cost(const Graph& graph, const ParameterStore& params) {
  Shape batch_input{1};
  for (auto d : example_input_shape(graph)) batch_input.push_back(d);
  const auto shapes = infer_shapes(graph, params, batch_input);
  std::int64_t total = 0;
  std::vector<Shape> ins;
  for (const auto& n : graph.nodes()) {
    ins.clear();
    for (auto in : n.inputs) ins.push_back(shapes.at(in));
    total += node_cost(n, ins, shapes.at(n.id));
  }
  return total;
}

std::int64_t genotype_cost(const Genotype& genotype) {
  const auto m = build_model(genotype, 0, nullptr, false);
  return graph_cost(m.graph, m.params);
}

std::int64_t analytic_param_count(const Genotype& genotype, bool final_model) {
  const bool image = is_image(genotype);
  const std::int64_t f = genotype.skeleton.filters;
  const std::int64_t in_ch = genotype.input.at(0);
  auto bn = [](std::int64_t c) { return 2 * c; };
  auto dense = [](std::int64_t m, std::int64_t n) { return m * n + n; };
  auto sep = [](std::int64_t c, std::int64_t out, std::int64_t k) { return c * k * k + c * out; };

  std::int64_t total = image ? in_ch * f * 9 + bn(f) : dense(in_ch, f);
  // Channel count and stage of the stem (-1) and every cell output.
  std::map<int, std::pair<std::int64_t, int>> outputs{{kStemCell, {f, 0}}};
  std::int64_t width = f;
  int stage = 0;
  const int ncells = static_cast<int>(genotype.cells.size());
  auto source_info = [&](int c, const std::string& name) -> std::pair<std::int64_t, int> {
    int back = name == "in0" ? 2 : 1;
    while (back >= 1) {
      if (c - back >= kStemCell) return outputs.at(c - back);
      --back;
    }
    throw Error("unresolvable source");
  };
  for (int c = 0; c < ncells; ++c) {
    const auto& desc = genotype.cells[static_cast<std::size_t>(c)];
    if (desc.kind == CellKind::normal) {
      total += image ? 2 * (sep(width, width, 3) + bn(width)) : 2 * dense(width, width);
    } else {
      const auto wide = 2 * width;
      if (image) {
        total += sep(width, wide, 3) + bn(wide) + sep(wide, wide, 3) + bn(wide) + width * wide + bn(wide);
      } else {
        total += dense(width, wide) + dense(wide, wide) + width * wide;
      }
      width = wide;
      ++stage;
    }
    for (const auto& group : desc.groups) {
      std::set<std::string> adapted;
      for (const auto& s : group.shortcuts) {
        if ((s.source == "in0" || s.source == "in1") && !adapted.count(s.source)) {
          adapted.insert(s.source);
          const auto [ch, st] = source_info(c, s.source);
          if (ch != width || st != stage) total += ch * width + bn(width);
        }
        switch (s.op) {
          case ShortcutOp::dense_relu:
          case ShortcutOp::dense_tanh: total += dense(width, width); break;
          case ShortcutOp::sep_conv_3x3: total += 2 * (sep(width, width, 3) + bn(width)); break;
          case ShortcutOp::sep_conv_5x5: total += 2 * (sep(width, width, 5) + bn(width)); break;
          case ShortcutOp::dil_conv_3x3: total += sep(width, width, 3) + bn(width); break;
          case ShortcutOp::dil_conv_5x5: total += sep(width, width, 5) + bn(width); break;
          default: break;
        }
        total += bn(width);
      }
      const auto n = static_cast<std::int64_t>(group.shortcuts.size());
      const auto merge = effective_merge(genotype.merge, group.merge, final_model);
      total += merge == MergeVariant::ws ? n : n * width * width;
      total += 1;
    }
    outputs[c] = {width, stage};
  }
  total += dense(width, genotype.classes);
  return total;
}

}  // namespace sprout
