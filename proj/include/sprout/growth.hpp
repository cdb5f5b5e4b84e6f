// Copyright 2026 The Sprout Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sprout/genotype.hpp"
#include "sprout/graph.hpp"
#include "sprout/params.hpp"
#include "sprout/weaklearn.hpp"

namespace sprout {

struct Model {
  Graph graph;
  ParameterStore params;
  Genotype genotype;
};

/// Genotype of the seed network: skeleton cells with no shortcut groups.
Genotype seed_genotype(SearchMode mode, const std::string& opset, const Skeleton& skeleton, MergeVariant merge,
                       const Shape& input, int classes, Task task);

/// Instantiates a genotype. Parameters present in `inherit` with matching
/// key and shape are copied; all others are freshly initialized from `seed`.
/// With `final_model`, groups grown as weighted sums under the cp-end
/// variant become concatenation-projections.
Model build_model(const Genotype& genotype, std::uint64_t seed, const ParameterStore* inherit = nullptr,
                  bool final_model = false);

inline Model seed_model(const Genotype& genotype, std::uint64_t seed) { return build_model(genotype, seed); }

/// Replaces each candidate by the merge of its top-`i_max` terms behind a
/// scalar gate initialized to 0, removes the stop-gradient guards and drops
/// parameters no longer referenced.
void finalize_candidates(Graph& graph, ParameterStore& params, const std::vector<CandidateSet>& candidates,
                         int i_max, MergeVariant merge);

/// Reads the shortcut groups of every cell back out of a graph. Header
/// fields (mode, skeleton, ...) come from `base`.
Genotype extract_genotype(const Graph& graph, const Genotype& base);

/// Adds `group` to the boosted cell (macro) or to every normal cell (cell).
Genotype apply_tying(const Genotype& genotype, int boosted_cell, const MergeGroup& group);

/// Structural hash of one cell: op kinds, kernels, dilations, tags,
/// shortcut sources and connectivity. Ignores parameter values, channel
/// counts, strides and input adapters.
std::uint64_t cell_hash(const Graph& graph, int cell);

/// Multiply-adds for one example.
std::int64_t graph_cost(const Graph& graph, const ParameterStore& params);
std::int64_t genotype_cost(const Genotype& genotype);

/// Trainable scalar count derived from the genotype alone.
std::int64_t analytic_param_count(const Genotype& genotype, bool final_model = false);

/// Evaluates one node's multiply-adds given its input and output shapes
/// (batch dimension included, ignored).
std::int64_t node_cost(const Node& node, const std::vector<Shape>& inputs, const Shape& output);

}  // namespace sprout
