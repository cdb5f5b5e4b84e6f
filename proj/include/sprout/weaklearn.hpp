// Copyright 2026 The Sprout Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <functional>
#include <ostream>
#include <string>
#include <vector>

#include "sprout/data.hpp"
#include "sprout/genotype.hpp"
#include "sprout/graph.hpp"
#include "sprout/params.hpp"
#include "sprout/train.hpp"

namespace sprout {

/// Eligible shortcut sources for one boosted layer, in a fixed order:
/// output of the cell two back, output of the previous cell, then layers of
/// the target's own cell that precede it. `names` are the source names used
/// in genotypes ("in0", "in1", or a layer tag).
struct InputScope {
  std::vector<NodeId> eligible;
  std::vector<std::string> names;
};

InputScope enumerate_inputs(const Graph& graph, NodeId target, SearchMode mode = SearchMode::macro);

/// Resolves a genotype source name inside `cell`.
NodeId resolve_source(const Graph& graph, int cell, const std::string& name);

struct ShortcutTerm {
  NodeId input_node = -1;
  std::string source;
  ShortcutOp op = ShortcutOp::identity;
  std::string weight_key;
  std::vector<std::string> bn_keys;
  /// Node holding op(sg(input)) after batch norm; what the merge consumes.
  NodeId output_node = -1;
  /// The stop_gradient (or, in joint mode, scalar gate) guarding the input.
  NodeId guard_node = -1;
};

struct CandidateSet {
  NodeId target_node = -1;
  NodeId candidate_node = -1;
  /// stop_forward node; -1 in joint mode.
  NodeId sf_node = -1;
  /// The add node that receives sf(x_c).
  NodeId merge_node = -1;
  int cell = 0;
  int round = 0;
  std::string prefix;
  std::vector<ShortcutTerm> terms;
  double lambda = 0.0;

  std::vector<std::string> alpha_keys() const;
};

struct CandidateOptions {
  double lambda = 0.001;
  double alpha_init = 1e-3;
  Opset opset = toy_opset();
  /// Joint mode: sg becomes a scalar gate initialized to 0 and x_c is added
  /// without stop_forward.
  bool joint = false;
  /// Batch norm after every shortcut op.
  bool normalize = true;
  std::uint64_t seed = 0;
  SearchMode mode = SearchMode::macro;
};

struct AugmentedModel {
  Graph graph;
  ParameterStore params;
  std::vector<CandidateSet> candidates;
  /// lambda * sum |alpha| per candidate.
  std::vector<L1Penalty> extra_loss;
};

using NodePredicate = std::function<bool(const Node&)>;

/// Inserts one joint weak-learner candidate before every node accepted by
/// `is_out`. The parent's keys are copied unchanged into the result.
AugmentedModel initialize_candidates(const Graph& graph, const ParameterStore& params,
                                     const NodePredicate& is_out, const CandidateOptions& options);

struct WeakLearnOptions {
  TrainOptions train;
  /// Freeze every parameter that existed before the candidates were added.
  bool freeze_model = false;
};

struct WeakLearnResult {
  TrainStats stats;
  bool diverged = false;
  std::string message;
};

/// Trains the augmented model on model loss + sum lambda * |alpha|.
WeakLearnResult weak_learn(AugmentedModel& model, const ParameterStore& parent_params, const Dataset& data,
                           const WeakLearnOptions& options);

std::vector<double> candidate_alphas(const CandidateSet& candidate, const ParameterStore& params);

/// Indices of the `i_max` largest |alpha|, descending; ties go to the lower
/// index.
std::vector<std::size_t> select_top(const std::vector<double>& alpha, int i_max);

/// One JSON line per term: {target_node, term, source, op, alpha, selected}.
void write_candidate_report(std::ostream& out, const std::vector<CandidateSet>& candidates,
                            const ParameterStore& params, int i_max);

}  // namespace sprout
