// Copyright 2026 The Sprout Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include "sprout/data.hpp"
#include "sprout/graph.hpp"
#include "sprout/params.hpp"

namespace sprout {

/// lambda * sum |w| over the listed scalar keys.
struct L1Penalty {
  double lambda = 0.0;
  std::vector<std::string> keys;
};

double l1_value(const std::vector<L1Penalty>& penalties, const ParameterStore& params);
/// Adds lambda * sign(w) to the gradients (0 at w == 0).
void add_l1_subgradient(const std::vector<L1Penalty>& penalties, const ParameterStore& params,
                        std::map<std::string, Tensor>& grads);

struct TrainOptions {
  int epochs = 20;
  double lr0 = 0.05;
  double weight_decay = 1e-4;
  int batch_size = 32;
  std::uint64_t seed = 0;
  std::vector<L1Penalty> l1;
  std::set<std::string> frozen;
};

struct TrainStats {
  std::vector<double> epoch_loss;
  std::vector<double> epoch_objective;
  std::int64_t steps = 0;
  std::int64_t examples = 0;
};

/// Minibatch SGD with cosine decay over epochs * ceil(N / batch) steps.
/// Batch-norm running statistics are updated after every step.
TrainStats train(const Graph& graph, ParameterStore& params, const Dataset& data,
                 const TrainOptions& options);

/// One full-batch step; returns the objective before the update.
double train_step(const Graph& graph, ParameterStore& params, const Batch& batch, double lr,
                  const TrainOptions& options);

}  // namespace sprout
