// Copyright 2026 The Sprout Authors
// SPDX-License-Identifier: Apache-2.0

#include "sprout/train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "sprout/autodiff.hpp"
#include "sprout/optim.hpp"

namespace sprout {

double l1_value(const std::vector<L1Penalty>& penalties, const ParameterStore& params) {
  double total = 0.0;
  for (const auto& p : penalties) {
    double s = 0.0;
    for (const auto& key : p.keys) {
      for (double v : params.get(key).data) s += std::abs(v);
    }
    total += p.lambda * s;
  }
  return total;
}

void add_l1_subgradient(const std::vector<L1Penalty>& penalties, const ParameterStore& params,
                        std::map<std::string, Tensor>& grads) {
  for (const auto& p : penalties) {
    for (const auto& key : p.keys) {
      const auto& w = params.get(key);
      auto [it, inserted] = grads.try_emplace(key, zeros_like(w));
      for (std::size_t i = 0; i < w.size(); ++i) {
        const double v = w.data[i];
        it->second.data[i] += v > 0.0 ? p.lambda : (v < 0.0 ? -p.lambda : 0.0);
      }
    }
  }
}

namespace {

void apply_running(ParameterStore& params, RunningUpdates& running) {
  for (auto& [key, value] : running) params.get(key) = std::move(value);
}

struct StepLoss {
  double loss;
  double penalty;
};

StepLoss step_once(const Graph& graph, ParameterStore& params, const Batch& batch, double lr,
                   const TrainOptions& options) {
  auto fwd = forward(graph, params, batch, Mode::train);
  auto grads = backward(graph, params, batch, fwd);
  const double penalty = l1_value(options.l1, params);
  add_l1_subgradient(options.l1, params, grads.params);
  for (const auto& key : options.frozen) grads.params.erase(key);
  sgd_step(params, grads.params, lr, options.weight_decay);
  apply_running(params, fwd.running);
  return {fwd.loss, penalty};
}

}  // namespace

double train_step(const Graph& graph, ParameterStore& params, const Batch& batch, double lr,
                  const TrainOptions& options) {
  const auto r = step_once(graph, params, batch, lr, options);
  return r.loss + r.penalty;
}

TrainStats train(const Graph& graph, ParameterStore& params, const Dataset& data, const TrainOptions& options) {
  TrainStats stats;
  const auto n = data.size();
  if (n == 0 || options.epochs <= 0) return stats;
  const auto bs = std::max<std::int64_t>(1, std::min<std::int64_t>(options.batch_size, n));
  const auto steps_per_epoch = (n + bs - 1) / bs;
  const auto horizon = steps_per_epoch * options.epochs;
  std::mt19937_64 rng(options.seed);
  std::vector<std::int64_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  for (int epoch = 0; epoch < options.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0, obj_sum = 0.0;
    for (std::int64_t s = 0; s < steps_per_epoch; ++s) {
      const auto begin = s * bs;
      const auto end = std::min(n, begin + bs);
      const Batch batch = data.batch(std::span(order).subspan(begin, end - begin));
      const double lr = cosine_lr(stats.steps, horizon, options.lr0);
      const auto r = step_once(graph, params, batch, lr, options);
      const double w = static_cast<double>(end - begin);
      loss_sum += r.loss * w;
      obj_sum += (r.loss + r.penalty) * w;
      ++stats.steps;
      stats.examples += end - begin;
    }
    stats.epoch_loss.push_back(loss_sum / static_cast<double>(n));
    stats.epoch_objective.push_back(obj_sum / static_cast<double>(n));
  }
  return stats;
}

}  // namespace sprout
