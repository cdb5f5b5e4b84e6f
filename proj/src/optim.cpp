// Copyright 2026 The Sprout Authors
// SPDX-License-Identifier: Apache-2.0

#include "sprout/optim.hpp"

#include <cmath>
#include <numbers>

#include <fmt/core.h>

#include "sprout/error.hpp"
#include "sprout/log.hpp"

namespace sprout {

void sgd_step(ParameterStore& params, const std::map<std::string, Tensor>& grads, double lr,
              double weight_decay) {
  if (lr < 0.0) throw Error(fmt::format("learning rate must be non-negative, got {}", lr));
  for (const auto& [key, g] : grads) {
    const auto& e = params.entry(key);
    if (!e.trainable) continue;
    Tensor& w = params.get(key);
    if (w.shape != g.shape) throw Error(fmt::format("gradient for '{}' has wrong shape", key));
    const double wd = e.decay ? weight_decay : 0.0;
    for (std::size_t i = 0; i < w.size(); ++i) w.data[i] -= lr * (g.data[i] + wd * w.data[i]);
  }
}

double cosine_lr(std::int64_t t, std::int64_t horizon, double lr0) {
  if (horizon <= 0) throw Error("cosine_lr horizon must be positive");
  if (t < 0) throw Error("cosine_lr step must be non-negative");
  if (t > horizon) {
    warn(fmt::format("cosine_lr step {} beyond horizon {}; clamping to 0", t, horizon));
    return 0.0;
  }
  return lr0 * (1.0 + std::cos(std::numbers::pi * static_cast<double>(t) / static_cast<double>(horizon))) / 2.0;
}

}  // namespace sprout
