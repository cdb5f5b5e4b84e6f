// Copyright 2026 The Sprout Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "sprout/params.hpp"

namespace sprout {

/// w <- w - lr * (g + weight_decay * w) for every key in `grads`. Keys whose
/// entry has `decay == false` skip the weight-decay term.
void sgd_step(ParameterStore& params, const std::map<std::string, Tensor>& grads, double lr,
              double weight_decay);

/// lr0 * (1 + cos(pi * t / T)) / 2. Steps past the horizon clamp to 0.
double cosine_lr(std::int64_t t, std::int64_t horizon, double lr0);

}  // namespace sprout
