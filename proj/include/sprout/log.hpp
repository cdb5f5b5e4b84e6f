// Copyright 2026 The Sprout Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <functional>
#include <string>

namespace sprout {

using WarningSink = std::function<void(const std::string&)>;

/// Routes library warnings. The default sink writes to stderr.
void set_warning_sink(WarningSink sink);
void warn(const std::string& message);

}  // namespace sprout
