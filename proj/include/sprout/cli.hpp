// Copyright 2026 The Sprout Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace sprout {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitConfig = 3;

/// Environment variable that overrides the configured output directory.
inline constexpr char kOutputDirEnv[] = "SPROUT_OUTPUT_DIR";

/// Entry point for every subcommand. `args` excludes the program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace sprout
