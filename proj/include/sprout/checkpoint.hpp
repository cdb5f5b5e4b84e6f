// Copyright 2026 The Sprout Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>

#include "sprout/growth.hpp"

namespace sprout {

/// Writes graph.json, params.bin and genotype.json into `dir`.
void save_checkpoint(const Model& model, const std::filesystem::path& dir);
/// Reads all three files before returning; a corrupt file yields an error
/// and nothing partial.
Model load_checkpoint(const std::filesystem::path& dir);

nlohmann::json read_json(const std::filesystem::path& path);
void write_text(const std::filesystem::path& path, const std::string& text);

}  // namespace sprout
