// Copyright 2026 The Sprout Authors
// SPDX-License-Identifier: Apache-2.0

#include "sprout/checkpoint.hpp"

#include <fstream>
#include <sstream>

#include <fmt/core.h>

namespace sprout {

nlohmann::json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError(fmt::format("cannot open '{}'", path.string()));
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError(fmt::format("'{}' is not valid JSON: {}", path.string(), e.what()));
  }
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(fmt::format("cannot write '{}'", path.string()));
  out << text;
  if (!out) throw Error(fmt::format("failed writing '{}'", path.string()));
}

void save_checkpoint(const Model& model, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  write_text(dir / "graph.json", model.graph.to_json().dump(1) + "\n");
  write_text(dir / "genotype.json", model.genotype.to_json().dump(2) + "\n");
  model.params.save(dir / "params.bin");
}

Model load_checkpoint(const std::filesystem::path& dir) {
  Model m;
  m.graph = Graph::from_json(read_json(dir / "graph.json"));
  m.genotype = Genotype::from_json(read_json(dir / "genotype.json"));
  m.params = ParameterStore::load(dir / "params.bin");
  for (const auto& n : m.graph.nodes()) {
    for (const auto& key : n.params) {
      if (!m.params.contains(key)) {
        throw FormatError(fmt::format("checkpoint '{}' lacks parameter '{}'", dir.string(), key));
      }
    }
  }
  return m;
}

}  // namespace sprout
