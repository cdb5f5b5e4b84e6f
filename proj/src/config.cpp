// Copyright 2026 The Sprout Authors
// SPDX-License-Identifier: Apache-2.0

#include "sprout/config.hpp"

#include <fstream>
#include <set>

#include <fmt/core.h>

#include "sprout/error.hpp"

namespace sprout {
namespace {

void reject_unknown(const nlohmann::json& doc, const std::set<std::string>& known, const std::string& where) {
  if (!doc.is_object()) throw ConfigError(fmt::format("{} must be a JSON object", where));
  for (const auto& [key, value] : doc.items()) {
    if (!known.count(key)) throw ConfigError(fmt::format("unknown key '{}' in {}", key, where));
  }
}

template <typename T>
void read(const nlohmann::json& doc, const char* key, T& out) {
  if (!doc.contains(key)) return;
  try {
    out = doc.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ConfigError(fmt::format("config field '{}' has the wrong type", key));
  }
}

void require(bool ok, const std::string& message) {
  if (!ok) throw ConfigError(message);
}

}  // namespace

void RunConfig::validate() const {
  opset_by_name(opset);
  require(i_max >= 1, "i_max must be >= 1");
  require(lambda >= 0.0, "lambda must be >= 0");
  require(skeleton.cells_per_stage >= 1, "skeleton.cells_per_stage must be >= 1");
  require(skeleton.filters >= 1, "skeleton.filters must be >= 1");
  require(skeleton.stages >= 1, "skeleton.stages must be >= 1");
  require(seed_epochs >= 0 && weak_epochs >= 0 && child_epochs >= 0, "epoch counts must be >= 0");
  require(lr0 >= 0.0, "lr0 must be >= 0");
  require(weight_decay >= 0.0, "weight_decay must be >= 0");
  require(batch_size >= 1, "batch_size must be >= 1");
  require(growth_iterations >= 0, "growth_iterations must be >= 0");
  require(workers >= 1 && workers <= 256, "workers must be in [1, 256]");
  require(cost_budget >= 0, "cost_budget must be >= 0");
  require(max_seconds >= 0.0, "max_seconds must be >= 0");
  require(amortization_bound > 0.0, "amortization_bound must be > 0");
  require(dataset.kind == "synthetic-spirals" || dataset.kind == "synthetic-parity" ||
              dataset.kind == "tiny-image-file",
          fmt::format("unknown dataset kind '{}'", dataset.kind));
  if (dataset.kind != "tiny-image-file") require(dataset.size >= 2, "dataset.size must be >= 2");
  if (dataset.kind == "tiny-image-file") require(!dataset.path.empty(), "dataset.path is required for image files");
  require(dataset.noise >= 0.0, "dataset.noise must be >= 0");
  require(dataset.classes >= 2, "dataset.classes must be >= 2");
  require(dataset.bits >= 1 && dataset.bits <= 30, "dataset.bits must be in [1, 30]");
  require(dataset.val_fraction > 0.0 && dataset.val_fraction < 1.0, "dataset.val_fraction must be in (0, 1)");
  require(!output_dir.empty(), "output_dir must not be empty");
}

nlohmann::json RunConfig::to_json() const {
  return {
      {"schema", "sprout.config/1"},
      {"mode", std::string(to_string(mode))},
      {"opset", opset},
      {"i_max", i_max},
      {"lambda", lambda},
      {"merge", std::string(to_string(merge))},
      {"isolated", isolated},
      {"skeleton",
       {{"cells_per_stage", skeleton.cells_per_stage}, {"filters", skeleton.filters}, {"stages", skeleton.stages}}},
      {"seed_epochs", seed_epochs},
      {"weak_epochs", weak_epochs},
      {"child_epochs", child_epochs},
      {"lr0", lr0},
      {"weight_decay", weight_decay},
      {"batch_size", batch_size},
      {"growth_iterations", growth_iterations},
      {"workers", workers},
      {"seed", seed},
      {"cost_budget", cost_budget},
      {"max_seconds", max_seconds},
      {"amortization_bound", amortization_bound},
      {"dataset",
       {{"kind", dataset.kind},
        {"size", dataset.size},
        {"noise", dataset.noise},
        {"classes", dataset.classes},
        {"seed", dataset.seed},
        {"bits", dataset.bits},
        {"path", dataset.path},
        {"val_fraction", dataset.val_fraction}}},
      {"output_dir", output_dir},
  };
}

RunConfig RunConfig::from_json(const nlohmann::json& doc) {
  reject_unknown(doc,
                 {"schema", "mode", "opset", "i_max", "lambda", "merge", "isolated", "skeleton", "seed_epochs",
                  "weak_epochs", "child_epochs", "lr0", "weight_decay", "batch_size", "growth_iterations", "workers",
                  "seed", "cost_budget", "max_seconds", "amortization_bound", "dataset", "output_dir"},
                 "config");
  if (doc.contains("schema") && doc.at("schema") != "sprout.config/1") {
    throw ConfigError("unsupported config schema");
  }
  RunConfig c;
  std::string text;
  if (doc.contains("mode")) {
    read(doc, "mode", text);
    c.mode = parse_search_mode(text);
  }
  read(doc, "opset", c.opset);
  read(doc, "i_max", c.i_max);
  read(doc, "lambda", c.lambda);
  if (doc.contains("merge")) {
    read(doc, "merge", text);
    c.merge = parse_merge_variant(text);
  }
  read(doc, "isolated", c.isolated);
  if (doc.contains("skeleton")) {
    const auto& sk = doc.at("skeleton");
    reject_unknown(sk, {"cells_per_stage", "filters", "stages"}, "skeleton");
    read(sk, "cells_per_stage", c.skeleton.cells_per_stage);
    read(sk, "filters", c.skeleton.filters);
    read(sk, "stages", c.skeleton.stages);
  }
  read(doc, "seed_epochs", c.seed_epochs);
  read(doc, "weak_epochs", c.weak_epochs);
  read(doc, "child_epochs", c.child_epochs);
  read(doc, "lr0", c.lr0);
  read(doc, "weight_decay", c.weight_decay);
  read(doc, "batch_size", c.batch_size);
  read(doc, "growth_iterations", c.growth_iterations);
  read(doc, "workers", c.workers);
  read(doc, "seed", c.seed);
  read(doc, "cost_budget", c.cost_budget);
  read(doc, "max_seconds", c.max_seconds);
  read(doc, "amortization_bound", c.amortization_bound);
  if (doc.contains("dataset")) {
    const auto& d = doc.at("dataset");
    reject_unknown(d, {"kind", "size", "noise", "classes", "seed", "bits", "path", "val_fraction"}, "dataset");
    read(d, "kind", c.dataset.kind);
    read(d, "size", c.dataset.size);
    read(d, "noise", c.dataset.noise);
    read(d, "classes", c.dataset.classes);
    read(d, "seed", c.dataset.seed);
    read(d, "bits", c.dataset.bits);
    read(d, "path", c.dataset.path);
    read(d, "val_fraction", c.dataset.val_fraction);
  }
  read(doc, "output_dir", c.output_dir);
  c.validate();
  return c;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(fmt::format("cannot open config '{}'", path.string()));
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(fmt::format("config '{}' is not valid JSON: {}", path.string(), e.what()));
  }
  return from_json(doc);
}

}  // namespace sprout
