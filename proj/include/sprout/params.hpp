// Copyright 2026 The Sprout Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "sprout/tensor.hpp"

namespace sprout {

struct ParamEntry {
  Tensor value;
  bool trainable = true;
  bool decay = true;
};

/// Flags implied by a key's last path component. Running statistics are not
/// trainable; gates, shortcut weights and normalization affine terms are
/// exempt from weight decay.
ParamEntry flags_for_key(const std::string& key);

class ParameterStore {
 public:
  void set(const std::string& key, Tensor value);
  void set(const std::string& key, ParamEntry entry);

  bool contains(const std::string& key) const { return entries_.count(key) != 0; }
  const Tensor& get(const std::string& key) const;
  Tensor& get(const std::string& key);
  const ParamEntry& entry(const std::string& key) const;
  void erase(const std::string& key) { entries_.erase(key); }
  std::size_t size() const { return entries_.size(); }
  std::vector<std::string> keys() const;

  const std::map<std::string, ParamEntry>& entries() const { return entries_; }

  /// Number of trainable scalars.
  std::int64_t trainable_count() const;

  std::vector<std::uint8_t> serialize() const;
  static ParameterStore deserialize(const std::vector<std::uint8_t>& bytes);
  void save(const std::filesystem::path& path) const;
  static ParameterStore load(const std::filesystem::path& path);

  bool operator==(const ParameterStore& other) const;

 private:
  std::map<std::string, ParamEntry> entries_;
};

inline constexpr char kParamMagic[] = "PTRDSH01";

}  // namespace sprout
