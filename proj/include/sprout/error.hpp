// Copyright 2026 The Sprout Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace sprout {

using NodeId = std::int64_t;

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised by eval_node and shape inference. Carries the node at fault.
class ShapeError : public Error {
 public:
  ShapeError(NodeId node, const std::string& what) : Error(what), node_(node) {}
  NodeId node() const { return node_; }

 private:
  NodeId node_;
};

/// Non-finite value produced during forward evaluation or training.
class NumericError : public Error {
 public:
  NumericError(NodeId node, const std::string& what) : Error(what), node_(node) {}
  NodeId node() const { return node_; }

 private:
  NodeId node_;
};

/// Corrupt or incompatible file (bad magic, truncated payload, schema mismatch).
class FormatError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace sprout
