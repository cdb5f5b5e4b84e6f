// Copyright 2026 The Sprout Authors
// SPDX-License-Identifier: Apache-2.0

#include "sprout/log.hpp"

#include <iostream>
#include <mutex>

namespace sprout {
namespace {

std::mutex& sink_mutex() {
  static std::mutex m;
  return m;
}

WarningSink& sink() {
  static WarningSink s = [](const std::string& msg) { std::cerr << "warning: " << msg << '\n'; };
  return s;
}

}  // namespace

void set_warning_sink(WarningSink s) {
  std::lock_guard lock(sink_mutex());
  if (s) {
    sink() = std::move(s);
  } else {
    sink() = [](const std::string& msg) { std::cerr << "warning: " << msg << '\n'; };
  }
}

void warn(const std::string& message) {
  std::lock_guard lock(sink_mutex());
  sink()(message);
}

}  // namespace sprout
