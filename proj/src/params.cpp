// Copyright 2026 The Sprout Authors
// SPDX-License-Identifier: Apache-2.0

#include "sprout/params.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include <fmt/core.h>

#include "sprout/error.hpp"

namespace sprout {
namespace {

static_assert(std::endian::native == std::endian::little, "parameter I/O assumes little-endian");

constexpr std::size_t kMagicLen = 8;

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_f64(std::vector<std::uint8_t>& out, double v) {
  const auto bits = std::bit_cast<std::uint64_t>(v);
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(bits >> (8 * i)));
}

class Reader {
 public:
  explicit Reader(const std::vector<std::uint8_t>& bytes) : bytes_(bytes) {}

  bool done() const { return pos_ == bytes_.size(); }

  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) throw FormatError("parameter file: truncated payload");
  }

  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes_[pos_ + i]) << (8 * i);
    pos_ += 4;
    return v;
  }

  double f64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(bytes_[pos_ + i]) << (8 * i);
    pos_ += 8;
    return std::bit_cast<double>(v);
  }

  std::string str(std::size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
    pos_ += n;
    return s;
  }

 private:
  const std::vector<std::uint8_t>& bytes_;
  std::size_t pos_ = 0;
};

std::string last_component(const std::string& key) {
  const auto slash = key.rfind('/');
  return slash == std::string::npos ? key : key.substr(slash + 1);
}

}  // namespace

ParamEntry flags_for_key(const std::string& key) {
  const auto leaf = last_component(key);
  ParamEntry e;
  if (leaf == "running_mean" || leaf == "running_var") {
    e.trainable = false;
    e.decay = false;
  } else if (leaf == "eta" || leaf == "alpha" || leaf == "gamma" || leaf == "beta" ||
             leaf == "gate") {
    e.decay = false;
  }
  return e;
}

void ParameterStore::set(const std::string& key, Tensor value) {
  auto e = flags_for_key(key);
  e.value = std::move(value);
  entries_[key] = std::move(e);
}

void ParameterStore::set(const std::string& key, ParamEntry entry) { entries_[key] = std::move(entry); }

const Tensor& ParameterStore::get(const std::string& key) const { return entry(key).value; }

Tensor& ParameterStore::get(const std::string& key) {
  auto it = entries_.find(key);
  if (it == entries_.end()) throw Error(fmt::format("parameter '{}' not found", key));
  return it->second.value;
}

const ParamEntry& ParameterStore::entry(const std::string& key) const {
  auto it = entries_.find(key);
  if (it == entries_.end()) throw Error(fmt::format("parameter '{}' not found", key));
  return it->second;
}

std::vector<std::string> ParameterStore::keys() const {
  std::vector<std::string> out;
  out.reserve(entries_.size());
  for (const auto& [k, _] : entries_) out.push_back(k);
  return out;
}

std::int64_t ParameterStore::trainable_count() const {
  std::int64_t n = 0;
  for (const auto& [_, e] : entries_) {
    if (e.trainable) n += static_cast<std::int64_t>(e.value.size());
  }
  return n;
}

std::vector<std::uint8_t> ParameterStore::serialize() const {
  std::vector<std::uint8_t> out(kParamMagic, kParamMagic + kMagicLen);
  for (const auto& [key, e] : entries_) {
    put_u32(out, static_cast<std::uint32_t>(key.size()));
    out.insert(out.end(), key.begin(), key.end());
    put_u32(out, static_cast<std::uint32_t>(e.value.rank()));
    for (auto d : e.value.shape) put_u32(out, static_cast<std::uint32_t>(d));
    for (double v : e.value.data) put_f64(out, v);
  }
  return out;
}

ParameterStore ParameterStore::deserialize(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < kMagicLen) throw FormatError("parameter file: truncated payload (no magic)");
  const std::string magic(bytes.begin(), bytes.begin() + kMagicLen);
  if (magic != kParamMagic) {
    if (magic.rfind("PTRDSH", 0) == 0) {
      throw FormatError(fmt::format("parameter file: unsupported version '{}' (expected '{}')",
                                    magic, kParamMagic));
    }
    throw FormatError("parameter file: bad magic");
  }
  Reader r(bytes);
  r.str(kMagicLen);
  ParameterStore store;
  while (!r.done()) {
    const auto key_len = r.u32();
    auto key = r.str(key_len);
    const auto rank = r.u32();
    if (rank == 0 || rank > 8) throw FormatError(fmt::format("parameter file: bad rank {} for '{}'", rank, key));
    Shape shape;
    std::uint64_t count = 1;
    for (std::uint32_t i = 0; i < rank; ++i) {
      const auto d = r.u32();
      if (d == 0) throw FormatError(fmt::format("parameter file: zero dimension in '{}'", key));
      shape.push_back(d);
      count *= d;
    }
    r.need(count * 8);
    std::vector<double> values(count);
    for (auto& v : values) v = r.f64();
    store.set(key, Tensor(std::move(shape), std::move(values)));
  }
  return store;
}

void ParameterStore::save(const std::filesystem::path& path) const {
  const auto bytes = serialize();
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(fmt::format("cannot write '{}'", path.string()));
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

ParameterStore ParameterStore::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(fmt::format("cannot read '{}'", path.string()));
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return deserialize(bytes);
}

bool ParameterStore::operator==(const ParameterStore& other) const {
  if (entries_.size() != other.entries_.size()) return false;
  for (const auto& [k, e] : entries_) {
    auto it = other.entries_.find(k);
    if (it == other.entries_.end()) return false;
    if (!(it->second.value == e.value) || it->second.trainable != e.trainable ||
        it->second.decay != e.decay) {
      return false;
    }
  }
  return true;
}

}  // namespace sprout
