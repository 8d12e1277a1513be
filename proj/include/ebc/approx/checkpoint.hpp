#pragma once

#include "ebc/approx/mlp.hpp"
#include "ebc/core/error.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <string>
#include <vector>

namespace ebc {

/// Named real arrays, written as a versioned binary container:
///   "EBCCKPT\0" | u32 version | u64 entry count
///   per entry: u32 name length | name | u64 rows | u64 cols | rows*cols f64 (column-major)
///   u64 FNV-1a hash of all preceding bytes
/// Doubles are stored as raw IEEE-754 bits, so a round trip is bit-exact.
class Checkpoint {
 public:
  static constexpr std::uint32_t kVersion = 1;

  void put(const std::string& name, const Mat& m) { arrays_[name] = m; }
  void put_scalar(const std::string& name, double v) { arrays_[name] = Mat::Constant(1, 1, v); }

  void put_params(const std::string& prefix, const ParamList& p) {
    for (std::size_t l = 0; l < p.size(); ++l) {
      put(prefix + ".l" + std::to_string(l) + ".w", p[l].w);
      put(prefix + ".l" + std::to_string(l) + ".b", p[l].b);
    }
  }

  bool contains(const std::string& name) const { return arrays_.count(name) != 0; }

  const Mat& get(const std::string& name) const {
    auto it = arrays_.find(name);
    if (it == arrays_.end()) throw FormatError("checkpoint has no entry '" + name + "'");
    return it->second;
  }

  double get_scalar(const std::string& name) const {
    const Mat& m = get(name);
    if (m.size() != 1) throw FormatError("checkpoint entry '" + name + "' is not a scalar");
    return m(0, 0);
  }

  /// Reads layers `prefix.l0`, `prefix.l1`, ... until one is missing.
  ParamList get_params(const std::string& prefix) const {
    ParamList p;
    for (std::size_t l = 0;; ++l) {
      const std::string w = prefix + ".l" + std::to_string(l) + ".w";
      if (!contains(w)) break;
      p.push_back({get(w), get(prefix + ".l" + std::to_string(l) + ".b")});
    }
    if (p.empty()) throw FormatError("checkpoint has no parameters under '" + prefix + "'");
    return p;
  }

  const std::map<std::string, Mat>& entries() const noexcept { return arrays_; }

  void save(const std::string& path) const {
    std::string buf;
    buf.append("EBCCKPT", 8);
    append(buf, kVersion);
    append(buf, static_cast<std::uint64_t>(arrays_.size()));
    for (const auto& [name, m] : arrays_) {
      append(buf, static_cast<std::uint32_t>(name.size()));
      buf.append(name);
      append(buf, static_cast<std::uint64_t>(m.rows()));
      append(buf, static_cast<std::uint64_t>(m.cols()));
      buf.append(reinterpret_cast<const char*>(m.data()), static_cast<std::size_t>(m.size()) * sizeof(double));
    }
    append(buf, fnv1a(buf));
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw FormatError("cannot open '" + path + "' for writing");
    out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (!out) throw FormatError("write failed for '" + path + "'");
  }

  static Checkpoint load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open checkpoint '" + path + "'");
    const std::string buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (buf.size() < 8 + 4 + 8 + 8 || std::memcmp(buf.data(), "EBCCKPT", 8) != 0)
      throw FormatError("'" + path + "' is not a checkpoint");
    std::uint64_t stored = 0;
    std::memcpy(&stored, buf.data() + buf.size() - 8, 8);
    if (stored != fnv1a(std::string_view(buf.data(), buf.size() - 8)))
      throw FormatError("checkpoint '" + path + "' failed its integrity check");
    std::size_t pos = 8;
    const auto version = read<std::uint32_t>(buf, pos);
    if (version != kVersion)
      throw FormatError("checkpoint version " + std::to_string(version) + " unsupported");
    const auto count = read<std::uint64_t>(buf, pos);
    Checkpoint ck;
    for (std::uint64_t e = 0; e < count; ++e) {
      const auto len = read<std::uint32_t>(buf, pos);
      need(buf, pos, len);
      std::string name = buf.substr(pos, len);
      pos += len;
      const auto rows = read<std::uint64_t>(buf, pos);
      const auto cols = read<std::uint64_t>(buf, pos);
      const std::size_t bytes = static_cast<std::size_t>(rows * cols) * sizeof(double);
      need(buf, pos, bytes);
      Mat m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
      std::memcpy(m.data(), buf.data() + pos, bytes);
      pos += bytes;
      ck.arrays_.emplace(std::move(name), std::move(m));
    }
    if (pos != buf.size() - 8) throw FormatError("checkpoint '" + path + "' has trailing bytes");
    return ck;
  }

 private:
  template <class T>
  static void append(std::string& buf, T v) {
    buf.append(reinterpret_cast<const char*>(&v), sizeof(T));
  }

  static void need(const std::string& buf, std::size_t pos, std::size_t n) {
    if (pos + n > buf.size() - 8) throw FormatError("checkpoint is truncated");
  }

  template <class T>
  static T read(const std::string& buf, std::size_t& pos) {
    need(buf, pos, sizeof(T));
    T v;
    std::memcpy(&v, buf.data() + pos, sizeof(T));
    pos += sizeof(T);
    return v;
  }

  static std::uint64_t fnv1a(std::string_view bytes) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : bytes) {
      h ^= c;
      h *= 0x100000001b3ULL;
    }
    return h;
  }

  std::map<std::string, Mat> arrays_;
};

}  // namespace ebc
