#pragma once

#include "ebc/core/error.hpp"
#include "ebc/core/task.hpp"
#include "ebc/core/types.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

namespace ebc {

/// Success-state examples for a single task. Immutable after construction;
/// per-dimension population standard deviation is computed once.
class ExampleBuffer {
 public:
  ExampleBuffer(TaskId task, std::vector<Vec> states) : task_(std::move(task)), states_(std::move(states)) {
    if (states_.empty()) throw EmptyBufferError("example buffer for '" + task_.name + "' has no states");
    const auto dim = states_.front().size();
    for (std::size_t i = 0; i < states_.size(); ++i) {
      if (states_[i].size() != dim)
        throw DimensionError("example row " + std::to_string(i), static_cast<std::size_t>(dim),
                             static_cast<std::size_t>(states_[i].size()));
      if (!states_[i].allFinite())
        throw NonFiniteError("example row " + std::to_string(i) + " has a non-finite component");
    }
    per_dim_std_ = population_std(states_);
  }

  const TaskId& task() const noexcept { return task_; }
  const std::vector<Vec>& states() const noexcept { return states_; }
  const Vec& per_dim_std() const noexcept { return per_dim_std_; }
  std::size_t size() const noexcept { return states_.size(); }
  std::size_t dim() const noexcept { return static_cast<std::size_t>(states_.front().size()); }
  const Vec& operator[](std::size_t i) const { return states_[i]; }

  std::vector<std::size_t> sample_indices(std::size_t n, Rng& rng) const {
    if (n == 0) throw ConfigError("batch size must be at least 1");
    std::vector<std::size_t> idx(n);
    for (auto& i : idx) i = uniform_index(rng, states_.size());
    return idx;
  }

  /// Two-pass population standard deviation per dimension. Values are summed
  /// in sorted order so the result is bitwise independent of row order.
  static Vec population_std(const std::vector<Vec>& states) {
    const auto dim = states.front().size();
    const double n = static_cast<double>(states.size());
    Vec out(dim);
    std::vector<double> col(states.size());
    for (Eigen::Index j = 0; j < dim; ++j) {
      for (std::size_t i = 0; i < states.size(); ++i) col[i] = states[i][j];
      std::sort(col.begin(), col.end());
      double mean = 0.0;
      for (double v : col) mean += v;
      mean /= n;
      double var = 0.0;
      for (double v : col) var += (v - mean) * (v - mean);
      out[j] = std::sqrt(var / n);
    }
    return out;
  }

 private:
  TaskId task_;
  std::vector<Vec> states_;
  Vec per_dim_std_;
};

// Example-file format, version 1:
//   ebc-examples 1 <state_dim> <count> <task_name>
//   <count> rows of <state_dim> whitespace-separated shortest round-trip decimals
inline constexpr const char* kExampleFormatId = "ebc-examples";
inline constexpr int kExampleFormatVersion = 1;

inline void save_examples(const ExampleBuffer& buf, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw FormatError("cannot open '" + path + "' for writing");
  out << kExampleFormatId << ' ' << kExampleFormatVersion << ' ' << buf.dim() << ' ' << buf.size() << ' '
      << buf.task().name << '\n';
  for (const auto& s : buf.states()) {
    for (Eigen::Index j = 0; j < s.size(); ++j) {
      if (j) out << ' ';
      out << format_double(s[j]);
    }
    out << '\n';
  }
  if (!out) throw FormatError("write failed for '" + path + "'");
}

/// Reads an example file. The task kind is not stored; callers pass it.
inline ExampleBuffer load_examples(const std::string& path, TaskKind kind = TaskKind::main) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open example file '" + path + "'");
  std::string header;
  if (!std::getline(in, header)) throw FormatError("example file '" + path + "' is empty");
  std::istringstream hs(header);
  std::string id, name;
  int version = 0;
  long long dim = -1, count = -1;
  hs >> id >> version >> dim >> count >> name;
  if (id != kExampleFormatId) throw FormatError("'" + path + "' is not an example file");
  if (version != kExampleFormatVersion)
    throw FormatError("example file version " + std::to_string(version) + " unsupported (expected " +
                      std::to_string(kExampleFormatVersion) + ")");
  if (!hs || dim <= 0 || count <= 0) throw FormatError("malformed example header in '" + path + "'");

  std::vector<Vec> states;
  states.reserve(static_cast<std::size_t>(count));
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::vector<double> row;
    std::string tok;
    while (ls >> tok) {
      double v = 0.0;
      if (!parse_double(tok, v)) throw FormatError("bad number '" + tok + "' in '" + path + "'");
      row.push_back(v);
    }
    if (static_cast<long long>(row.size()) != dim)
      throw DimensionError("example row " + std::to_string(states.size()), static_cast<std::size_t>(dim),
                           row.size());
    states.push_back(Eigen::Map<Vec>(row.data(), dim));
  }
  if (static_cast<long long>(states.size()) != count)
    throw FormatError("example file '" + path + "' declares " + std::to_string(count) + " rows, found " +
                      std::to_string(states.size()));
  return ExampleBuffer(TaskId{name, kind}, std::move(states));
}

}  // namespace ebc
