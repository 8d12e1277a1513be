#pragma once

#include "ebc/core/error.hpp"
#include "ebc/core/types.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <utility>
#include <vector>

namespace ebc {

/// Interquartile mean with fractional trimming. Sorted value i covers the unit
/// interval [i, i+1); the result averages the values over [n/4, 3n/4) weighted
/// by overlap.
inline double iqm(std::vector<double> values) {
  if (values.empty()) throw Error("IQM of an empty sequence");
  for (double v : values)
    if (!std::isfinite(v)) throw NonFiniteError("IQM input is not finite");
  std::sort(values.begin(), values.end());
  const double n = static_cast<double>(values.size());
  const double lo = 0.25 * n, hi = 0.75 * n;
  double acc = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double a = std::max(lo, static_cast<double>(i)), b = std::min(hi, static_cast<double>(i + 1));
    if (b > a) acc += (b - a) * values[i];
  }
  return acc / (hi - lo);
}

/// Linear-interpolation quantile (the usual "type 7" definition).
inline double quantile(std::vector<double> v, double q) {
  if (v.empty()) throw Error("quantile of an empty sequence");
  if (!(q >= 0.0 && q <= 1.0)) throw ConfigError("quantile level must lie in [0, 1]");
  std::sort(v.begin(), v.end());
  const double h = q * static_cast<double>(v.size() - 1);
  const auto i = static_cast<std::size_t>(std::floor(h));
  if (i + 1 >= v.size()) return v.back();
  return v[i] + (h - static_cast<double>(i)) * (v[i + 1] - v[i]);
}

/// Scores for one task: rows are seeds, columns evaluation points.
struct RunMatrix {
  std::string task;
  std::vector<std::size_t> steps;
  std::vector<std::vector<double>> values;

  std::size_t seeds() const noexcept { return values.size(); }
  std::size_t points() const noexcept { return values.empty() ? 0 : values.front().size(); }

  void validate() const {
    if (values.empty()) throw Error("run matrix for '" + task + "' has no seeds");
    for (const auto& r : values)
      if (r.size() != values.front().size())
        throw DimensionError("run matrix row", values.front().size(), r.size());
    if (!steps.empty() && steps.size() != points()) throw DimensionError("run matrix steps", points(), steps.size());
  }

  /// Columns [first, last) of every row, flattened.
  std::vector<double> pooled(std::size_t first, std::size_t last) const {
    std::vector<double> out;
    for (const auto& r : values) out.insert(out.end(), r.begin() + static_cast<std::ptrdiff_t>(first), r.begin() + static_cast<std::ptrdiff_t>(last));
    return out;
  }
};

struct Interval {
  double low = 0.0;
  double high = 0.0;
};

/// IQM over every value of every task, restricted to columns [first, last).
inline double pooled_iqm(const std::vector<RunMatrix>& tasks, std::size_t first, std::size_t last) {
  std::vector<double> all;
  for (const auto& m : tasks) {
    auto p = m.pooled(first, last);
    all.insert(all.end(), p.begin(), p.end());
  }
  return iqm(std::move(all));
}

/// Percentile bootstrap: seeds are resampled with replacement inside each task
/// stratum, the pooled IQM recomputed, and the (1-level)/2 tails cut off.
inline Interval stratified_bootstrap_ci(const std::vector<RunMatrix>& tasks, std::size_t resamples, double level,
                                        std::uint64_t seed, std::size_t first = 0,
                                        std::size_t last = static_cast<std::size_t>(-1)) {
  if (tasks.empty()) throw Error("bootstrap needs at least one task");
  if (resamples == 0) throw ConfigError("bootstrap needs at least one resample");
  if (!(level > 0.0 && level < 1.0)) throw ConfigError("confidence level must lie in (0, 1)");
  for (const auto& m : tasks) {
    m.validate();
    if (m.seeds() < 2)
      throw Error("bootstrap for task '" + m.task + "' has a single seed; at least 2 seeds are needed");
  }
  last = std::min(last, tasks.front().points());
  if (first >= last) throw Error("bootstrap window is empty");
  Rng rng(seed);
  std::vector<double> stats(resamples);
  std::vector<double> pool;
  for (auto& s : stats) {
    pool.clear();
    for (const auto& m : tasks) {
      for (std::size_t k = 0; k < m.seeds(); ++k) {
        const auto& row = m.values[uniform_index(rng, m.seeds())];
        pool.insert(pool.end(), row.begin() + static_cast<std::ptrdiff_t>(first),
                    row.begin() + static_cast<std::ptrdiff_t>(last));
      }
    }
    s = iqm(pool);
  }
  const double tail = 0.5 * (1.0 - level);
  std::sort(stats.begin(), stats.end());
  return {quantile(stats, tail), quantile(stats, 1.0 - tail)};
}

struct WindowRow {
  std::string task;
  std::size_t step = 0;
  double iqm = 0.0;
  Interval ci;
};

/// IQM and CI at each evaluation point over the trailing `window` points.
inline std::vector<WindowRow> windowed_summary(const RunMatrix& m, std::size_t window, std::size_t resamples,
                                               double level, std::uint64_t seed) {
  m.validate();
  if (window == 0) throw ConfigError("IQM window must be at least 1");
  std::vector<WindowRow> rows;
  for (std::size_t t = 0; t < m.points(); ++t) {
    const std::size_t first = t + 1 >= window ? t + 1 - window : 0;
    WindowRow r;
    r.task = m.task;
    r.step = m.steps.empty() ? t : m.steps[t];
    r.iqm = iqm(m.pooled(first, t + 1));
    if (m.seeds() >= 2)
      r.ci = stratified_bootstrap_ci({m}, resamples, level, derive_seed(seed, t), first, t + 1);
    else
      r.ci = {r.iqm, r.iqm};
    rows.push_back(r);
  }
  return rows;
}

}  // namespace ebc
