#pragma once

#include "ebc/core/example_buffer.hpp"
#include "ebc/envs/env.hpp"
#include "ebc/intentions/intention.hpp"

#include <algorithm>
#include <limits>
#include <vector>

namespace ebc {

struct QTracePoint {
  std::size_t t = 0;
  double q = 0.0;
  double diff = 0.0;  // Q(s_t, a_t) - mean_{s*} V(s*)
};

struct QTrace {
  std::vector<QTracePoint> points;
  double example_value = 0.0;

  double max_diff() const {
    double m = -std::numeric_limits<double>::infinity();
    for (const auto& p : points) m = std::max(m, p.diff);
    return m;
  }

  std::size_t violations(double tol = 0.0) const {
    return static_cast<std::size_t>(std::count_if(points.begin(), points.end(), [&](const QTracePoint& p) {
      return p.diff > tol;
    }));
  }
};

/// Mean over the example buffer of min-twin Q(s*, a*), a* drawn fresh from the policy.
inline double mean_example_value(const Intention& it, const ExampleBuffer& examples, Rng& rng) {
  Mat s(static_cast<Eigen::Index>(examples.dim()), static_cast<Eigen::Index>(examples.size()));
  for (std::size_t i = 0; i < examples.size(); ++i) s.col(static_cast<Eigen::Index>(i)) = examples[i];
  const Mat a = it.policy().sample(s, rng).action;
  return it.q_values(s, a).mean();
}

/// One deterministic-policy episode from `episode_seed`, recording the gap
/// between the visited Q values and the example-state value.
inline QTrace q_trace(const Intention& it, Env& env, const ExampleBuffer& examples, std::uint64_t episode_seed) {
  Rng rng(derive_seed(episode_seed, 0x7ace));
  QTrace tr;
  tr.example_value = mean_example_value(it, examples, rng);
  Vec s = env.reset(episode_seed);
  const std::size_t horizon = env.spec().episode_horizon;
  tr.points.reserve(horizon);
  for (std::size_t t = 0; t < horizon; ++t) {
    const Vec a = it.act(s, true, rng);
    const double q = it.q_values(Mat(s), Mat(a))[0];
    tr.points.push_back({t, q, q - tr.example_value});
    s = env.step(s, a);
  }
  return tr;
}

}  // namespace ebc
