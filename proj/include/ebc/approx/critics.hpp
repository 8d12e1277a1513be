#pragma once

#include "ebc/approx/mlp.hpp"
#include "ebc/approx/optim.hpp"

#include <array>
#include <vector>

namespace ebc {

/// Stacks states over actions into critic inputs.
inline Mat critic_input(const Mat& states, const Mat& actions) {
  if (states.cols() != actions.cols())
    throw DimensionError("critic batch", static_cast<std::size_t>(states.cols()),
                         static_cast<std::size_t>(actions.cols()));
  Mat x(states.rows() + actions.rows(), states.cols());
  x.topRows(states.rows()) = states;
  x.bottomRows(actions.rows()) = actions;
  return x;
}

/// Two independent Q networks and their Polyak-averaged targets.
struct TwinCritics {
  std::array<Mlp, 2> online;
  std::array<Mlp, 2> target;
  double tau = 1e-3;

  TwinCritics() = default;
  TwinCritics(std::size_t obs_dim, std::size_t act_dim, const std::vector<std::size_t>& hidden, double tau_, Rng& rng)
      : tau(tau_) {
    std::vector<std::size_t> sizes{obs_dim + act_dim};
    sizes.insert(sizes.end(), hidden.begin(), hidden.end());
    sizes.push_back(1);
    for (auto& q : online) q = Mlp(sizes, rng);
    target = online;
  }

  /// Element-wise minimum of the two online critics (1 x N).
  Mat min_online(const Mat& x) const { return online[0].forward(x).cwiseMin(online[1].forward(x)); }
  Mat min_target(const Mat& x) const { return target[0].forward(x).cwiseMin(target[1].forward(x)); }

  void update_targets() {
    for (std::size_t i = 0; i < 2; ++i) polyak_update(target[i].params(), online[i].params(), tau);
  }
};

}  // namespace ebc
