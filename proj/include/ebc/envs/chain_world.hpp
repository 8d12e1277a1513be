#pragma once

#include "ebc/envs/env.hpp"

#include <algorithm>
#include <array>
#include <cmath>

namespace ebc {

struct ChainWorldConfig {
  std::size_t n_states = 5;
  /// Defaults to the last state.
  std::size_t goal_state = static_cast<std::size_t>(-1);
  /// Probability that the chosen move is reversed.
  double slip_prob = 0.0;
  std::size_t horizon = 50;
  double gamma = 0.9;
};

/// Discrete chain with one-hot observations and a single continuous action
/// component whose sign picks the move (> 0 steps right, otherwise left).
/// Moves clamp at both ends and the goal is absorbing.
class ChainWorld final : public Env {
 public:
  explicit ChainWorld(ChainWorldConfig cfg = {}) : cfg_(cfg) {
    if (cfg_.n_states < 2) throw ConfigError("chain needs at least 2 states");
    if (cfg_.goal_state == static_cast<std::size_t>(-1)) cfg_.goal_state = cfg_.n_states - 1;
    if (cfg_.goal_state >= cfg_.n_states) throw ConfigError("goal state out of range");
    if (!(cfg_.slip_prob >= 0.0 && cfg_.slip_prob < 1.0)) throw ConfigError("slip_prob must lie in [0, 1)");
    spec_.obs_dim = cfg_.n_states;
    spec_.act_dim = 1;
    spec_.episode_horizon = cfg_.horizon;
    spec_.gamma = cfg_.gamma;
    spec_.initial_state_sampler = "fixed: state 0";
    spec_.validate();
  }

  const EnvSpec& spec() const override { return spec_; }
  std::string id() const override { return "chain"; }
  std::unique_ptr<Env> clone() const override { return std::make_unique<ChainWorld>(*this); }
  const ChainWorldConfig& config() const noexcept { return cfg_; }

  Vec encode(std::size_t index) const {
    Vec s = Vec::Zero(static_cast<Eigen::Index>(cfg_.n_states));
    s[static_cast<Eigen::Index>(index)] = 1.0;
    return s;
  }

  std::size_t decode(const Vec& s) const {
    check_state(s);
    Eigen::Index i = 0;
    s.maxCoeff(&i);
    return static_cast<std::size_t>(i);
  }

  /// Deterministic successor for a move direction (+1 or -1).
  std::size_t move(std::size_t s, int dir) const {
    if (s == cfg_.goal_state) return s;
    if (dir > 0) return std::min(s + 1, cfg_.n_states - 1);
    return s == 0 ? 0 : s - 1;
  }

  Vec reset(std::uint64_t seed) override {
    rng_.seed(seed);
    return encode(0);
  }

  Vec step(const Vec& state, const Vec& action) override {
    const Vec a = clamp_action(action);
    int dir = a[0] > 0.0 ? 1 : -1;
    if (cfg_.slip_prob > 0.0 && canonical(rng_) < cfg_.slip_prob) dir = -dir;
    return encode(move(decode(state), dir));
  }

  std::vector<std::string> task_names() const override { return {"goal"}; }

  SuccessPredicate success_predicate(const TaskId& task) const override {
    if (task.name != "goal") throw ConfigError("chain has no task '" + task.name + "'");
    const std::size_t goal = cfg_.goal_state;
    const ChainWorld self = *this;
    return {task, [self, goal](const Vec& s) { return self.decode(s) == goal; }};
  }

  ExampleBuffer generate_examples(const TaskId& task, std::size_t count, std::uint64_t) const override {
    if (task.name != "goal") throw ConfigError("chain has no scripted expert for '" + task.name + "'");
    if (count == 0) throw ConfigError("example count must be positive");
    return ExampleBuffer(task, std::vector<Vec>(count, encode(cfg_.goal_state)));
  }

 private:
  ChainWorldConfig cfg_;
  EnvSpec spec_;
  Rng rng_{0};
};

/// Exact action values for ChainWorld by value iteration:
///   Q(s, a) = R(s) + gamma * E[max_a' Q(s', a')]
/// Actions are indexed 0 = left, 1 = right.
struct ChainQTable {
  std::vector<std::array<double, 2>> q;
  double residual = 0.0;
  std::size_t iterations = 0;

  double value(std::size_t s) const { return std::max(q[s][0], q[s][1]); }
};

inline ChainQTable chain_exact_q(const ChainWorld& env, const std::vector<double>& state_reward, double gamma,
                                 double tol, std::size_t max_iters = 1'000'000) {
  const std::size_t n = env.config().n_states;
  if (state_reward.size() != n) throw DimensionError("state_reward", n, state_reward.size());
  if (!(gamma >= 0.0 && gamma < 1.0)) throw ConfigError("gamma must lie in [0, 1)");
  const double slip = env.config().slip_prob;
  ChainQTable out;
  out.q.assign(n, {0.0, 0.0});
  std::vector<double> v(n, 0.0);
  for (std::size_t it = 0; it < max_iters; ++it) {
    double res = 0.0;
    for (std::size_t s = 0; s < n; ++s) {
      for (int a = 0; a < 2; ++a) {
        const int dir = a == 1 ? 1 : -1;
        const double next = (1.0 - slip) * v[env.move(s, dir)] + slip * v[env.move(s, -dir)];
        const double q = state_reward[s] + gamma * next;
        res = std::max(res, std::abs(q - out.q[s][static_cast<std::size_t>(a)]));
        out.q[s][static_cast<std::size_t>(a)] = q;
      }
    }
    for (std::size_t s = 0; s < n; ++s) v[s] = out.value(s);
    out.iterations = it + 1;
    out.residual = res;
    if (res < tol) {
      // One more sweep measures the Bellman residual of the returned table.
      double bellman = 0.0;
      for (std::size_t s = 0; s < n; ++s)
        for (int a = 0; a < 2; ++a) {
          const int dir = a == 1 ? 1 : -1;
          const double q = state_reward[s] + gamma * ((1.0 - slip) * v[env.move(s, dir)] + slip * v[env.move(s, -dir)]);
          bellman = std::max(bellman, std::abs(q - out.q[s][static_cast<std::size_t>(a)]));
        }
      out.residual = bellman;
      if (bellman < tol) return out;
    }
  }
  throw ConvergenceError("chain value iteration did not reach tolerance within " + std::to_string(max_iters) +
                         " sweeps");
}

}  // namespace ebc
