#pragma once

#include "ebc/core/error.hpp"
#include "ebc/core/example_buffer.hpp"
#include "ebc/core/task.hpp"
#include "ebc/core/types.hpp"

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace ebc {

struct EnvSpec {
  std::size_t obs_dim = 0;
  std::size_t act_dim = 0;
  std::size_t episode_horizon = 1;
  double gamma = 0.99;
  std::string initial_state_sampler;

  void validate() const {
    if (episode_horizon < 1) throw ConfigError("episode horizon must be >= 1");
    if (!(gamma > 0.0 && gamma < 1.0)) throw ConfigError("gamma must lie in (0, 1)");
    if (obs_dim == 0 || act_dim == 0) throw ConfigError("observation and action dimensions must be positive");
  }
};

/// Evaluation-only success test for one task. The trainer never hands these
/// to the learner.
struct SuccessPredicate {
  TaskId task;
  std::function<bool(const Vec&)> evaluator;

  bool operator()(const Vec& s) const { return evaluator(s); }
};

/// An environment is a transition function over explicit state vectors, so
/// the observation is the state. Instances own their own random stream.
class Env {
 public:
  virtual ~Env() = default;

  virtual const EnvSpec& spec() const = 0;
  virtual std::string id() const = 0;
  virtual std::unique_ptr<Env> clone() const = 0;

  /// Draws s0 from the initial-state distribution and reseeds the env stream.
  virtual Vec reset(std::uint64_t seed) = 0;

  /// Out-of-range action components are clamped to [-1, 1] and counted.
  virtual Vec step(const Vec& state, const Vec& action) = 0;

  virtual std::vector<std::string> task_names() const = 0;
  virtual SuccessPredicate success_predicate(const TaskId& task) const = 0;

  /// Scripted-expert generation of `count` success states for `task`.
  virtual ExampleBuffer generate_examples(const TaskId& task, std::size_t count, std::uint64_t seed) const = 0;

  std::size_t clamp_warnings() const noexcept { return clamp_warnings_; }

 protected:
  Vec clamp_action(const Vec& action) {
    if (static_cast<std::size_t>(action.size()) != spec().act_dim)
      throw DimensionError("action", spec().act_dim, static_cast<std::size_t>(action.size()));
    if (!action.allFinite()) throw NonFiniteError("action has a non-finite component");
    Vec a = action.cwiseMax(-1.0).cwiseMin(1.0);
    if (a != action) ++clamp_warnings_;
    return a;
  }

  void check_state(const Vec& state) const {
    if (static_cast<std::size_t>(state.size()) != spec().obs_dim)
      throw DimensionError("state", spec().obs_dim, static_cast<std::size_t>(state.size()));
  }

  std::size_t clamp_warnings_ = 0;
};

}  // namespace ebc
