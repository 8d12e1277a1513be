#pragma once

#include "ebc/core/error.hpp"
#include "ebc/core/task.hpp"
#include "ebc/core/types.hpp"

#include <algorithm>
#include <string>
#include <vector>

namespace ebc {

/// Trajectories hold task names; they are resolved against the TaskSet at use.
struct SchedulerConfig {
  std::size_t num_periods = 8;
  double p_main = 0.5;
  double handcraft_rate = 0.5;
  std::vector<std::vector<std::string>> trajectories;

  void validate() const {
    if (num_periods == 0) throw ConfigError("scheduler needs at least one period");
    if (!(p_main >= 0.0 && p_main <= 1.0)) throw ConfigError("p_main must lie in [0, 1]");
    if (!(handcraft_rate >= 0.0 && handcraft_rate <= 1.0)) throw ConfigError("handcraft_rate must lie in [0, 1]");
    if (handcraft_rate > 0.0 && trajectories.empty())
      throw ConfigError("handcraft_rate > 0 but no handcrafted trajectories are configured");
    for (const auto& t : trajectories)
      if (t.size() != num_periods)
        throw ConfigError("handcrafted trajectory has " + std::to_string(t.size()) + " entries, expected " +
                          std::to_string(num_periods));
  }

  void validate(const TaskSet& tasks) const {
    validate();
    for (const auto& t : trajectories)
      for (const auto& name : t)
        if (name != "main" && !tasks.contains(name))
          throw ConfigError("scheduler trajectory names unknown task '" + name + "'");
  }
};

/// "main" in a trajectory means the task set's main task.
inline SchedulerConfig panda_scheduler() {
  SchedulerConfig c;
  c.num_periods = 8;
  c.trajectories = {
      {"reach", "lift", "main", "release", "reach", "lift", "main", "release"},
      {"lift", "main", "release", "lift", "main", "release", "lift", "main"},
      {"main", "release", "main", "release", "main", "release", "main", "release"},
  };
  return c;
}

inline SchedulerConfig sawyer_scheduler() {
  SchedulerConfig c;
  c.num_periods = 5;
  c.trajectories = {
      {"reach", "grasp", "main", "main", "main"},
      {"main", "main", "main", "main", "main"},
  };
  return c;
}

struct SchedulerState {
  /// -1 for WRS, otherwise an index into cfg.trajectories.
  int trajectory = -1;
  std::size_t num_periods = 1;
  std::size_t period = 0;
  std::size_t period_length = 1;
  std::size_t horizon = 1;
  std::size_t step = 0;  // steps taken in the episode so far
  std::size_t selections = 0;

  bool wrs() const noexcept { return trajectory < 0; }
  /// Switches happen at multiples of period_length; the last period runs to the horizon.
  bool at_boundary() const noexcept { return selections < num_periods && step == selections * period_length; }
  std::size_t steps_remaining_in_period() const noexcept {
    const std::size_t end = (period + 1 == num_periods) ? horizon : (period + 1) * period_length;
    return end > step ? end - step : 0;
  }
};

inline SchedulerState begin_episode(const SchedulerConfig& cfg, std::size_t horizon, Rng& rng) {
  cfg.validate();
  if (horizon < cfg.num_periods)
    throw ConfigError("episode horizon " + std::to_string(horizon) + " is shorter than " +
                      std::to_string(cfg.num_periods) + " scheduler periods");
  SchedulerState s;
  s.num_periods = cfg.num_periods;
  s.horizon = horizon;
  s.period_length = horizon / cfg.num_periods;
  if (cfg.handcraft_rate > 0.0 && canonical(rng) < cfg.handcraft_rate)
    s.trajectory = static_cast<int>(uniform_index(rng, cfg.trajectories.size()));
  return s;
}

/// WRS: main with p_main, each auxiliary task with (1 - p_main) / K.
inline std::size_t wrs_draw(const TaskSet& tasks, double p_main, Rng& rng) {
  const double u = canonical(rng);
  const std::size_t k = tasks.num_aux();
  if (k == 0 || u < p_main) return 0;
  const std::size_t j = static_cast<std::size_t>((u - p_main) / (1.0 - p_main) * static_cast<double>(k));
  return 1 + std::min(j, k - 1);
}

/// Index of the task that acts for the period starting now.
inline std::size_t select_task(SchedulerState& state, const SchedulerConfig& cfg, const TaskSet& tasks, Rng& rng) {
  if (!state.at_boundary())
    throw Error("scheduler selection requested off a period boundary (step " + std::to_string(state.step) + ")");
  state.period = state.selections;
  ++state.selections;
  if (state.wrs()) return wrs_draw(tasks, cfg.p_main, rng);
  const std::string& name = cfg.trajectories[static_cast<std::size_t>(state.trajectory)][state.period];
  return name == "main" ? 0 : tasks.index_of(name);
}

inline void advance(SchedulerState& state) { ++state.step; }

/// Evaluation never consults the scheduler: the main task always acts.
inline std::size_t eval_policy_selector() noexcept { return 0; }

}  // namespace ebc
