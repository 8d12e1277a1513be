#pragma once

#include "ebc/envs/env.hpp"

#include <algorithm>
#include <array>
#include <cmath>

namespace ebc {

struct PointGrabConfig {
  // Side view of a desk: x is horizontal, z is height. Block coordinates are
  // block centres, so a block on the table sits at z = block_size / 2.
  double x_min = 0.0;
  double x_max = 1.0;
  double z_max = 0.5;
  double block_size = 0.1;
  /// Gripper displacement per unit action per step.
  double max_move = 0.1;
  double reach_threshold = 0.05;
  /// Aperture strictly below this counts as closed.
  double grasp_threshold = 0.3;
  double lift_height = 0.2;

  std::array<double, 2> gripper_spawn_x{0.1, 0.9};
  std::array<double, 2> gripper_spawn_z{0.2, 0.4};
  std::array<double, 2> block_a_spawn_x{0.1, 0.4};
  std::array<double, 2> block_b_spawn_x{0.6, 0.9};

  std::size_t horizon = 120;
  double gamma = 0.99;
};

/// Kinematic planar pick-and-place with two blocks.
///
/// State layout (13 values):
///   [0,1]  gripper x, z        [2] aperture in [0, 1] (0 = closed)
///   [3,4]  block A x, z        [5] A held flag
///   [6,7]  block B x, z        [8] B held flag
///   [9,10] A minus gripper     [11,12] B minus A
/// The trailing relative coordinates are recomputed on every step.
///
/// Action (3 values): horizontal move, vertical move, grip command. The grip
/// command sets aperture = (1 - grip) / 2, so +1 closes fully. Grasp/release
/// is resolved at the current gripper position before the move; a held block
/// travels with the gripper; released blocks drop onto the other block when
/// horizontally overlapping it by more than half a width, otherwise onto the
/// table.
class PointGrab final : public Env {
 public:
  static constexpr Eigen::Index kGx = 0, kGz = 1, kAperture = 2;
  static constexpr Eigen::Index kAx = 3, kAz = 4, kAHeld = 5;
  static constexpr Eigen::Index kBx = 6, kBz = 7, kBHeld = 8;
  static constexpr Eigen::Index kDim = 13;

  explicit PointGrab(PointGrabConfig cfg = {}) : cfg_(cfg) {
    if (!(cfg_.x_max > cfg_.x_min) || !(cfg_.z_max > table_z()))
      throw ConfigError("point_grab workspace bounds are empty");
    if (!(cfg_.max_move > 0.0) || !(cfg_.block_size > 0.0)) throw ConfigError("point_grab scales must be positive");
    spec_.obs_dim = kDim;
    spec_.act_dim = 3;
    spec_.episode_horizon = cfg_.horizon;
    spec_.gamma = cfg_.gamma;
    spec_.initial_state_sampler =
        "gripper uniform over spawn box, aperture open, blocks on table at uniform x in their spawn ranges";
    spec_.validate();
  }

  const EnvSpec& spec() const override { return spec_; }
  std::string id() const override { return "point_grab"; }
  std::unique_ptr<Env> clone() const override { return std::make_unique<PointGrab>(*this); }
  const PointGrabConfig& config() const noexcept { return cfg_; }

  double table_z() const { return 0.5 * cfg_.block_size; }

  Vec reset(std::uint64_t seed) override {
    rng_.seed(seed);
    Vec s = Vec::Zero(kDim);
    s[kGx] = uniform(rng_, cfg_.gripper_spawn_x[0], cfg_.gripper_spawn_x[1]);
    s[kGz] = uniform(rng_, cfg_.gripper_spawn_z[0], cfg_.gripper_spawn_z[1]);
    s[kAperture] = 1.0;
    s[kAx] = uniform(rng_, cfg_.block_a_spawn_x[0], cfg_.block_a_spawn_x[1]);
    s[kAz] = table_z();
    s[kBx] = uniform(rng_, cfg_.block_b_spawn_x[0], cfg_.block_b_spawn_x[1]);
    s[kBz] = table_z();
    refresh_relative(s);
    return s;
  }

  Vec step(const Vec& state, const Vec& action) override {
    check_state(state);
    const Vec a = clamp_action(action);
    Vec s = state;
    s[kAperture] = 0.5 * (1.0 - a[2]);
    const bool closed = s[kAperture] < cfg_.grasp_threshold;

    const bool a_held = s[kAHeld] > 0.5, b_held = s[kBHeld] > 0.5;
    if (a_held || b_held) {
      if (!closed) s[kAHeld] = s[kBHeld] = 0.0;
    } else if (closed) {
      const double da = dist_to(s, kAx), db = dist_to(s, kBx);
      if (da < cfg_.reach_threshold && da <= db) {
        s[kAHeld] = 1.0;
      } else if (db < cfg_.reach_threshold) {
        s[kBHeld] = 1.0;
      }
    }

    s[kGx] = std::clamp(s[kGx] + cfg_.max_move * a[0], cfg_.x_min, cfg_.x_max);
    s[kGz] = std::clamp(s[kGz] + cfg_.max_move * a[1], table_z(), cfg_.z_max);
    if (s[kAHeld] > 0.5) {
      s[kAx] = s[kGx];
      s[kAz] = s[kGz];
    }
    if (s[kBHeld] > 0.5) {
      s[kBx] = s[kGx];
      s[kBz] = s[kGz];
    }
    settle(s);
    refresh_relative(s);
    return s;
  }

  std::vector<std::string> task_names() const override { return {"reach", "grasp", "lift", "release", "stack"}; }

  bool reach(const Vec& s) const { return s[kAHeld] < 0.5 && dist_to(s, kAx) < cfg_.reach_threshold; }
  bool grasp(const Vec& s) const { return s[kAHeld] > 0.5; }
  bool lift(const Vec& s) const { return s[kAHeld] > 0.5 && s[kAz] > cfg_.lift_height; }
  bool stacked(const Vec& s) const {
    return s[kAHeld] < 0.5 && s[kBHeld] < 0.5 && std::abs(s[kAx] - s[kBx]) < 0.5 * cfg_.block_size &&
           std::abs(s[kBz] - table_z()) < 1e-9 && std::abs(s[kAz] - (s[kBz] + cfg_.block_size)) < 1e-9;
  }
  bool release(const Vec& s) const {
    return stacked(s) && s[kAperture] >= cfg_.grasp_threshold && s[kGz] > s[kAz] &&
           dist_to(s, kAx) < 2.0 * cfg_.block_size;
  }

  bool evaluate(const std::string& task, const Vec& s) const {
    if (task == "reach") return reach(s);
    if (task == "grasp") return grasp(s);
    if (task == "lift") return lift(s);
    if (task == "release") return release(s);
    if (task == "stack") return stacked(s);
    throw ConfigError("point_grab has no task '" + task + "'");
  }

  SuccessPredicate success_predicate(const TaskId& task) const override {
    evaluate(task.name, reset_copy());  // validates the name
    const PointGrab self = *this;
    const std::string name = task.name;
    return {task, [self, name](const Vec& s) { return self.evaluate(name, s); }};
  }

  ExampleBuffer generate_examples(const TaskId& task, std::size_t count, std::uint64_t seed) const override;

 private:
  double dist_to(const Vec& s, Eigen::Index block_x) const {
    return std::hypot(s[kGx] - s[block_x], s[kGz] - s[block_x + 1]);
  }

  void settle(Vec& s) const {
    // Lower block first so a block resting on it sees its final height.
    std::array<Eigen::Index, 2> order{kAx, kBx};
    if (s[kBz] < s[kAz]) std::swap(order[0], order[1]);
    for (Eigen::Index x : order) {
      const Eigen::Index other = x == kAx ? kBx : kAx;
      if (s[x + 2] > 0.5) continue;
      const bool supported = s[other + 2] < 0.5 && std::abs(s[x] - s[other]) < 0.5 * cfg_.block_size &&
                             s[x + 1] > s[other + 1];
      s[x + 1] = supported ? s[other + 1] + cfg_.block_size : table_z();
    }
  }

  static void refresh_relative(Vec& s) {
    s[9] = s[kAx] - s[kGx];
    s[10] = s[kAz] - s[kGz];
    s[11] = s[kBx] - s[kAx];
    s[12] = s[kBz] - s[kAz];
  }

  Vec reset_copy() const {
    PointGrab tmp = *this;
    return tmp.reset(0);
  }

  PointGrabConfig cfg_;
  EnvSpec spec_;
  Rng rng_{0};
};

namespace detail {

struct Waypoint {
  double x;
  double z;
  double grip;  // +1 close, -1 open
};

/// Drives the gripper through waypoints with a saturated proportional law.
/// Returns false when the step cap is hit first.
inline bool drive(PointGrab& env, Vec& s, const std::vector<Waypoint>& wps, std::size_t& steps, std::size_t cap) {
  const double m = env.config().max_move;
  for (const auto& wp : wps) {
    while (true) {
      const double dx = wp.x - s[PointGrab::kGx], dz = wp.z - s[PointGrab::kGz];
      Vec a(3);
      a << std::clamp(dx / m, -1.0, 1.0), std::clamp(dz / m, -1.0, 1.0), wp.grip;
      s = env.step(s, a);
      if (++steps > cap) return false;
      if (std::abs(dx) < 1e-9 && std::abs(dz) < 1e-9) break;
    }
  }
  return true;
}

}  // namespace detail

inline ExampleBuffer PointGrab::generate_examples(const TaskId& task, std::size_t count, std::uint64_t seed) const {
  if (count == 0) throw ConfigError("example count must be positive");
  evaluate(task.name, reset_copy());
  Rng rng(seed);
  PointGrab env = *this;
  const double h = cfg_.block_size, tz = table_z(), r = cfg_.reach_threshold;
  const std::size_t cap = 400;
  const std::size_t max_attempts = count * 20;
  std::vector<Vec> out;
  out.reserve(count);
  std::size_t attempts = 0;
  while (out.size() < count) {
    if (attempts++ >= max_attempts)
      throw Error("scripted expert for '" + task.name + "' failed: " + std::to_string(out.size()) + "/" +
                  std::to_string(count) + " states after " + std::to_string(attempts - 1) + " attempts");
    Vec s = env.reset(rng());
    std::size_t steps = 0;
    const double ax = s[kAx], bx = s[kBx];
    // Offsets spread the examples over most of the success region instead of
    // a single point.
    const double jx = uniform(rng, -0.7, 0.7) * r, jz = uniform(rng, -0.7, 0.7) * r;
    std::vector<detail::Waypoint> wps;
    if (task.name == "reach") {
      wps = {{ax + jx, tz + std::abs(jz), -1.0}};
    } else if (task.name == "grasp") {
      wps = {{ax, tz, -1.0}, {ax, tz, 1.0}, {ax + jx, tz + uniform(rng, 0.0, 0.1), 1.0}};
    } else if (task.name == "lift") {
      wps = {{ax, tz, -1.0},
             {ax, tz, 1.0},
             {uniform(rng, cfg_.x_min + h, cfg_.x_max - h), uniform(rng, cfg_.lift_height + 0.02, cfg_.z_max), 1.0}};
    } else {  // stack and release share the placing motion
      const double carry_z = tz + 2.0 * h + 0.05;
      const double px = bx + uniform(rng, -0.2, 0.2) * h;
      wps = {{ax, tz, -1.0}, {ax, tz, 1.0}, {ax, carry_z, 1.0}, {px, carry_z, 1.0}, {px, tz + h, 1.0},
             {px, tz + h, -1.0}};
      if (task.name == "release")
        wps.push_back({px + jx, tz + h + uniform(rng, 0.02, 0.08), -1.0});
      else
        wps.push_back({uniform(rng, cfg_.x_min, cfg_.x_max), uniform(rng, tz + h, cfg_.z_max), -1.0});
    }
    if (!detail::drive(env, s, wps, steps, cap)) continue;
    if (!env.evaluate(task.name, s)) continue;
    out.push_back(s);
  }
  return ExampleBuffer(task, std::move(out));
}

}  // namespace ebc
