#include "ebc/envs/chain_world.hpp"
#include "ebc/envs/frame_stack.hpp"
#include "ebc/envs/point_grab.hpp"

#include <gtest/gtest.h>

using namespace ebc;

namespace {

Vec act(double x, double z, double g) { return (Vec(3) << x, z, g).finished(); }

// One-sample Kolmogorov-Smirnov statistic against U(lo, hi).
double ks_uniform(std::vector<double> v, double lo, double hi) {
  std::sort(v.begin(), v.end());
  const double n = static_cast<double>(v.size());
  double d = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    const double f = (v[i] - lo) / (hi - lo);
    d = std::max({d, (i + 1) / n - f, f - i / n});
  }
  return d;
}

bool in_bounds(const PointGrab& env, const Vec& s) {
  const auto& c = env.config();
  for (Eigen::Index x : {PointGrab::kGx, PointGrab::kAx, PointGrab::kBx})
    if (s[x] < c.x_min - 1e-12 || s[x] > c.x_max + 1e-12) return false;
  for (Eigen::Index z : {PointGrab::kGz, PointGrab::kAz, PointGrab::kBz})
    if (s[z] < env.table_z() - 1e-12 || s[z] > c.z_max + c.block_size + 1e-12) return false;
  return s[PointGrab::kAperture] >= 0.0 && s[PointGrab::kAperture] <= 1.0;
}

}  // namespace

TEST(Chain, ResetAndAbsorbingGoal) {
  ChainWorld env;
  const Vec s0 = env.reset(123);
  EXPECT_EQ(s0, env.encode(0));
  EXPECT_EQ(env.decode(env.step(env.encode(3), Vec::Constant(1, 1.0))), 4u);
  for (double a : {-1.0, 0.0, 0.3, 1.0}) EXPECT_EQ(env.decode(env.step(env.encode(4), Vec::Constant(1, a))), 4u);
  EXPECT_EQ(env.decode(env.step(env.encode(0), Vec::Constant(1, -1.0))), 0u);
  EXPECT_EQ(env.clamp_warnings(), 0u);
  env.step(env.encode(1), Vec::Constant(1, 3.0));
  EXPECT_EQ(env.clamp_warnings(), 1u);
  EXPECT_THROW(env.step(Vec::Zero(3), Vec::Zero(1)), DimensionError);
  EXPECT_THROW(ChainWorld(ChainWorldConfig{1}), ConfigError);
}

TEST(Chain, ExamplesAreGoalCopies) {
  ChainWorld env;
  const auto ex = env.generate_examples({"goal", TaskKind::main}, 10, 0);
  ASSERT_EQ(ex.size(), 10u);
  const auto pred = env.success_predicate({"goal", TaskKind::main});
  for (const auto& s : ex.states()) EXPECT_TRUE(pred(s));
  EXPECT_FALSE(pred(env.encode(3)));
  EXPECT_THROW(env.generate_examples({"other", TaskKind::main}, 1, 0), ConfigError);
}

TEST(Chain, ExactQMatchesHandValues) {
  ChainWorld env;
  const std::vector<double> r{-0.1, -0.1, -0.1, -0.1, 0.1};
  const auto t = chain_exact_q(env, r, 0.9, 1e-10);
  EXPECT_NEAR(t.value(4), 1.0, 1e-9);
  EXPECT_NEAR(t.q[3][1], 0.8, 1e-9);
  EXPECT_LT(t.residual, 1e-10);
  // Bellman check done here, not inside the solver.
  for (std::size_t s = 0; s < 5; ++s)
    for (int a = 0; a < 2; ++a) {
      const double y = r[s] + 0.9 * t.value(env.move(s, a ? 1 : -1));
      EXPECT_NEAR(t.q[s][static_cast<std::size_t>(a)], y, 1e-9);
    }
  for (std::size_t s = 0; s + 1 < 5; ++s) EXPECT_LE(t.value(s), t.value(s + 1));
}

TEST(Chain, ExactQMyopicAndSlip) {
  ChainWorld env;
  const std::vector<double> r{-0.1, -0.1, -0.1, -0.1, 0.1};
  const auto t0 = chain_exact_q(env, r, 0.0, 1e-12);
  for (std::size_t s = 0; s < 5; ++s) {
    EXPECT_EQ(t0.q[s][0], r[s]);
    EXPECT_EQ(t0.q[s][1], r[s]);
  }
  ChainWorldConfig c;
  c.slip_prob = 0.2;
  ChainWorld slippy(c);
  const auto ts = chain_exact_q(slippy, r, 0.9, 1e-10);
  for (std::size_t s = 0; s + 1 < 5; ++s) EXPECT_LE(ts.value(s), ts.value(s + 1));
  EXPECT_THROW(chain_exact_q(env, r, 0.9, 1e-10, 3), ConvergenceError);
  EXPECT_THROW(chain_exact_q(env, {0.0}, 0.9, 1e-10), DimensionError);
}

TEST(PointGrab, ResetDeterministicAndUniform) {
  PointGrab env;
  EXPECT_EQ(env.reset(42), env.reset(42));
  EXPECT_NE(env.reset(42), env.reset(43));
  std::vector<double> gx, gz, ax;
  for (std::uint64_t s = 0; s < 1000; ++s) {
    const Vec v = env.reset(derive_seed(9, s));
    gx.push_back(v[PointGrab::kGx]);
    gz.push_back(v[PointGrab::kGz]);
    ax.push_back(v[PointGrab::kAx]);
    EXPECT_EQ(v[PointGrab::kAperture], 1.0);
  }
  const double crit = 1.628 / std::sqrt(1000.0);  // alpha = 0.01
  const auto& c = env.config();
  EXPECT_LT(ks_uniform(gx, c.gripper_spawn_x[0], c.gripper_spawn_x[1]), crit);
  EXPECT_LT(ks_uniform(gz, c.gripper_spawn_z[0], c.gripper_spawn_z[1]), crit);
  EXPECT_LT(ks_uniform(ax, c.block_a_spawn_x[0], c.block_a_spawn_x[1]), crit);
}

TEST(PointGrab, GraspThenLiftCarriesBlock) {
  PointGrab env;
  Vec s = env.reset(1);
  // Put the gripper right on block A.
  s[PointGrab::kGx] = s[PointGrab::kAx];
  s[PointGrab::kGz] = s[PointGrab::kAz];
  s = env.step(s, act(0, 0, 1));
  EXPECT_EQ(s[PointGrab::kAHeld], 1.0);
  EXPECT_EQ(s[PointGrab::kBHeld], 0.0);
  const double x0 = s[PointGrab::kAx];
  s = env.step(s, act(0.5, 1, 1));
  EXPECT_NEAR(s[PointGrab::kAx], x0 + 0.05, 1e-12);
  EXPECT_EQ(s[PointGrab::kAx], s[PointGrab::kGx]);
  EXPECT_EQ(s[PointGrab::kAz], s[PointGrab::kGz]);
  EXPECT_TRUE(env.evaluate("grasp", s));
  s = env.step(s, act(0, 1, 1));
  EXPECT_TRUE(env.evaluate("lift", s));
  // Opening drops it back to the table.
  s = env.step(s, act(0, 0, -1));
  EXPECT_EQ(s[PointGrab::kAHeld], 0.0);
  EXPECT_EQ(s[PointGrab::kAz], env.table_z());
}

TEST(PointGrab, OpenOrFarGripperCannotHold) {
  PointGrab env;
  Vec s = env.reset(2);
  s[PointGrab::kGx] = s[PointGrab::kAx];
  s[PointGrab::kGz] = s[PointGrab::kAz];
  s = env.step(s, act(0, 0, 0));  // aperture 0.5: not closed
  EXPECT_EQ(s[PointGrab::kAHeld], 0.0);
  Vec far = env.reset(2);
  far[PointGrab::kGz] = 0.45;
  far = env.step(far, act(0, 0, 1));
  EXPECT_EQ(far[PointGrab::kAHeld] + far[PointGrab::kBHeld], 0.0);
}

TEST(PointGrab, BoundaryClampsOutwardMoves) {
  PointGrab env;
  Vec s = env.reset(3);
  s[PointGrab::kGx] = env.config().x_max;
  s[PointGrab::kGz] = env.config().z_max;
  const Vec n = env.step(s, act(1, 1, -1));
  EXPECT_EQ(n[PointGrab::kGx], env.config().x_max);
  EXPECT_EQ(n[PointGrab::kGz], env.config().z_max);
  s[PointGrab::kGx] = env.config().x_min;
  EXPECT_EQ(env.step(s, act(-1, 0, -1))[PointGrab::kGx], env.config().x_min);
  EXPECT_EQ(env.clamp_warnings(), 0u);
  env.step(s, act(-2, 0, -1));
  EXPECT_EQ(env.clamp_warnings(), 1u);
}

TEST(PointGrab, RandomRolloutsKeepInvariants) {
  PointGrab env;
  Rng rng(4);
  for (int ep = 0; ep < 30; ++ep) {
    Vec s = env.reset(rng());
    for (int t = 0; t < 120; ++t) {
      s = env.step(s, act(uniform(rng, -1, 1), uniform(rng, -1, 1), uniform(rng, -1, 1)));
      ASSERT_TRUE(in_bounds(env, s));
      ASSERT_LE(s[PointGrab::kAHeld] + s[PointGrab::kBHeld], 1.0);
      EXPECT_DOUBLE_EQ(s[9], s[PointGrab::kAx] - s[PointGrab::kGx]);
      EXPECT_DOUBLE_EQ(s[12], s[PointGrab::kBz] - s[PointGrab::kAz]);
    }
  }
}

TEST(PointGrab, ScriptedExamplesSatisfyPredicates) {
  PointGrab env;
  for (const auto& [name, count] : std::vector<std::pair<std::string, std::size_t>>{
           {"reach", 50}, {"grasp", 200}, {"lift", 50}, {"release", 50}, {"stack", 50}}) {
    const TaskId task{name, name == "stack" ? TaskKind::main : TaskKind::auxiliary};
    const auto ex = env.generate_examples(task, count, 11);
    ASSERT_EQ(ex.size(), count) << name;
    const auto pred = env.success_predicate(task);
    for (const auto& s : ex.states()) {
      EXPECT_TRUE(pred(s)) << name;
      EXPECT_TRUE(in_bounds(env, s)) << name;
    }
    if (name == "grasp") {
      for (const auto& s : ex.states()) EXPECT_EQ(s[PointGrab::kAHeld], 1.0);
    }
    if (name == "stack")
      for (const auto& s : ex.states()) {
        EXPECT_NEAR(s[PointGrab::kAz], s[PointGrab::kBz] + env.config().block_size, 1e-12);
        EXPECT_LT(std::abs(s[PointGrab::kAx] - s[PointGrab::kBx]), 0.5 * env.config().block_size);
      }
  }
  EXPECT_THROW(env.generate_examples({"fly", TaskKind::main}, 3, 0), ConfigError);
  // Same seed, same examples.
  const auto a = env.generate_examples({"stack", TaskKind::main}, 5, 3);
  const auto b = env.generate_examples({"stack", TaskKind::main}, 5, 3);
  for (std::size_t i = 0; i < 5; ++i) EXPECT_EQ(a[i], b[i]);
}

TEST(PointGrab, ResetStateSatisfiesNoTask) {
  PointGrab env;
  for (std::uint64_t s = 0; s < 200; ++s) {
    const Vec v = env.reset(s);
    EXPECT_FALSE(env.evaluate("stack", v));
    EXPECT_FALSE(env.evaluate("grasp", v));
    EXPECT_FALSE(env.evaluate("release", v));
  }
}

TEST(FrameStack, ShapesPaddingAndIdentity) {
  EXPECT_THROW(FrameStack(std::make_unique<PointGrab>(), 0), ConfigError);
  FrameStack k1(std::make_unique<PointGrab>(), 1);
  PointGrab raw;
  EXPECT_EQ(k1.reset(5), raw.reset(5));
  const Vec a = act(0.3, -0.2, 1);
  EXPECT_EQ(k1.step(k1.reset(5), a), raw.step(raw.reset(5), a));

  FrameStack k2(std::make_unique<PointGrab>(), 2);
  const Vec o = k2.reset(6);
  const Vec o0 = raw.reset(6);
  EXPECT_EQ(o.head(13), o0);
  EXPECT_EQ(o.tail(13), o0);
  FrameStack k3(std::make_unique<ChainWorld>(), 3);
  EXPECT_EQ(k3.spec().obs_dim, 15u);
}

TEST(FrameStack, StrippingRecoversRawTrajectory) {
  FrameStack fs(std::make_unique<PointGrab>(), 3);
  PointGrab raw;
  Rng rng(7);
  Vec s = fs.reset(8), r = raw.reset(8);
  std::vector<Vec> hist{r, r, r};
  for (int t = 0; t < 40; ++t) {
    const Vec a = act(uniform(rng, -1, 1), uniform(rng, -1, 1), uniform(rng, -1, 1));
    s = fs.step(s, a);
    r = raw.step(r, a);
    hist.push_back(r);
    EXPECT_EQ(fs.latest(s), r);
    for (int k = 0; k < 3; ++k) EXPECT_EQ(s.segment(13 * k, 13), hist[hist.size() - 3 + static_cast<std::size_t>(k)]);
  }
  const auto ex = fs.generate_examples({"stack", TaskKind::main}, 5, 1);
  const auto pred = fs.success_predicate({"stack", TaskKind::main});
  for (const auto& e : ex.states()) {
    EXPECT_EQ(e.size(), 39);
    EXPECT_TRUE(pred(e));
  }
  auto c = fs.clone();
  EXPECT_EQ(c->reset(8), fs.reset(8));
}
