#include "ebc/intentions/intention.hpp"
#include "fd.hpp"

#include <gtest/gtest.h>

using namespace ebc;
using ebc::test::fd_check;
using ebc::test::random_mat;

namespace {

IntentionConfig small_cfg() {
  IntentionConfig c;
  c.hidden = {16, 16};
  return c;
}

Intention make(const IntentionConfig& c, std::uint64_t seed, std::size_t obs = 3, std::size_t act = 2,
               const std::string& name = "goal") {
  Rng rng(seed);
  return Intention({name, TaskKind::main}, obs, act, c, rng);
}

// One episode of `len` steps with random states, then a second episode.
ReplayBuffer episodes(std::size_t obs, std::size_t act, std::size_t len, Rng& rng) {
  ReplayBuffer buf(100);
  for (int ep = 0; ep < 2; ++ep) {
    Vec s = random_mat(static_cast<Eigen::Index>(obs), 1, rng).col(0);
    for (std::size_t t = 0; t < len; ++t) {
      Vec n = random_mat(static_cast<Eigen::Index>(obs), 1, rng).col(0);
      buf.push({s, random_mat(static_cast<Eigen::Index>(act), 1, rng).col(0), n, t});
      s = n;
    }
  }
  return buf;
}

std::vector<std::size_t> iota(std::size_t n) {
  std::vector<std::size_t> v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = i;
  return v;
}

bool same(const ParamList& a, const ParamList& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t l = 0; l < a.size(); ++l)
    if (a[l].w != b[l].w || a[l].b != b[l].b) return false;
  return true;
}

}  // namespace

TEST(Targets, GammaZeroGivesPureRewards) {
  auto c = small_cfg();
  c.gamma = 0.0;
  Intention it = make(c, 1);
  Rng rng(2);
  ReplayBuffer buf = episodes(3, 2, 5, rng);
  const auto batch = make_replay_batch(buf, iota(buf.size()), 1);
  const Mat ex = random_mat(3, 7, rng);
  const auto noise = draw_critic_noise(it, batch.size(), ex.cols(), rng);
  const auto t = compute_targets(it, TaskReward(c.reward), batch, ex, noise);
  for (Eigen::Index j = 0; j < t.y_replay.size(); ++j) EXPECT_DOUBLE_EQ(t.y_replay[j], -0.1);
  for (Eigen::Index j = 0; j < t.y_example.size(); ++j) EXPECT_DOUBLE_EQ(t.y_example[j], 0.1);
}

TEST(Targets, NStepArithmetic) {
  const double g = 0.9, boot = 1.7;
  EXPECT_NEAR(n_step_target({-0.1, -0.1, 0.1}, g, boot), -0.1 - 0.09 + 0.081 + g * g * g * boot, 1e-15);
  EXPECT_DOUBLE_EQ(n_step_target({}, g, boot), boot);
  EXPECT_NEAR(n_step_target({0.5}, g, boot), 0.5 + g * boot, 1e-15);
}

TEST(Targets, NStepWindowsStopAtEpisodeEnd) {
  Rng rng(3);
  ReplayBuffer buf = episodes(2, 1, 4, rng);  // logical 0..3 then 4..7
  const auto b = make_replay_batch(buf, {0, 1, 2, 3, 4}, 3);
  EXPECT_EQ(b.horizon, (std::vector<std::size_t>{3, 3, 2, 1, 3}));
  EXPECT_EQ(b.bootstrap_states.col(0), buf[2].next_state);
  EXPECT_EQ(b.bootstrap_states.col(2), buf[3].next_state);
  EXPECT_EQ(b.bootstrap_states.col(3), buf[3].next_state);
  EXPECT_EQ(b.reward_states[1].col(0), buf[1].state);
  EXPECT_EQ(b.reward_states[2].col(0), buf[2].state);
  EXPECT_THROW(make_replay_batch(buf, {}, 1), EmptyBufferError);
}

TEST(Targets, NStepReplayTargetsUseGammaPowers) {
  auto c = small_cfg();
  c.gamma = 0.9;
  c.n_step = 3;
  Intention it = make(c, 4, 2, 1);
  Rng rng(5);
  ReplayBuffer buf = episodes(2, 1, 4, rng);
  const auto b = make_replay_batch(buf, {0, 2}, 3);
  const Mat ex = random_mat(2, 3, rng);
  const auto noise = draw_critic_noise(it, b.size(), ex.cols(), rng);
  const auto t = compute_targets(it, TaskReward(c.reward), b, ex, noise);
  const auto nxt = it.policy().draw(b.bootstrap_states, noise.next);
  const Mat x = critic_input(b.bootstrap_states, nxt.action);
  const Mat q0 = it.critics().target[0].forward(x), q1 = it.critics().target[1].forward(x);
  const double b0 = std::min(q0(0, 0), q1(0, 0)), b1 = std::min(q0(0, 1), q1(0, 1));
  EXPECT_NEAR(t.y_replay[0], -0.1 - 0.09 - 0.081 + 0.729 * b0, 1e-12);
  EXPECT_NEAR(t.y_replay[1], -0.1 - 0.09 + 0.81 * b1, 1e-12);  // window cut to 2
}

TEST(Targets, ExampleStatesTransitionToThemselves) {
  auto c = small_cfg();
  Intention it = make(c, 6);
  Rng rng(7);
  ReplayBuffer buf = episodes(3, 2, 3, rng);
  const auto b = make_replay_batch(buf, iota(buf.size()), 1);
  const Mat ex = random_mat(3, 5, rng);
  const auto noise = draw_critic_noise(it, b.size(), ex.cols(), rng);
  const auto t = compute_targets(it, TaskReward(c.reward), b, ex, noise);
  const auto a = it.policy().draw(ex, noise.example_next);
  const Mat x = critic_input(ex, a.action);
  const Mat q = it.critics().target[0].forward(x).cwiseMin(it.critics().target[1].forward(x));
  for (Eigen::Index j = 0; j < ex.cols(); ++j) EXPECT_NEAR(t.y_example[j], 0.1 + 0.99 * q(0, j), 1e-12);
}

TEST(Targets, EntropyInTdSubtractsScaledLogProb) {
  auto c = small_cfg();
  c.initial_alpha = 0.3;
  Intention off = make(c, 8);
  c.entropy_in_td = true;
  Intention on = make(c, 8);
  Rng rng(9);
  ReplayBuffer buf = episodes(3, 2, 3, rng);
  const auto b = make_replay_batch(buf, iota(buf.size()), 1);
  const Mat ex = random_mat(3, 4, rng);
  const auto noise = draw_critic_noise(off, b.size(), ex.cols(), rng);
  const auto t0 = compute_targets(off, TaskReward(c.reward), b, ex, noise);
  const auto t1 = compute_targets(on, TaskReward(c.reward), b, ex, noise);
  const Vec lp = off.policy().draw(b.bootstrap_states, noise.next).log_prob;
  for (Eigen::Index j = 0; j < b.size(); ++j) EXPECT_NEAR(t1.y_replay[j], t0.y_replay[j] - 0.99 * 0.3 * lp[j], 1e-12);
}

TEST(Targets, ClassifierTargetsLieInUnitInterval) {
  auto c = small_cfg();
  c.reward.kind = RewardKind::rce;
  c.penalty.kind = RegularizerKind::none;
  Intention it = make(c, 10);
  Rng rng(11);
  ReplayBuffer buf = episodes(3, 2, 6, rng);
  const auto b = make_replay_batch(buf, iota(buf.size()), 1);
  const Mat ex = random_mat(3, 4, rng);
  const auto t = compute_targets(it, TaskReward(c.reward), b, ex, draw_critic_noise(it, b.size(), ex.cols(), rng));
  EXPECT_TRUE((t.y_replay.array() >= 0.0).all() && (t.y_replay.array() < 1.0).all());
  EXPECT_TRUE((t.y_example.array() == 1.0).all());
  EXPECT_TRUE((t.w_example.array() - 0.01).abs().maxCoeff() < 1e-15);
  c.n_step = 2;
  EXPECT_THROW(c.validate(), ConfigError);
}

struct ObjectiveCase {
  RewardKind reward;
  RegularizerKind reg;
  bool example_td;
};

class CriticGradient : public ::testing::TestWithParam<ObjectiveCase> {};

TEST_P(CriticGradient, MatchesFiniteDifferences) {
  const auto pc = GetParam();
  auto c = small_cfg();
  c.reward.kind = pc.reward;
  c.penalty.kind = pc.reg;
  c.penalty.cql_samples = 4;
  c.example_td = pc.example_td;
  Intention it = make(c, 12);
  Rng rng(13);
  ReplayBuffer buf = episodes(3, 2, 8, rng);
  const auto b = make_replay_batch(buf, iota(buf.size()), 1);
  const Mat ex = random_mat(3, 6, rng);
  const Mat ex_a = random_mat(2, 6, rng, -0.9, 0.9);
  const auto noise = draw_critic_noise(it, b.size(), ex.cols(), rng);
  CriticTargets t;
  t.y_replay = random_mat(b.size(), 1, rng, 0.05, 0.95).col(0);
  t.w_replay = random_mat(b.size(), 1, rng, 1.0, 2.0).col(0);
  t.y_example = Vec::Ones(ex.cols());
  t.w_example = Vec::Constant(ex.cols(), 0.01);
  // Bounds tight enough that some Q values fall outside on both sides.
  const Vec q = it.q_values(b.states, b.actions);
  const double lo = q.minCoeff() + 0.3 * (q.maxCoeff() - q.minCoeff());
  const double hi = q.minCoeff() + 0.7 * (q.maxCoeff() - q.minCoeff());
  for (std::size_t w = 0; w < 2; ++w) {
    ParamList g = it.critics().online[w].zero_grads();
    const auto obj = critic_objective(it, w, b, ex, ex_a, t, noise, true, lo, hi, &g);
    if (pc.reg == RegularizerKind::value_penalty && pc.reward != RewardKind::rce) {
      EXPECT_GT(obj.penalty, 0.0);
    }
    auto loss = [&] {
      const auto o = critic_objective(it, w, b, ex, ex_a, t, noise, true, lo, hi, nullptr);
      return o.td + o.penalty;
    };
    const auto r = fd_check(it.critics().online[w].params(), g, loss, 200, rng);
    EXPECT_LT(r.max_rel, 1e-4) << "critic " << w;
  }
}

INSTANTIATE_TEST_SUITE_P(
    Objectives, CriticGradient,
    ::testing::Values(ObjectiveCase{RewardKind::sqil, RegularizerKind::value_penalty, true},
                      ObjectiveCase{RewardKind::sqil, RegularizerKind::value_penalty, false},
                      ObjectiveCase{RewardKind::sqil, RegularizerKind::none, true},
                      ObjectiveCase{RewardKind::sqil, RegularizerKind::c2f_l2, true},
                      ObjectiveCase{RewardKind::sqil, RegularizerKind::cql, true},
                      ObjectiveCase{RewardKind::rce, RegularizerKind::none, true},
                      ObjectiveCase{RewardKind::rce, RegularizerKind::none, false}));

TEST(CriticObjective, WithoutExampleTermIsPlainTd) {
  auto c = small_cfg();
  c.example_td = false;
  c.penalty.kind = RegularizerKind::none;
  Intention it = make(c, 14);
  Rng rng(15);
  ReplayBuffer buf = episodes(3, 2, 6, rng);
  const auto b = make_replay_batch(buf, iota(buf.size()), 1);
  const Mat ex = random_mat(3, 4, rng), ex_a = random_mat(2, 4, rng);
  const auto noise = draw_critic_noise(it, b.size(), ex.cols(), rng);
  const auto t = compute_targets(it, TaskReward(c.reward), b, ex, noise);
  const Mat q = it.critics().online[1].forward(critic_input(b.states, b.actions));
  double td = 0.0;
  for (Eigen::Index j = 0; j < b.size(); ++j) td += (q(0, j) - t.y_replay[j]) * (q(0, j) - t.y_replay[j]);
  td /= static_cast<double>(b.size());
  const auto obj = critic_objective(it, 1, b, ex, ex_a, t, noise, false, 0.0, 0.0, nullptr);
  EXPECT_NEAR(obj.td, td, 1e-14);
  EXPECT_EQ(obj.penalty, 0.0);
  // Different example batches give the same loss.
  const auto obj2 = critic_objective(it, 1, b, random_mat(3, 9, rng), random_mat(2, 9, rng), t, noise, false, 0.0,
                                     0.0, nullptr);
  EXPECT_EQ(obj.td, obj2.td);
}

TEST(CriticObjective, InactivePenaltyContributesNothing) {
  auto c = small_cfg();
  Intention it = make(c, 16);
  Rng rng(17);
  ReplayBuffer buf = episodes(3, 2, 6, rng);
  const auto b = make_replay_batch(buf, iota(buf.size()), 1);
  const Mat ex = random_mat(3, 4, rng), ex_a = random_mat(2, 4, rng);
  const auto noise = draw_critic_noise(it, b.size(), ex.cols(), rng);
  const auto t = compute_targets(it, TaskReward(c.reward), b, ex, noise);
  EXPECT_EQ(critic_objective(it, 0, b, ex, ex_a, t, noise, false, 100.0, -100.0, nullptr).penalty, 0.0);
  EXPECT_EQ(critic_objective(it, 0, b, ex, ex_a, t, noise, true, -100.0, 100.0, nullptr).penalty, 0.0);
}

TEST(CriticUpdate, EmptyBatchesAndNanLossThrow) {
  auto c = small_cfg();
  Intention it = make(c, 18);
  Rng rng(19);
  ReplayBuffer buf = episodes(3, 2, 4, rng);
  const auto b = make_replay_batch(buf, iota(buf.size()), 1);
  const TaskReward r(c.reward);
  EXPECT_THROW(critic_update(it, r, b, Mat(3, 0), rng), EmptyBufferError);
  EXPECT_NO_THROW(critic_update(it, r, b, random_mat(3, 4, rng), rng));
  it.critics().online[0].params()[0].w(0, 0) = std::nan("");
  EXPECT_THROW(critic_update(it, r, b, random_mat(3, 4, rng), rng), NonFiniteError);
}

TEST(CriticUpdate, BoundsWarmAfterFirstUpdate) {
  auto c = small_cfg();
  Intention it = make(c, 20);
  Rng rng(21);
  ReplayBuffer buf = episodes(3, 2, 4, rng);
  const auto b = make_replay_batch(buf, iota(buf.size()), 1);
  EXPECT_FALSE(it.bounds().warm());
  const auto st = critic_update(it, TaskReward(c.reward), b, random_mat(3, 4, rng), rng);
  EXPECT_TRUE(it.bounds().warm());
  EXPECT_EQ(st.q_min, -10.0);
  EXPECT_TRUE(std::isfinite(st.q_max));
}

TEST(Isolation, UpdatesTouchOnlyTheirOwnIntention) {
  auto c = small_cfg();
  Intention a = make(c, 22, 3, 2, "a");
  Intention b = make(c, 22, 3, 2, "b");  // same seed: identical values, separate storage
  const ParamList pol = b.policy().net().params();
  const ParamList q0 = b.critics().online[0].params(), t1 = b.critics().target[1].params();
  const double la = b.log_alpha();
  Rng rng(23);
  ReplayBuffer buf = episodes(3, 2, 6, rng);
  const auto batch = make_replay_batch(buf, iota(buf.size()), 1);
  for (int i = 0; i < 5; ++i) {
    critic_update(a, TaskReward(c.reward), batch, random_mat(3, 4, rng), rng);
    const auto st = actor_update(a, batch.states, rng);
    alpha_update(a, st.log_prob);
    a.critics().update_targets();
  }
  EXPECT_FALSE(same(a.policy().net().params(), pol));
  EXPECT_TRUE(same(b.policy().net().params(), pol));
  EXPECT_TRUE(same(b.critics().online[0].params(), q0));
  EXPECT_TRUE(same(b.critics().target[1].params(), t1));
  EXPECT_EQ(b.log_alpha(), la);
  EXPECT_FALSE(b.bounds().warm());
}

TEST(Actor, GradientMatchesFiniteDifferences) {
  auto c = small_cfg();
  c.initial_alpha = 0.2;
  Intention it = make(c, 24);
  Rng rng(25);
  const Mat s = random_mat(3, 10, rng);
  const Mat eps = it.policy().noise(10, rng);
  ParamList g = it.policy().net().zero_grads();
  actor_objective(it, s, eps, &g);
  auto loss = [&] { return actor_objective(it, s, eps, nullptr); };
  const auto r = fd_check(it.policy().net().params(), g, loss, 300, rng);
  EXPECT_LT(r.max_rel, 1e-4);
}

TEST(Actor, ConstantCriticLeavesOnlyTheEntropyGradient) {
  auto c = small_cfg();
  c.initial_alpha = 0.5;
  Intention it = make(c, 26);
  for (auto& q : it.critics().online) {
    q.params().back().w.setZero();
    q.params().back().b.setConstant(2.0);
  }
  Rng rng(27);
  const Mat s = random_mat(3, 8, rng);
  const Mat eps = it.policy().noise(8, rng);
  ParamList g = it.policy().net().zero_grads();
  actor_objective(it, s, eps, &g);
  const auto d = it.policy().draw(s, eps);
  ParamList ent = it.policy().net().zero_grads();
  it.policy().backward(d, Mat::Zero(2, 8), Vec::Constant(8, 0.5 / 8.0), ent);
  for (std::size_t l = 0; l < g.size(); ++l) {
    EXPECT_TRUE(g[l].w.isApprox(ent[l].w, 1e-12) || (g[l].w - ent[l].w).norm() < 1e-14);
    EXPECT_TRUE(g[l].b.isApprox(ent[l].b, 1e-12) || (g[l].b - ent[l].b).norm() < 1e-14);
  }
}

TEST(Actor, MovesTowardPeakOfQuadraticCritic) {
  // Fit both critics to Q(s, a) = -(a - 0.5)^2, then run actor steps.
  auto c = small_cfg();
  c.hidden = {32, 32};
  c.initial_alpha = 1e-3;
  c.learn_alpha = false;
  c.policy_opt.lr = 1e-3;
  Intention it = make(c, 28, 1, 1);
  Rng rng(29);
  OptimConfig fit{3e-3, 0.9, 0.999, 1e-8, 0.0, 0.0};
  for (auto& q : it.critics().online) {
    AdamW opt(q.params(), fit);
    for (int i = 0; i < 1500; ++i) {
      Mat x(2, 64);
      x.row(0).setZero();
      for (Eigen::Index j = 0; j < 64; ++j) x(1, j) = uniform(rng, -1.0, 1.0);
      Mlp::Cache cache;
      const Mat out = q.forward(x, cache);
      Mat gr(1, 64);
      for (Eigen::Index j = 0; j < 64; ++j) gr(0, j) = 2.0 * (out(0, j) + (x(1, j) - 0.5) * (x(1, j) - 0.5)) / 64.0;
      ParamList g = q.zero_grads();
      q.backward(cache, gr, g);
      opt.step(q.params(), std::move(g));
    }
  }
  const Mat s = Mat::Zero(1, 64);
  const double before = std::abs(it.policy().mean_action(s)(0, 0) - 0.5);
  for (int i = 0; i < 600; ++i) actor_update(it, s, rng);
  const double after = std::abs(it.policy().mean_action(s)(0, 0) - 0.5);
  EXPECT_LT(after, 0.1);
  EXPECT_LT(after, before);
  EXPECT_THROW(actor_update(it, Mat(1, 0), rng), EmptyBufferError);
}

TEST(Actor, UpdateDependsOnReplayStatesOnly) {
  // Same replay states and RNG stream give bitwise-identical updates, whatever
  // example data the critics were trained alongside.
  auto c = small_cfg();
  Intention a = make(c, 30), b = make(c, 30);
  Rng ra(31), rb(31);
  const Mat s = random_mat(3, 16, ra);
  random_mat(3, 16, rb);
  actor_update(a, s, ra);
  actor_update(b, s, rb);
  EXPECT_TRUE(same(a.policy().net().params(), b.policy().net().params()));
}

TEST(Alpha, TargetEntropyDefaultsToMinusActionDim) {
  EXPECT_DOUBLE_EQ(make(small_cfg(), 32, 3, 4).config().target_entropy, -4.0);
  EXPECT_DOUBLE_EQ(make(small_cfg(), 32, 3, 1).config().target_entropy, -1.0);
  auto c = small_cfg();
  c.target_entropy = -0.5;
  EXPECT_DOUBLE_EQ(make(c, 32).config().target_entropy, -0.5);
  c.initial_alpha = 0.0;
  EXPECT_THROW(make(c, 32), ConfigError);
}

TEST(Alpha, GradientSignAndStationaryPoint) {
  const Vec at_target = Vec::Constant(5, 2.0);  // -log pi = -2 = target
  EXPECT_EQ(alpha_gradient(0.1, at_target, -2.0), 0.0);
  const Vec low_entropy = Vec::Constant(5, 10.0);
  EXPECT_LT(alpha_gradient(0.1, low_entropy, -2.0), 0.0);
  // FD in log-space.
  const Vec lp = (Vec(3) << 0.3, -1.0, 2.2).finished();
  auto f = [&](double la) { return std::exp(la) * ((-lp.array()).mean() - (-2.0)); };
  const double la = std::log(0.37), h = 1e-6;
  EXPECT_NEAR(alpha_gradient(0.37, lp, -2.0), (f(la + h) - f(la - h)) / (2 * h), 1e-8);
}

TEST(Alpha, LowEntropyRaisesAlphaWhichStaysPositive) {
  auto c = small_cfg();
  Intention it = make(c, 33);
  const double a0 = it.alpha();
  for (int i = 0; i < 100; ++i) alpha_update(it, Vec::Constant(8, 50.0));
  EXPECT_GT(it.alpha(), a0);
  for (int i = 0; i < 20000; ++i) alpha_update(it, Vec::Constant(8, -50.0));
  EXPECT_GT(it.alpha(), 0.0);
  EXPECT_LT(it.alpha(), a0);
  c.learn_alpha = false;
  Intention fixed = make(c, 33);
  EXPECT_EQ(alpha_update(fixed, Vec::Constant(8, 50.0)), fixed.alpha());
  EXPECT_DOUBLE_EQ(fixed.alpha(), 1e-2);
}

TEST(Checkpointing, RoundTripRestoresEverything) {
  auto c = small_cfg();
  Intention a = make(c, 34);
  Rng rng(35);
  ReplayBuffer buf = episodes(3, 2, 6, rng);
  const auto b = make_replay_batch(buf, iota(buf.size()), 1);
  for (int i = 0; i < 3; ++i) {
    critic_update(a, TaskReward(c.reward), b, random_mat(3, 4, rng), rng);
    alpha_update(a, actor_update(a, b.states, rng).log_prob);
  }
  Checkpoint ck;
  a.save(ck, "task.goal");
  Intention r = make(c, 99);
  r.load(ck, "task.goal");
  EXPECT_TRUE(same(r.policy().net().params(), a.policy().net().params()));
  for (std::size_t i = 0; i < 2; ++i) {
    EXPECT_TRUE(same(r.critics().online[i].params(), a.critics().online[i].params()));
    EXPECT_TRUE(same(r.critics().target[i].params(), a.critics().target[i].params()));
  }
  EXPECT_EQ(r.log_alpha(), a.log_alpha());
  EXPECT_EQ(r.alpha_optimizer().steps(), a.alpha_optimizer().steps());
  EXPECT_EQ(r.bounds().qmax_filter().values(), a.bounds().qmax_filter().values());
  // Continuing from either copy gives the same next update.
  Rng r1(36), r2(36);
  const Mat ex = random_mat(3, 4, r1);
  random_mat(3, 4, r2);
  const auto s1 = critic_update(a, TaskReward(c.reward), b, ex, r1);
  const auto s2 = critic_update(r, TaskReward(c.reward), b, ex, r2);
  EXPECT_EQ(s1.td_loss, s2.td_loss);
  EXPECT_TRUE(same(r.critics().online[0].params(), a.critics().online[0].params()));

  Intention wrong = make(c, 1, 4, 2);
  EXPECT_THROW(wrong.load(ck, "task.goal"), Error);
}
