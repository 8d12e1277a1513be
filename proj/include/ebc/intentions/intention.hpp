#pragma once

#include "ebc/approx/checkpoint.hpp"
#include "ebc/approx/critics.hpp"
#include "ebc/approx/optim.hpp"
#include "ebc/approx/policy.hpp"
#include "ebc/core/replay_buffer.hpp"
#include "ebc/core/task.hpp"
#include "ebc/penalty/value_penalty.hpp"
#include "ebc/reward/reward_models.hpp"

#include <cmath>
#include <limits>
#include <string>
#include <vector>

namespace ebc {

struct IntentionConfig {
  std::vector<std::size_t> hidden{64, 64};
  double gamma = 0.99;
  std::size_t n_step = 1;
  /// Subtract alpha * log pi(a'|s') inside the bootstrap.
  bool entropy_in_td = false;
  /// Include the example-state TD term in the critic loss.
  bool example_td = true;
  double initial_alpha = 1e-2;
  /// NaN means -act_dim.
  double target_entropy = std::numeric_limits<double>::quiet_NaN();
  bool learn_alpha = true;
  double tau = 1e-3;
  OptimConfig critic_opt{};
  OptimConfig policy_opt{};
  OptimConfig alpha_opt{3e-4, 0.9, 0.999, 1e-8, 0.0, 0.0};
  PenaltyConfig penalty{};
  RewardConfig reward{};

  void validate() const {
    if (n_step < 1) throw ConfigError("n_step must be >= 1");
    if (!(gamma >= 0.0 && gamma < 1.0)) throw ConfigError("gamma must lie in [0, 1)");
    if (!(initial_alpha > 0.0)) throw ConfigError("initial alpha must be positive");
    if (!(tau > 0.0 && tau <= 1.0)) throw ConfigError("polyak rate must lie in (0, 1]");
    if (reward.kind == RewardKind::rce && n_step != 1) throw ConfigError("RCE targets use single-step bootstraps");
    penalty.validate();
    reward.validate();
  }
};

/// Replay minibatch laid out for (possibly multi-step) TD targets.
struct ReplayBatch {
  Mat states;   // s_t
  Mat actions;  // a_t
  /// reward_states[k] holds s_{t+k}; column j is meaningful for k < horizon[j].
  std::vector<Mat> reward_states;
  Mat bootstrap_states;  // s_{t+horizon}
  std::vector<std::size_t> horizon;

  Eigen::Index size() const { return states.cols(); }
};

/// Builds a batch from logical buffer indices. Sub-trajectories shorter than
/// n_step (episode end, or not yet stored) bootstrap early.
inline ReplayBatch make_replay_batch(const ReplayBuffer& buf, const std::vector<std::size_t>& idx,
                                     std::size_t n_step) {
  if (idx.empty()) throw EmptyBufferError("replay batch is empty");
  const auto n = static_cast<Eigen::Index>(idx.size());
  const auto sd = static_cast<Eigen::Index>(buf.state_dim()), ad = static_cast<Eigen::Index>(buf.action_dim());
  ReplayBatch b;
  b.states.resize(sd, n);
  b.actions.resize(ad, n);
  b.bootstrap_states.resize(sd, n);
  b.reward_states.assign(n_step, Mat(sd, n));
  b.horizon.assign(idx.size(), 1);
  for (Eigen::Index j = 0; j < n; ++j) {
    std::size_t cur = idx[static_cast<std::size_t>(j)];
    b.states.col(j) = buf[cur].state;
    b.actions.col(j) = buf[cur].action;
    std::size_t m = 0;
    for (std::size_t k = 0; k < n_step; ++k) {
      b.reward_states[k].col(j) = buf[cur].state;
      m = k + 1;
      if (k + 1 == n_step) break;
      auto nxt = buf.successor(cur);
      if (!nxt) break;
      cur = *nxt;
    }
    for (std::size_t k = m; k < n_step; ++k) b.reward_states[k].col(j) = buf[cur].state;
    b.bootstrap_states.col(j) = buf[cur].next_state;
    b.horizon[static_cast<std::size_t>(j)] = m;
  }
  return b;
}

/// sum_k gamma^k r_k + gamma^n * bootstrap over a reward sequence of length n.
inline double n_step_target(const std::vector<double>& rewards, double gamma, double bootstrap) {
  double y = 0.0, g = 1.0;
  for (double r : rewards) {
    y += g * r;
    g *= gamma;
  }
  return y + g * bootstrap;
}

/// Standard-normal (and uniform, for CQL) draws consumed by one critic update.
struct CriticNoise {
  Mat next;          // a' at bootstrap states
  Mat example;       // a* at example states (online term and upper bound)
  Mat example_next;  // a' for the example self-transition bootstrap
  Mat ood_policy;    // CQL: policy actions, (act, N * half)
  Mat ood_uniform;   // CQL: uniform actions, (act, N * half)
};

struct CriticTargets {
  Vec y_replay;
  Vec y_example;
  Vec w_replay;  // BCE weights (classifier model only)
  Vec w_example;
};

struct CriticStats {
  double td_loss = 0.0;
  double penalty_loss = 0.0;
  double q_max = std::numeric_limits<double>::quiet_NaN();
  double q_min = std::numeric_limits<double>::quiet_NaN();
  double mean_q = 0.0;
};

/// Per-task policy, twin critics, temperature and value bounds. Nothing here
/// aliases another intention's storage.
class Intention {
 public:
  Intention() = default;
  Intention(TaskId task, std::size_t obs_dim, std::size_t act_dim, IntentionConfig cfg, Rng& rng)
      : task_(std::move(task)), cfg_(std::move(cfg)) {
    if (std::isnan(cfg_.target_entropy)) cfg_.target_entropy = -static_cast<double>(act_dim);
    cfg_.validate();
    policy_ = GaussianPolicy(obs_dim, act_dim, cfg_.hidden, rng);
    critics_ = TwinCritics(obs_dim, act_dim, cfg_.hidden, cfg_.tau, rng);
    policy_opt_ = AdamW(policy_.net().params(), cfg_.policy_opt, task_.name + " policy");
    for (std::size_t i = 0; i < 2; ++i)
      critic_opt_[i] = AdamW(critics_.online[i].params(), cfg_.critic_opt, task_.name + " critic " + std::to_string(i));
    alpha_opt_ = ScalarAdam(cfg_.alpha_opt);
    log_alpha_ = std::log(cfg_.initial_alpha);
    bounds_ = PenaltyBounds(cfg_.penalty, cfg_.reward, cfg_.gamma);
  }

  const TaskId& task() const noexcept { return task_; }
  const IntentionConfig& config() const noexcept { return cfg_; }
  GaussianPolicy& policy() noexcept { return policy_; }
  const GaussianPolicy& policy() const noexcept { return policy_; }
  TwinCritics& critics() noexcept { return critics_; }
  const TwinCritics& critics() const noexcept { return critics_; }
  PenaltyBounds& bounds() noexcept { return bounds_; }
  const PenaltyBounds& bounds() const noexcept { return bounds_; }
  AdamW& policy_optimizer() noexcept { return policy_opt_; }
  AdamW& critic_optimizer(std::size_t i) { return critic_opt_.at(i); }
  ScalarAdam& alpha_optimizer() noexcept { return alpha_opt_; }
  double log_alpha() const noexcept { return log_alpha_; }
  double& log_alpha() noexcept { return log_alpha_; }
  double alpha() const { return std::exp(log_alpha_); }
  const ScalarAdam& alpha_optimizer() const noexcept { return alpha_opt_; }
  std::size_t act_dim() const noexcept { return policy_.act_dim(); }
  std::size_t obs_dim() const { return policy_.obs_dim(); }

  Vec act(const Vec& state, bool deterministic, Rng& rng) const {
    const Mat s = state;
    if (deterministic) return policy_.mean_action(s).col(0);
    return policy_.sample(s, rng).action.col(0);
  }

  /// Minimum of the online critics at explicit actions.
  Vec q_values(const Mat& states, const Mat& actions) const {
    return critics_.min_online(critic_input(states, actions)).row(0).transpose();
  }

  void save(Checkpoint& ck, const std::string& prefix) const {
    ck.put_params(prefix + ".policy", policy_.net().params());
    for (std::size_t i = 0; i < 2; ++i) {
      const std::string c = prefix + ".critic" + std::to_string(i);
      ck.put_params(c, critics_.online[i].params());
      ck.put_params(c + ".target", critics_.target[i].params());
      ck.put_params(c + ".adam_m", critic_opt_[i].first_moment());
      ck.put_params(c + ".adam_v", critic_opt_[i].second_moment());
      ck.put_scalar(c + ".adam_t", static_cast<double>(critic_opt_[i].steps()));
    }
    ck.put_params(prefix + ".policy.adam_m", policy_opt_.first_moment());
    ck.put_params(prefix + ".policy.adam_v", policy_opt_.second_moment());
    ck.put_scalar(prefix + ".policy.adam_t", static_cast<double>(policy_opt_.steps()));
    ck.put_scalar(prefix + ".log_alpha", log_alpha_);
    ck.put(prefix + ".alpha.adam", (Mat(1, 3) << alpha_opt_.first_moment(), alpha_opt_.second_moment(),
                                    static_cast<double>(alpha_opt_.steps())).finished());
    auto put_filter = [&](const std::string& name, const MedianFilter& f) {
      Mat m(1, static_cast<Eigen::Index>(f.size()));
      for (std::size_t i = 0; i < f.size(); ++i) m(0, static_cast<Eigen::Index>(i)) = f.values()[i];
      ck.put(name, m);
    };
    put_filter(prefix + ".bounds.qmax", bounds_.qmax_filter());
    put_filter(prefix + ".bounds.min_reward", bounds_.min_reward_filter());
  }

  void load(const Checkpoint& ck, const std::string& prefix) {
    auto set = [](ParamList& dst, const ParamList& src, const std::string& what) {
      check_same_shape(dst, src, what.c_str());
      dst = src;
    };
    set(policy_.net().params(), ck.get_params(prefix + ".policy"), prefix + ".policy");
    for (std::size_t i = 0; i < 2; ++i) {
      const std::string c = prefix + ".critic" + std::to_string(i);
      set(critics_.online[i].params(), ck.get_params(c), c);
      set(critics_.target[i].params(), ck.get_params(c + ".target"), c + ".target");
      set(critic_opt_[i].first_moment(), ck.get_params(c + ".adam_m"), c + ".adam_m");
      set(critic_opt_[i].second_moment(), ck.get_params(c + ".adam_v"), c + ".adam_v");
      critic_opt_[i].set_steps(static_cast<std::size_t>(ck.get_scalar(c + ".adam_t")));
    }
    set(policy_opt_.first_moment(), ck.get_params(prefix + ".policy.adam_m"), "policy adam_m");
    set(policy_opt_.second_moment(), ck.get_params(prefix + ".policy.adam_v"), "policy adam_v");
    policy_opt_.set_steps(static_cast<std::size_t>(ck.get_scalar(prefix + ".policy.adam_t")));
    log_alpha_ = ck.get_scalar(prefix + ".log_alpha");
    const Mat& am = ck.get(prefix + ".alpha.adam");
    if (am.size() != 3) throw FormatError("temperature optimizer state is malformed");
    alpha_opt_.first_moment() = am(0, 0);
    alpha_opt_.second_moment() = am(0, 1);
    alpha_opt_.steps() = static_cast<std::size_t>(am(0, 2));
    auto get_filter = [&](const std::string& name, MedianFilter& f) {
      f = MedianFilter(f.capacity());
      const Mat& m = ck.get(name);
      for (Eigen::Index i = 0; i < m.size(); ++i) f.push(m(0, i));
    };
    get_filter(prefix + ".bounds.qmax", bounds_.qmax_filter());
    get_filter(prefix + ".bounds.min_reward", bounds_.min_reward_filter());
  }

 private:
  TaskId task_;
  IntentionConfig cfg_;
  GaussianPolicy policy_;
  TwinCritics critics_;
  AdamW policy_opt_;
  std::array<AdamW, 2> critic_opt_;
  ScalarAdam alpha_opt_;
  double log_alpha_ = 0.0;
  PenaltyBounds bounds_;
};

inline CriticNoise draw_critic_noise(const Intention& it, Eigen::Index n_replay, Eigen::Index n_example, Rng& rng) {
  const auto& pol = it.policy();
  CriticNoise z;
  z.next = pol.noise(static_cast<std::size_t>(n_replay), rng);
  z.example = pol.noise(static_cast<std::size_t>(n_example), rng);
  z.example_next = pol.noise(static_cast<std::size_t>(n_example), rng);
  if (it.config().penalty.kind == RegularizerKind::cql) {
    const std::size_t half = std::max<std::size_t>(1, it.config().penalty.cql_samples / 2);
    z.ood_policy = pol.noise(static_cast<std::size_t>(n_replay) * half, rng);
    z.ood_uniform.resize(static_cast<Eigen::Index>(it.act_dim()), n_replay * static_cast<Eigen::Index>(half));
    for (Eigen::Index j = 0; j < z.ood_uniform.size(); ++j) z.ood_uniform.data()[j] = uniform(rng, -1.0, 1.0);
  }
  return z;
}

/// TD targets from the target critics (no gradient flows through these).
inline CriticTargets compute_targets(const Intention& it, const TaskReward& reward, const ReplayBatch& batch,
                                     const Mat& examples, const CriticNoise& noise) {
  const auto& cfg = it.config();
  const double gamma = cfg.gamma;
  const double alpha = it.alpha();
  const auto& pol = it.policy();
  const auto& cr = it.critics();
  CriticTargets t;

  const auto next = pol.draw(batch.bootstrap_states, noise.next);
  Vec boot = cr.min_target(critic_input(batch.bootstrap_states, next.action)).row(0).transpose();
  const auto ex_next = pol.draw(examples, noise.example_next);
  Vec boot_ex = cr.min_target(critic_input(examples, ex_next.action)).row(0).transpose();

  if (reward.kind() == RewardKind::rce) {
    // Classifier targets: V(s') = sigmoid(min target logit).
    const double cap = reward.config().logit_clamp;
    t.y_replay.resize(batch.size());
    t.w_replay.resize(batch.size());
    for (Eigen::Index j = 0; j < batch.size(); ++j) {
      const double v = sigmoid(std::clamp(boot[j], -cap, cap));
      const auto r = rce_targets(v, gamma);
      t.y_replay[j] = r.y_replay;
      t.w_replay[j] = r.w_replay;
    }
    t.y_example = Vec::Ones(examples.cols());
    t.w_example = Vec::Constant(examples.cols(), 1.0 - gamma);
    return t;
  }

  if (cfg.entropy_in_td) {
    boot -= alpha * next.log_prob;
    boot_ex -= alpha * ex_next.log_prob;
  }
  std::vector<Vec> step_rewards;
  step_rewards.reserve(batch.reward_states.size());
  for (const auto& s : batch.reward_states) step_rewards.push_back(reward.replay_rewards(s));
  t.y_replay.resize(batch.size());
  for (Eigen::Index j = 0; j < batch.size(); ++j) {
    const std::size_t m = batch.horizon[static_cast<std::size_t>(j)];
    std::vector<double> rs(m);
    for (std::size_t k = 0; k < m; ++k) rs[k] = step_rewards[k][j];
    t.y_replay[j] = n_step_target(rs, gamma, boot[j]);
  }
  t.y_example = reward.example_rewards(examples) + gamma * boot_ex;
  return t;
}

/// Critic objective for online critic `which`, given fixed targets and bounds.
/// Returns (td part, penalty part) and accumulates parameter gradients.
struct CriticObjective {
  double td = 0.0;
  double penalty = 0.0;
  double mean_q = 0.0;
};

inline CriticObjective critic_objective(const Intention& it, std::size_t which, const ReplayBatch& batch,
                                        const Mat& examples, const Mat& example_actions, const CriticTargets& t,
                                        const CriticNoise& noise, bool penalty_active, double q_min, double q_max,
                                        ParamList* grads) {
  const auto& cfg = it.config();
  const Mlp& q = it.critics().online[which];
  const bool bce = cfg.reward.kind == RewardKind::rce;
  CriticObjective out;

  Mlp::Cache cr;
  const Mat qr = q.forward(critic_input(batch.states, batch.actions), cr);
  const double nr = static_cast<double>(batch.size());
  Mat gr = Mat::Zero(1, batch.size());
  for (Eigen::Index j = 0; j < batch.size(); ++j) {
    if (bce) {
      const double l = qr(0, j), y = t.y_replay[j], w = t.w_replay[j];
      out.td += w * (softplus(l) - y * l) / nr;
      gr(0, j) = w * (sigmoid(l) - y) / nr;
    } else {
      const double e = qr(0, j) - t.y_replay[j];
      out.td += e * e / nr;
      gr(0, j) = 2.0 * e / nr;
    }
  }
  out.mean_q = qr.mean();

  const Vec qr_vec = qr.row(0).transpose();
  const auto kind = cfg.penalty.kind;
  if (kind == RegularizerKind::value_penalty && penalty_active && !bce) {
    const auto pv = vp_loss(qr_vec, q_min, q_max, cfg.penalty.lambda);
    out.penalty = pv.value;
    gr.row(0) += pv.grad.transpose();
  } else if (kind == RegularizerKind::c2f_l2) {
    const auto pv = alt_regularizer(kind, qr_vec, nullptr, cfg.penalty.alt_coeff);
    out.penalty = pv.value;
    gr.row(0) += pv.grad_q.transpose();
  } else if (kind == RegularizerKind::cql) {
    // Q at sampled actions for every replay state: policy draws then uniform.
    const Eigen::Index n = batch.size();
    const Eigen::Index half = noise.ood_uniform.cols() / n;
    Mat rep_states(batch.states.rows(), n * half);
    for (Eigen::Index h = 0; h < half; ++h) rep_states.middleCols(h * n, n) = batch.states;
    const Mat pol_actions = it.policy().draw(rep_states, noise.ood_policy).action;
    Mlp::Cache cp, cu;
    const Mat qp = q.forward(critic_input(rep_states, pol_actions), cp);
    const Mat qu = q.forward(critic_input(rep_states, noise.ood_uniform), cu);
    Mat ood(2 * half, n);
    for (Eigen::Index h = 0; h < half; ++h) {
      ood.row(h) = qp.middleCols(h * n, n);
      ood.row(half + h) = qu.middleCols(h * n, n);
    }
    const auto pv = alt_regularizer(kind, qr_vec, &ood, cfg.penalty.alt_coeff);
    out.penalty = pv.value;
    gr.row(0) += pv.grad_q.transpose();
    if (grads) {
      Mat gp(1, n * half), gu(1, n * half);
      for (Eigen::Index h = 0; h < half; ++h) {
        gp.middleCols(h * n, n) = pv.grad_ood.row(h);
        gu.middleCols(h * n, n) = pv.grad_ood.row(half + h);
      }
      q.backward(cp, gp, *grads);
      q.backward(cu, gu, *grads);
    }
  }
  if (grads) q.backward(cr, gr, *grads);

  if (cfg.example_td) {
    Mlp::Cache ce;
    const Mat qe = q.forward(critic_input(examples, example_actions), ce);
    const double ne = static_cast<double>(examples.cols());
    Mat ge(1, examples.cols());
    for (Eigen::Index j = 0; j < examples.cols(); ++j) {
      if (bce) {
        const double l = qe(0, j), y = t.y_example[j], w = t.w_example[j];
        out.td += w * (softplus(l) - y * l) / ne;
        ge(0, j) = w * (sigmoid(l) - y) / ne;
      } else {
        const double e = qe(0, j) - t.y_example[j];
        out.td += e * e / ne;
        ge(0, j) = 2.0 * e / ne;
      }
    }
    if (grads) q.backward(ce, ge, *grads);
  }
  return out;
}

/// Refreshes the value bounds from this update's example batch, then takes one
/// gradient step on each online critic.
inline CriticStats critic_update(Intention& it, const TaskReward& reward, const ReplayBatch& batch,
                                 const Mat& examples, Rng& rng) {
  if (batch.size() == 0 || examples.cols() == 0) throw EmptyBufferError("critic update needs non-empty batches");
  const CriticNoise noise = draw_critic_noise(it, batch.size(), examples.cols(), rng);
  const Mat ex_actions = it.policy().draw(examples, noise.example).action;

  auto& bounds = it.bounds();
  bounds.push_example_value(it.q_values(examples, ex_actions).mean());
  if (reward.kind() == RewardKind::dac) {
    const double m = std::min(reward.replay_rewards(batch.states).minCoeff(), reward.example_rewards(examples).minCoeff());
    bounds.push_min_reward(m);
  }
  CriticStats st;
  st.q_max = bounds.q_max();
  if (reward.kind() != RewardKind::rce) st.q_min = bounds.q_min();

  const CriticTargets t = compute_targets(it, reward, batch, examples, noise);
  for (std::size_t i = 0; i < 2; ++i) {
    ParamList g = it.critics().online[i].zero_grads();
    const auto obj = critic_objective(it, i, batch, examples, ex_actions, t, noise, bounds.warm(), st.q_min, st.q_max, &g);
    if (!std::isfinite(obj.td) || !std::isfinite(obj.penalty))
      throw NonFiniteError("critic loss for task '" + it.task().name + "' is not finite");
    it.critic_optimizer(i).step(it.critics().online[i].params(), std::move(g));
    st.td_loss += 0.5 * obj.td;
    st.penalty_loss += 0.5 * obj.penalty;
    st.mean_q += 0.5 * obj.mean_q;
  }
  return st;
}

/// Entropy-regularised actor objective on replay states:
///   mean_i [alpha * log pi(a_i|s_i) - min_k Q_k(s_i, a_i)],  a_i ~ pi(.|s_i)
inline double actor_objective(const Intention& it, const Mat& states, const Mat& eps, ParamList* grads,
                              Vec* log_prob_out = nullptr) {
  const auto& pol = it.policy();
  const auto d = pol.draw(states, eps);
  const Mat x = critic_input(states, d.action);
  const auto& cr = it.critics();
  Mlp::Cache c0, c1;
  const Mat q0 = cr.online[0].forward(x, c0), q1 = cr.online[1].forward(x, c1);
  const Eigen::Index n = states.cols();
  const double alpha = it.alpha();
  double value = 0.0;
  Mat g0 = Mat::Zero(1, n), g1 = Mat::Zero(1, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    const bool first = q0(0, j) <= q1(0, j);
    value += (alpha * d.log_prob[j] - (first ? q0(0, j) : q1(0, j))) / static_cast<double>(n);
    (first ? g0 : g1)(0, j) = -1.0 / static_cast<double>(n);
  }
  if (log_prob_out) *log_prob_out = d.log_prob;
  if (grads) {
    const auto a_rows = static_cast<Eigen::Index>(pol.act_dim());
    const Mat dx = cr.online[0].backward_input(c0, g0) + cr.online[1].backward_input(c1, g1);
    const Mat grad_action = dx.bottomRows(a_rows);
    const Vec grad_lp = Vec::Constant(n, alpha / static_cast<double>(n));
    pol.backward(d, grad_action, grad_lp, *grads);
  }
  return value;
}

struct ActorStats {
  double loss = 0.0;
  Vec log_prob;
};

inline ActorStats actor_update(Intention& it, const Mat& replay_states, Rng& rng) {
  if (replay_states.cols() == 0) throw EmptyBufferError("actor update needs a non-empty replay batch");
  const Mat eps = it.policy().noise(static_cast<std::size_t>(replay_states.cols()), rng);
  ParamList g = it.policy().net().zero_grads();
  ActorStats st;
  st.loss = actor_objective(it, replay_states, eps, &g, &st.log_prob);
  if (!std::isfinite(st.loss)) throw NonFiniteError("actor loss for task '" + it.task().name + "' is not finite");
  it.policy_optimizer().step(it.policy().net().params(), std::move(g));
  return st;
}

/// d/d(log alpha) of alpha * mean(-log pi - target_entropy).
inline double alpha_gradient(double alpha, const Vec& log_prob, double target_entropy) {
  return alpha * ((-log_prob.array()).mean() - target_entropy);
}

inline double alpha_update(Intention& it, const Vec& log_prob) {
  if (!it.config().learn_alpha || log_prob.size() == 0) return it.alpha();
  it.alpha_optimizer().step(it.log_alpha(), alpha_gradient(it.alpha(), log_prob, it.config().target_entropy));
  return it.alpha();
}

}  // namespace ebc
