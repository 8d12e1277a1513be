#pragma once

#include "ebc/approx/mlp.hpp"
#include "ebc/approx/optim.hpp"
#include "ebc/core/error.hpp"
#include "ebc/core/types.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

namespace ebc {

enum class RewardKind { sqil, dac, rce };

inline std::string to_string(RewardKind k) {
  switch (k) {
    case RewardKind::sqil: return "sqil";
    case RewardKind::dac: return "dac";
    case RewardKind::rce: return "rce";
  }
  return "?";
}

inline RewardKind reward_kind_from_string(const std::string& s) {
  if (s == "sqil") return RewardKind::sqil;
  if (s == "dac") return RewardKind::dac;
  if (s == "rce") return RewardKind::rce;
  throw ConfigError("unknown reward model '" + s + "' (expected sqil, dac or rce)");
}

struct RewardConfig {
  RewardKind kind = RewardKind::sqil;
  double scale = 0.1;
  double replay_label = -1.0;
  double example_label = 1.0;
  double gradient_penalty = 10.0;
  /// |logit| cap applied before the log-odds reward map.
  double logit_clamp = 15.0;
  bool normalize_input = false;

  void validate() const {
    if (!(scale > 0.0)) throw ConfigError("reward scale must be positive");
    if (!(example_label > replay_label)) throw ConfigError("SQIL example label must exceed the replay label");
    if (gradient_penalty < 0.0) throw ConfigError("gradient penalty coefficient must be non-negative");
    if (!(logit_clamp > 0.0)) throw ConfigError("logit clamp must be positive");
  }
};

enum class DataSource { replay, example };

/// Fixed label reward: scale * label of the buffer the state was drawn from.
inline double sqil_reward(DataSource src, const RewardConfig& cfg) {
  return cfg.scale * (src == DataSource::replay ? cfg.replay_label : cfg.example_label);
}

/// scale * (log D - log(1 - D)) written in terms of the logit, which is the
/// same quantity without the cancellation near D = 0 or 1.
inline double dac_reward_from_logit(double logit, const RewardConfig& cfg) {
  return cfg.scale * std::clamp(logit, -cfg.logit_clamp, cfg.logit_clamp);
}

inline double dac_reward_from_prob(double d, const RewardConfig& cfg) {
  if (!(d >= 0.0 && d <= 1.0)) throw ConfigError("discriminator output must lie in [0, 1]");
  if (d <= 0.0) return -cfg.scale * cfg.logit_clamp;
  if (d >= 1.0) return cfg.scale * cfg.logit_clamp;
  return dac_reward_from_logit(std::log(d) - std::log1p(-d), cfg);
}

/// Classifier-style TD targets and loss weights for one replay sample.
struct RceTargets {
  double y_replay;
  double y_example;
  double w_replay;
  double w_example;
  double w;  // V / (1 - V)
};

inline RceTargets rce_targets(double v_next, double gamma) {
  if (!(v_next >= 0.0)) throw ConfigError("classifier value must be non-negative");
  if (!(v_next < 1.0)) throw ConfigError("classifier value must be < 1, got " + std::to_string(v_next));
  const double w = v_next / (1.0 - v_next);
  const double gw = gamma * w;
  return {gw / (1.0 + gw), 1.0, 1.0 + gw, 1.0 - gamma, w};
}

inline double sigmoid(double x) {
  return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}

inline double softplus(double x) { return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

/// Mean over columns of a penalty on the input gradient of a scalar-output
/// network: coeff * mean_i (||d f(x_i) / d x_i|| - 1)^2. Parameter gradients
/// of the penalty (second-order through the SiLU layers) are accumulated into
/// `grads` when non-null.
inline double input_gradient_penalty(const Mlp& net, const Mat& x, double coeff, ParamList* grads) {
  const auto& p = net.params();
  const std::size_t L = p.size();
  if (net.out_dim() != 1) throw DimensionError("gradient penalty network output", 1, net.out_dim());
  Mlp::Cache c;
  net.forward(x, c);
  const Eigen::Index n = x.cols();
  // r[l] = d f / d h_{l+1} for hidden outputs; delta[l] = d f / d z_l.
  std::vector<Mat> r(L), delta(L);
  Mat ones = Mat::Ones(1, n);
  delta[L - 1] = ones;
  for (std::size_t l = L - 1; l-- > 0;) {
    r[l] = p[l + 1].w.transpose() * delta[l + 1];
    delta[l] = (Silu::d1(c.pre[l], c.sig[l]).array() * r[l].array()).matrix();
  }
  const Mat g = p[0].w.transpose() * delta[0];
  const Vec norms = g.colwise().norm().transpose();
  double value = 0.0;
  for (Eigen::Index j = 0; j < n; ++j) value += (norms[j] - 1.0) * (norms[j] - 1.0);
  value *= coeff / static_cast<double>(n);
  if (!grads) return value;

  Mat g_bar(g.rows(), n);
  for (Eigen::Index j = 0; j < n; ++j) {
    const double nj = norms[j];
    const double k = nj > 0.0 ? coeff / static_cast<double>(n) * 2.0 * (nj - 1.0) / nj : 0.0;
    g_bar.col(j) = k * g.col(j);
  }
  auto& gr = *grads;
  // Reverse through g = W0^T delta0 and the backward recursion.
  gr[0].w.noalias() += delta[0] * g_bar.transpose();
  std::vector<Mat> injected(L > 0 ? L - 1 : 0);
  Mat delta_bar = p[0].w * g_bar;
  for (std::size_t l = 0; l + 1 < L; ++l) {
    const Mat d1 = Silu::d1(c.pre[l], c.sig[l]);
    const Mat r_bar = (d1.array() * delta_bar.array()).matrix();
    injected[l] = (Silu::d2(c.pre[l], c.sig[l]).array() * r[l].array() * delta_bar.array()).matrix();
    gr[l + 1].w.noalias() += delta[l + 1] * r_bar.transpose();
    if (l + 2 < L) delta_bar = p[l + 1].w * r_bar;
  }
  // Injected pre-activation gradients flow back through the forward pass.
  Mat z_hat;
  for (std::size_t l = L - 1; l-- > 0;) {
    z_hat = l + 2 < L ? Mat(injected[l].array() +
                            Silu::d1(c.pre[l], c.sig[l]).array() * (p[l + 1].w.transpose() * z_hat).array())
                      : injected[l];
    gr[l].w.noalias() += z_hat * c.inputs[l].transpose();
    gr[l].b += z_hat.rowwise().sum();
  }
  return value;
}

/// Per-task discriminators sharing their first hidden layer. Each task's
/// network is trunk followed by that task's head; the output is a logit.
class Discriminator {
 public:
  Discriminator() = default;
  Discriminator(std::size_t obs_dim, std::size_t num_tasks, const std::vector<std::size_t>& hidden,
                const RewardConfig& cfg, const OptimConfig& opt, Rng& rng)
      : cfg_(cfg) {
    if (hidden.empty()) throw ConfigError("discriminator needs at least one hidden layer");
    Mlp trunk({obs_dim, hidden.front()}, rng);
    trunk_ = trunk.params().front();
    std::vector<std::size_t> head_sizes(hidden.begin(), hidden.end());
    head_sizes.push_back(1);
    for (std::size_t k = 0; k < num_tasks; ++k) {
      heads_.push_back(Mlp(head_sizes, rng).params());
      head_opts_.emplace_back(heads_.back(), opt, "discriminator head " + std::to_string(k));
    }
    trunk_opt_ = AdamW(ParamList{trunk_}, opt, "discriminator trunk");
    offset_ = Vec::Zero(static_cast<Eigen::Index>(obs_dim));
    inv_scale_ = Vec::Ones(static_cast<Eigen::Index>(obs_dim));
  }

  std::size_t num_tasks() const noexcept { return heads_.size(); }
  const RewardConfig& config() const noexcept { return cfg_; }

  /// Full network of task k (trunk + head) as a standalone MLP copy.
  Mlp task_net(std::size_t k) const {
    ParamList p{trunk_};
    p.insert(p.end(), heads_.at(k).begin(), heads_.at(k).end());
    return Mlp(std::move(p));
  }

  void set_task_params(std::size_t k, const ParamList& full) {
    trunk_ = full.front();
    heads_.at(k).assign(full.begin() + 1, full.end());
  }

  /// Fixed affine input standardisation, applied only when enabled in config.
  void set_input_normalization(const Vec& mean, const Vec& std) {
    offset_ = mean;
    inv_scale_ = std.unaryExpr([](double s) { return s > 1e-8 ? 1.0 / s : 1.0; });
  }

  Mat prepare(const Mat& states) const {
    if (!cfg_.normalize_input) return states;
    return (states.colwise() - offset_).array().colwise() * inv_scale_.array();
  }

  Vec logits(std::size_t k, const Mat& states) const { return task_net(k).forward(prepare(states)).row(0).transpose(); }

  Vec probabilities(std::size_t k, const Mat& states) const {
    return logits(k, states).unaryExpr([](double l) { return sigmoid(l); });
  }

  Vec rewards(std::size_t k, const Mat& states) const {
    return logits(k, states).unaryExpr([this](double l) { return dac_reward_from_logit(l, cfg_); });
  }

  /// Loss minimised by the discriminator (negated objective plus gradient penalty):
  ///   mean softplus(l_replay) + mean softplus(-l_example) + GP at interpolants.
  /// `mix` holds one interpolation weight per interpolant column.
  static double loss(const Mlp& net, const Mat& replay, const Mat& example, const Vec& mix, double gp_coeff,
                     ParamList* grads, double* gp_part = nullptr) {
    if (replay.cols() == 0 || example.cols() == 0) throw EmptyBufferError("discriminator update needs both batches");
    if (replay.rows() != example.rows())
      throw DimensionError("discriminator batch", static_cast<std::size_t>(replay.rows()),
                           static_cast<std::size_t>(example.rows()));
    const Eigen::Index nr = replay.cols(), ne = example.cols();
    double value = 0.0;
    Mlp::Cache cr, ce;
    const Mat lr = net.forward(replay, cr), le = net.forward(example, ce);
    Mat gr(1, nr), ge(1, ne);
    for (Eigen::Index j = 0; j < nr; ++j) {
      value += softplus(lr(0, j)) / static_cast<double>(nr);
      gr(0, j) = sigmoid(lr(0, j)) / static_cast<double>(nr);
    }
    for (Eigen::Index j = 0; j < ne; ++j) {
      value += softplus(-le(0, j)) / static_cast<double>(ne);
      ge(0, j) = -sigmoid(-le(0, j)) / static_cast<double>(ne);
    }
    if (grads) {
      net.backward(cr, gr, *grads);
      net.backward(ce, ge, *grads);
    }
    double gp = 0.0;
    if (gp_coeff > 0.0) {
      const Eigen::Index m = mix.size();
      Mat interp(replay.rows(), m);
      for (Eigen::Index j = 0; j < m; ++j)
        interp.col(j) = mix[j] * example.col(j % ne) + (1.0 - mix[j]) * replay.col(j % nr);
      gp = input_gradient_penalty(net, interp, gp_coeff, grads);
    }
    if (gp_part) *gp_part = gp;
    return value + gp;
  }

  /// One descent step for task k. Returns the pre-step loss.
  double update(std::size_t k, const Mat& replay, const Mat& example, Rng& rng) {
    const Eigen::Index m = std::min(replay.cols(), example.cols());
    if (m == 0) throw EmptyBufferError("discriminator update needs both batches");
    Vec mix(m);
    for (Eigen::Index j = 0; j < m; ++j) mix[j] = canonical(rng);
    Mlp net = task_net(k);
    ParamList grads = net.zero_grads();
    const double value = loss(net, prepare(replay), prepare(example), mix, cfg_.gradient_penalty, &grads);
    ParamList trunk_p{trunk_}, trunk_g{grads.front()};
    trunk_opt_.step(trunk_p, trunk_g);
    trunk_ = trunk_p.front();
    ParamList head_g(grads.begin() + 1, grads.end());
    head_opts_.at(k).step(heads_.at(k), head_g);
    return value;
  }

  Layer& trunk() noexcept { return trunk_; }
  const Layer& trunk() const noexcept { return trunk_; }
  ParamList& head(std::size_t k) { return heads_.at(k); }
  const ParamList& head(std::size_t k) const { return heads_.at(k); }
  AdamW& trunk_optimizer() noexcept { return trunk_opt_; }
  AdamW& head_optimizer(std::size_t k) { return head_opts_.at(k); }
  const Vec& input_offset() const noexcept { return offset_; }
  const Vec& input_inv_scale() const noexcept { return inv_scale_; }
  void set_input_affine(const Vec& offset, const Vec& inv_scale) {
    offset_ = offset;
    inv_scale_ = inv_scale;
  }

 private:
  RewardConfig cfg_;
  Layer trunk_;
  std::vector<ParamList> heads_;
  AdamW trunk_opt_;
  std::vector<AdamW> head_opts_;
  Vec offset_, inv_scale_;
};

/// Reward model bound to one task: maps batches of states to rewards.
class TaskReward {
 public:
  TaskReward() = default;
  TaskReward(RewardConfig cfg, const Discriminator* disc = nullptr, std::size_t task = 0)
      : cfg_(cfg), disc_(disc), task_(task) {
    cfg_.validate();
    if (cfg_.kind == RewardKind::dac && !disc_) throw ConfigError("DAC reward needs a discriminator");
  }

  const RewardConfig& config() const noexcept { return cfg_; }
  RewardKind kind() const noexcept { return cfg_.kind; }

  Vec replay_rewards(const Mat& states) const { return rewards(states, DataSource::replay); }
  Vec example_rewards(const Mat& states) const { return rewards(states, DataSource::example); }

 private:
  Vec rewards(const Mat& states, DataSource src) const {
    if (cfg_.kind == RewardKind::dac) return disc_->rewards(task_, states);
    return Vec::Constant(states.cols(), sqil_reward(src, cfg_));
  }

  RewardConfig cfg_;
  const Discriminator* disc_ = nullptr;
  std::size_t task_ = 0;
};

}  // namespace ebc
