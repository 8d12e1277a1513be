#pragma once

#include "ebc/approx/mlp.hpp"

#include <algorithm>
#include <cmath>

namespace ebc {

/// Tanh-squashed diagonal Gaussian policy. The network emits, per action
/// dimension, a mean and a raw log-std; the raw value is mapped smoothly onto
/// [kLogStdMin, kLogStdMax] with a scaled tanh.
class GaussianPolicy {
 public:
  static constexpr double kLogStdMin = -10.0;
  static constexpr double kLogStdMax = 2.0;
  /// Emitted actions are kept this far inside the open interval (-1, 1).
  static constexpr double kActionMargin = 1e-6;

  /// Everything a reparameterised draw needs for the backward pass.
  struct Draw {
    Mat action;    // act x N, squashed
    Vec log_prob;  // N
    Mat pre_tanh;  // u = mean + std * eps
    Mat eps;
    Mat mean;
    Mat log_std;
    Mat raw_log_std;
    Mlp::Cache cache;
  };

  GaussianPolicy() = default;
  GaussianPolicy(std::size_t obs_dim, std::size_t act_dim, const std::vector<std::size_t>& hidden, Rng& rng)
      : act_dim_(act_dim) {
    std::vector<std::size_t> sizes{obs_dim};
    sizes.insert(sizes.end(), hidden.begin(), hidden.end());
    sizes.push_back(2 * act_dim);
    net_ = Mlp(sizes, rng);
  }
  GaussianPolicy(Mlp net, std::size_t act_dim) : net_(std::move(net)), act_dim_(act_dim) {
    if (net_.out_dim() != 2 * act_dim) throw DimensionError("policy head", 2 * act_dim, net_.out_dim());
  }

  std::size_t act_dim() const noexcept { return act_dim_; }
  std::size_t obs_dim() const { return net_.in_dim(); }
  Mlp& net() noexcept { return net_; }
  const Mlp& net() const noexcept { return net_; }

  static double squash_log_std(double raw) {
    return kLogStdMin + 0.5 * (kLogStdMax - kLogStdMin) * (std::tanh(raw) + 1.0);
  }

  /// log(1 - tanh(u)^2), stable for large |u|.
  static double log1m_tanh2(double u) {
    const double x = -2.0 * u;
    const double softplus = x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
    return 2.0 * (std::log(2.0) - u - softplus);
  }

  static double clamp_action(double a) { return std::clamp(a, -1.0 + kActionMargin, 1.0 - kActionMargin); }

  Mat noise(std::size_t n, Rng& rng) const {
    Mat eps(static_cast<Eigen::Index>(act_dim_), static_cast<Eigen::Index>(n));
    for (Eigen::Index j = 0; j < eps.cols(); ++j)
      for (Eigen::Index i = 0; i < eps.rows(); ++i) eps(i, j) = std_normal(rng);
    return eps;
  }

  /// Reparameterised draw with caller-supplied standard-normal noise.
  Draw draw(const Mat& states, const Mat& eps) const {
    Draw d;
    const Mat out = net_.forward(states, d.cache);
    const auto k = static_cast<Eigen::Index>(act_dim_);
    if (eps.rows() != k || eps.cols() != states.cols())
      throw DimensionError("policy noise", static_cast<std::size_t>(k * states.cols()),
                           static_cast<std::size_t>(eps.size()));
    d.eps = eps;
    d.mean = out.topRows(k);
    d.raw_log_std = out.bottomRows(k);
    d.log_std = d.raw_log_std.unaryExpr([](double r) { return squash_log_std(r); });
    d.pre_tanh = d.mean + (d.log_std.array().exp() * eps.array()).matrix();
    d.action = d.pre_tanh.unaryExpr([](double u) { return clamp_action(std::tanh(u)); });
    constexpr double half_log_2pi = 0.91893853320467274178;
    d.log_prob = Vec::Zero(states.cols());
    for (Eigen::Index j = 0; j < states.cols(); ++j) {
      double lp = 0.0;
      for (Eigen::Index i = 0; i < k; ++i)
        lp += -0.5 * eps(i, j) * eps(i, j) - d.log_std(i, j) - half_log_2pi - log1m_tanh2(d.pre_tanh(i, j));
      d.log_prob[j] = lp;
    }
    return d;
  }

  Draw sample(const Mat& states, Rng& rng) const {
    return draw(states, noise(static_cast<std::size_t>(states.cols()), rng));
  }

  /// Squashed mean, used for deterministic evaluation.
  Mat mean_action(const Mat& states) const {
    const Mat out = net_.forward(states);
    return out.topRows(static_cast<Eigen::Index>(act_dim_)).unaryExpr([](double u) {
      return clamp_action(std::tanh(u));
    });
  }

  /// Density of a given squashed action (change of variables through tanh).
  Vec log_prob_of(const Mat& states, const Mat& actions) const {
    const Mat out = net_.forward(states);
    const auto k = static_cast<Eigen::Index>(act_dim_);
    constexpr double half_log_2pi = 0.91893853320467274178;
    Vec lp = Vec::Zero(states.cols());
    for (Eigen::Index j = 0; j < states.cols(); ++j)
      for (Eigen::Index i = 0; i < k; ++i) {
        const double u = std::atanh(actions(i, j));
        const double ls = squash_log_std(out(k + i, j));
        const double e = (u - out(i, j)) / std::exp(ls);
        lp[j] += -0.5 * e * e - ls - half_log_2pi - log1m_tanh2(u);
      }
    return lp;
  }

  /// Backpropagates dL/daction and dL/dlog_prob of a draw (noise held fixed)
  /// into network parameter gradients.
  void backward(const Draw& d, const Mat& grad_action, const Vec& grad_log_prob, ParamList& grads) const {
    const auto k = static_cast<Eigen::Index>(act_dim_);
    const Eigen::Index n = d.action.cols();
    Mat grad_out(2 * k, n);
    const double half_range = 0.5 * (kLogStdMax - kLogStdMin);
    for (Eigen::Index j = 0; j < n; ++j)
      for (Eigen::Index i = 0; i < k; ++i) {
        const double t = std::tanh(d.pre_tanh(i, j));
        const double sd = std::exp(d.log_std(i, j));
        // d log_prob / du = 2 tanh(u) via the log(1 - tanh^2) term.
        const double du = grad_action(i, j) * (1.0 - t * t) + grad_log_prob[j] * 2.0 * t;
        const double dmean = du;
        const double dlog_std = du * sd * d.eps(i, j) - grad_log_prob[j];
        const double tr = std::tanh(d.raw_log_std(i, j));
        grad_out(i, j) = dmean;
        grad_out(k + i, j) = dlog_std * half_range * (1.0 - tr * tr);
      }
    net_.backward(d.cache, grad_out, grads);
  }

 private:
  Mlp net_;
  std::size_t act_dim_ = 0;
};

}  // namespace ebc
