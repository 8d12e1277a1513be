#pragma once

#include "ebc/approx/mlp.hpp"

#include <cmath>
#include <string>

namespace ebc {

struct OptimConfig {
  double lr = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-2;
  /// Global gradient-norm cap; <= 0 disables clipping.
  double max_grad_norm = 10.0;
};

/// Rescales grads in place so their global L2 norm is at most `cap`.
/// Returns the norm before clipping.
inline double clip_grad_norm(ParamList& grads, double cap) {
  const double norm = std::sqrt(squared_norm(grads));
  if (cap > 0.0 && norm > cap) {
    const double scale = cap / norm;
    for (auto& l : grads) {
      l.w *= scale;
      l.b *= scale;
    }
  }
  return norm;
}

/// Moment-based optimizer with decoupled weight decay:
///   p <- p - lr * wd * p - lr * mhat / (sqrt(vhat) + eps)
class AdamW {
 public:
  AdamW() = default;
  AdamW(const ParamList& like, OptimConfig cfg, std::string name = "params")
      : cfg_(cfg), name_(std::move(name)), m_(Mlp::zeros_like(like)), v_(Mlp::zeros_like(like)) {}

  /// Clips, then applies one update. Throws before touching params when any
  /// gradient is non-finite. Returns the pre-clip gradient norm.
  double step(ParamList& params, ParamList grads) {
    check_same_shape(params, grads, "gradient");
    check_same_shape(params, m_, "optimizer state");
    for (std::size_t l = 0; l < grads.size(); ++l) {
      if (!grads[l].w.allFinite() || !grads[l].b.allFinite())
        throw NonFiniteError("non-finite gradient in " + name_ + " layer " + std::to_string(l));
    }
    const double norm = clip_grad_norm(grads, cfg_.max_grad_norm);
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    const double decay = 1.0 - cfg_.lr * cfg_.weight_decay;
    auto update = [&](auto& p, auto& m, auto& v, const auto& g) {
      m = cfg_.beta1 * m + (1.0 - cfg_.beta1) * g;
      v = cfg_.beta2 * v + (1.0 - cfg_.beta2) * g.cwiseAbs2();
      p *= decay;
      p.array() -= cfg_.lr * (m.array() / bc1) / ((v.array() / bc2).sqrt() + cfg_.eps);
    };
    for (std::size_t l = 0; l < params.size(); ++l) {
      update(params[l].w, m_[l].w, v_[l].w, grads[l].w);
      update(params[l].b, m_[l].b, v_[l].b, grads[l].b);
    }
    return norm;
  }

  const OptimConfig& config() const noexcept { return cfg_; }
  std::size_t steps() const noexcept { return t_; }
  ParamList& first_moment() noexcept { return m_; }
  ParamList& second_moment() noexcept { return v_; }
  const ParamList& first_moment() const noexcept { return m_; }
  const ParamList& second_moment() const noexcept { return v_; }
  void set_steps(std::size_t t) noexcept { t_ = t; }

 private:
  OptimConfig cfg_;
  std::string name_;
  ParamList m_, v_;
  std::size_t t_ = 0;
};

/// Scalar variant, used for the log-temperature. No weight decay.
class ScalarAdam {
 public:
  ScalarAdam() = default;
  explicit ScalarAdam(OptimConfig cfg) : cfg_(cfg) {}

  void step(double& p, double g) {
    if (!std::isfinite(g)) throw NonFiniteError("non-finite temperature gradient");
    ++t_;
    m_ = cfg_.beta1 * m_ + (1.0 - cfg_.beta1) * g;
    v_ = cfg_.beta2 * v_ + (1.0 - cfg_.beta2) * g * g;
    const double mhat = m_ / (1.0 - std::pow(cfg_.beta1, static_cast<double>(t_)));
    const double vhat = v_ / (1.0 - std::pow(cfg_.beta2, static_cast<double>(t_)));
    p -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
  }

  double& first_moment() noexcept { return m_; }
  double& second_moment() noexcept { return v_; }
  std::size_t& steps() noexcept { return t_; }
  double first_moment() const noexcept { return m_; }
  double second_moment() const noexcept { return v_; }
  std::size_t steps() const noexcept { return t_; }

 private:
  OptimConfig cfg_;
  double m_ = 0.0, v_ = 0.0;
  std::size_t t_ = 0;
};

/// target <- (1 - tau) * target + tau * online
inline void polyak_update(ParamList& target, const ParamList& online, double tau) {
  check_same_shape(target, online, "polyak target");
  if (!(tau > 0.0 && tau <= 1.0)) throw ConfigError("polyak rate must lie in (0, 1]");
  for (std::size_t l = 0; l < target.size(); ++l) {
    target[l].w = (1.0 - tau) * target[l].w + tau * online[l].w;
    target[l].b = (1.0 - tau) * target[l].b + tau * online[l].b;
  }
}

}  // namespace ebc
