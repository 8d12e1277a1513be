#pragma once

#include "ebc/core/error.hpp"
#include "ebc/core/types.hpp"

#include <cmath>
#include <string>
#include <vector>

namespace ebc {

/// Affine layer y = W x + b with W stored out x in.
struct Layer {
  Mat w;
  Vec b;
};

using ParamList = std::vector<Layer>;

/// SiLU, x * sigmoid(x): smooth everywhere, so finite differences and the
/// second derivatives needed by the gradient penalty are well defined.
struct Silu {
  static Mat sigmoid(const Mat& z) { return (1.0 + (-z.array()).exp()).inverse().matrix(); }
  static Mat value(const Mat& z, const Mat& sig) { return (z.array() * sig.array()).matrix(); }
  static Mat d1(const Mat& z, const Mat& sig) {
    return (sig.array() * (1.0 + z.array() * (1.0 - sig.array()))).matrix();
  }
  static Mat d2(const Mat& z, const Mat& sig) {
    return (sig.array() * (1.0 - sig.array()) * (2.0 + z.array() * (1.0 - 2.0 * sig.array()))).matrix();
  }
};

/// Feed-forward network: SiLU on hidden layers, linear output layer.
/// Inputs and outputs are batched one sample per column.
class Mlp {
 public:
  struct Cache {
    std::vector<Mat> inputs;  // inputs[l] feeds layer l; inputs[0] is the network input
    std::vector<Mat> pre;     // pre-activations of hidden layers
    std::vector<Mat> sig;     // sigmoid(pre), reused by derivatives
  };

  Mlp() = default;

  /// PyTorch-style default init: U(-1/sqrt(fan_in), 1/sqrt(fan_in)) for weights and biases.
  Mlp(const std::vector<std::size_t>& sizes, Rng& rng) {
    if (sizes.size() < 2) throw ConfigError("an MLP needs at least input and output sizes");
    for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
      const auto in = static_cast<Eigen::Index>(sizes[l]), out = static_cast<Eigen::Index>(sizes[l + 1]);
      if (in <= 0 || out <= 0) throw ConfigError("MLP layer sizes must be positive");
      const double bound = 1.0 / std::sqrt(static_cast<double>(in));
      Layer layer{Mat(out, in), Vec(out)};
      for (Eigen::Index j = 0; j < in; ++j)
        for (Eigen::Index i = 0; i < out; ++i) layer.w(i, j) = uniform(rng, -bound, bound);
      for (Eigen::Index i = 0; i < out; ++i) layer.b[i] = uniform(rng, -bound, bound);
      params_.push_back(std::move(layer));
    }
  }

  explicit Mlp(ParamList params) : params_(std::move(params)) {
    for (std::size_t l = 0; l < params_.size(); ++l) {
      if (params_[l].w.rows() != params_[l].b.size())
        throw DimensionError("layer " + std::to_string(l) + " bias", static_cast<std::size_t>(params_[l].w.rows()),
                             static_cast<std::size_t>(params_[l].b.size()));
      if (l > 0 && params_[l].w.cols() != params_[l - 1].w.rows())
        throw DimensionError("layer " + std::to_string(l) + " input", static_cast<std::size_t>(params_[l - 1].w.rows()),
                             static_cast<std::size_t>(params_[l].w.cols()));
    }
  }

  std::size_t in_dim() const { return static_cast<std::size_t>(params_.front().w.cols()); }
  std::size_t out_dim() const { return static_cast<std::size_t>(params_.back().w.rows()); }
  std::size_t num_layers() const { return params_.size(); }
  ParamList& params() noexcept { return params_; }
  const ParamList& params() const noexcept { return params_; }

  Mat forward(const Mat& x) const {
    check_input(x);
    Mat h = x;
    for (std::size_t l = 0; l < params_.size(); ++l) {
      Mat z = (params_[l].w * h).colwise() + params_[l].b;
      if (l + 1 == params_.size()) return z;
      h = Silu::value(z, Silu::sigmoid(z));
    }
    return h;
  }

  Mat forward(const Mat& x, Cache& cache) const {
    check_input(x);
    const std::size_t n = params_.size();
    cache.inputs.resize(n);
    cache.pre.resize(n - 1);
    cache.sig.resize(n - 1);
    cache.inputs[0] = x;
    for (std::size_t l = 0; l + 1 < n; ++l) {
      cache.pre[l] = (params_[l].w * cache.inputs[l]).colwise() + params_[l].b;
      cache.sig[l] = Silu::sigmoid(cache.pre[l]);
      cache.inputs[l + 1] = Silu::value(cache.pre[l], cache.sig[l]);
    }
    return (params_[n - 1].w * cache.inputs[n - 1]).colwise() + params_[n - 1].b;
  }

  /// Accumulates dL/dparams into `grads` and returns dL/dinput.
  Mat backward(const Cache& cache, const Mat& grad_out, ParamList& grads) const {
    const std::size_t n = params_.size();
    if (grad_out.rows() != static_cast<Eigen::Index>(out_dim()))
      throw DimensionError("upstream gradient", out_dim(), static_cast<std::size_t>(grad_out.rows()));
    if (cache.inputs.size() != n || grad_out.cols() != cache.inputs[0].cols())
      throw DimensionError("backward called without a matching forward pass");
    Mat delta = grad_out;
    for (std::size_t l = n; l-- > 0;) {
      grads[l].w.noalias() += delta * cache.inputs[l].transpose();
      grads[l].b += delta.rowwise().sum();
      Mat up = params_[l].w.transpose() * delta;
      if (l == 0) return up;
      delta = (up.array() * Silu::d1(cache.pre[l - 1], cache.sig[l - 1]).array()).matrix();
    }
    return delta;
  }

  /// dL/dinput only; parameter gradients are not formed.
  Mat backward_input(const Cache& cache, const Mat& grad_out) const {
    const std::size_t n = params_.size();
    if (cache.inputs.size() != n || grad_out.cols() != cache.inputs[0].cols())
      throw DimensionError("backward called without a matching forward pass");
    Mat delta = grad_out;
    for (std::size_t l = n; l-- > 0;) {
      Mat up = params_[l].w.transpose() * delta;
      if (l == 0) return up;
      delta = (up.array() * Silu::d1(cache.pre[l - 1], cache.sig[l - 1]).array()).matrix();
    }
    return delta;
  }

  ParamList zero_grads() const { return zeros_like(params_); }

  static ParamList zeros_like(const ParamList& p) {
    ParamList g;
    g.reserve(p.size());
    for (const auto& l : p) g.push_back({Mat::Zero(l.w.rows(), l.w.cols()), Vec::Zero(l.b.size())});
    return g;
  }

 private:
  void check_input(const Mat& x) const {
    if (params_.empty()) throw ConfigError("MLP has no layers");
    if (x.rows() != static_cast<Eigen::Index>(in_dim()))
      throw DimensionError("network input", in_dim(), static_cast<std::size_t>(x.rows()));
  }

  ParamList params_;
};

// ParamList arithmetic shared by optimizers, target networks and tests.

inline std::size_t param_count(const ParamList& p) {
  std::size_t n = 0;
  for (const auto& l : p) n += static_cast<std::size_t>(l.w.size() + l.b.size());
  return n;
}

inline double squared_norm(const ParamList& p) {
  double s = 0.0;
  for (const auto& l : p) s += l.w.squaredNorm() + l.b.squaredNorm();
  return s;
}

inline void check_same_shape(const ParamList& a, const ParamList& b, const char* what) {
  if (a.size() != b.size()) throw DimensionError(std::string(what) + " layer count", a.size(), b.size());
  for (std::size_t l = 0; l < a.size(); ++l)
    if (a[l].w.rows() != b[l].w.rows() || a[l].w.cols() != b[l].w.cols() || a[l].b.size() != b[l].b.size())
      throw DimensionError(std::string(what) + " layer " + std::to_string(l) + " shape",
                           static_cast<std::size_t>(a[l].w.size()), static_cast<std::size_t>(b[l].w.size()));
}

/// Visits every scalar parameter as (flat index, reference).
template <class F>
void for_each_scalar(ParamList& p, F&& f) {
  std::size_t k = 0;
  for (auto& l : p) {
    for (Eigen::Index i = 0; i < l.w.size(); ++i) f(k++, l.w.data()[i]);
    for (Eigen::Index i = 0; i < l.b.size(); ++i) f(k++, l.b.data()[i]);
  }
}

inline double& scalar_at(ParamList& p, std::size_t flat) {
  for (auto& l : p) {
    const auto nw = static_cast<std::size_t>(l.w.size());
    if (flat < nw) return l.w.data()[flat];
    flat -= nw;
    const auto nb = static_cast<std::size_t>(l.b.size());
    if (flat < nb) return l.b.data()[flat];
    flat -= nb;
  }
  throw DimensionError("flat parameter index out of range");
}

}  // namespace ebc
