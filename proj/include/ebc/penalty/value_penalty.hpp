#pragma once

#include "ebc/core/error.hpp"
#include "ebc/core/types.hpp"
#include "ebc/reward/reward_models.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <string>
#include <vector>

namespace ebc {

/// Bounded history whose estimate is the median of its contents.
class MedianFilter {
 public:
  explicit MedianFilter(std::size_t capacity = 50) : capacity_(capacity) {
    if (capacity_ == 0) throw ConfigError("median filter length must be positive");
  }

  void push(double v) {
    if (!std::isfinite(v)) throw NonFiniteError("median filter input is not finite");
    values_.push_back(v);
    if (values_.size() > capacity_) values_.pop_front();
  }

  bool empty() const noexcept { return values_.empty(); }
  std::size_t size() const noexcept { return values_.size(); }
  std::size_t capacity() const noexcept { return capacity_; }
  const std::deque<double>& values() const noexcept { return values_; }

  /// Middle value; mean of the two middle values for an even count.
  double median() const {
    if (values_.empty()) throw Error("median of an empty filter");
    std::vector<double> v(values_.begin(), values_.end());
    const std::size_t mid = v.size() / 2;
    std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
    const double hi = v[mid];
    if (v.size() % 2 == 1) return hi;
    const double lo = *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid));
    return 0.5 * (lo + hi);
  }

 private:
  std::size_t capacity_;
  std::deque<double> values_;
};

enum class RegularizerKind { none, value_penalty, c2f_l2, cql };

inline RegularizerKind regularizer_from_string(const std::string& s) {
  if (s == "none") return RegularizerKind::none;
  if (s == "vp") return RegularizerKind::value_penalty;
  if (s == "c2f_l2") return RegularizerKind::c2f_l2;
  if (s == "cql") return RegularizerKind::cql;
  throw ConfigError("unknown regularizer '" + s + "' (expected none, vp, c2f_l2 or cql)");
}

inline std::string to_string(RegularizerKind k) {
  switch (k) {
    case RegularizerKind::none: return "none";
    case RegularizerKind::value_penalty: return "vp";
    case RegularizerKind::c2f_l2: return "c2f_l2";
    case RegularizerKind::cql: return "cql";
  }
  return "?";
}

struct PenaltyConfig {
  RegularizerKind kind = RegularizerKind::value_penalty;
  double lambda = 10.0;
  std::size_t filter_len = 50;
  /// Coefficient for the C2F-L2 and CQL alternatives.
  double alt_coeff = 1.0;
  /// Out-of-distribution actions per state for CQL (half uniform, half policy).
  std::size_t cql_samples = 10;

  void validate() const {
    if (lambda < 0.0) throw ConfigError("penalty lambda must be non-negative");
    if (filter_len == 0) throw ConfigError("penalty filter length must be positive");
    if (alt_coeff < 0.0) throw ConfigError("regularizer coefficient must be non-negative");
    if (kind == RegularizerKind::cql && cql_samples < 2) throw ConfigError("CQL needs at least 2 sampled actions");
  }
};

/// Running value bounds. The upper bound is the median of recent batch-mean
/// example-state values; the lower bound is min reward / (1 - gamma), with the
/// minimum reward either fixed (SQIL) or a median of observed batch minima (DAC).
class PenaltyBounds {
 public:
  PenaltyBounds() = default;
  PenaltyBounds(const PenaltyConfig& cfg, const RewardConfig& reward, double gamma)
      : qmax_(cfg.filter_len), min_reward_(cfg.filter_len), lambda_(cfg.lambda), reward_(reward), gamma_(gamma) {}

  void push_example_value(double batch_mean_value) { qmax_.push(batch_mean_value); }
  void push_min_reward(double batch_min_reward) { min_reward_.push(batch_min_reward); }

  bool warm() const noexcept { return !qmax_.empty(); }
  double q_max() const { return qmax_.median(); }
  double q_min() const;
  double lambda() const noexcept { return lambda_; }
  double gamma() const noexcept { return gamma_; }
  const MedianFilter& qmax_filter() const noexcept { return qmax_; }
  const MedianFilter& min_reward_filter() const noexcept { return min_reward_; }
  MedianFilter& qmax_filter() noexcept { return qmax_; }
  MedianFilter& min_reward_filter() noexcept { return min_reward_; }
  const RewardConfig& reward_config() const noexcept { return reward_; }

 private:
  MedianFilter qmax_{50};
  MedianFilter min_reward_{50};
  double lambda_ = 10.0;
  RewardConfig reward_;
  double gamma_ = 0.99;
};

namespace detail {

// Decimal m * 10^e recovered from the shortest round-trip text of a double.
struct Decimal {
  __int128 m = 0;
  int e = 0;
};

inline bool to_decimal(double v, Decimal& out) {
  if (!std::isfinite(v)) return false;
  const std::string t = format_double(v);
  std::size_t i = 0;
  bool neg = false;
  if (t[i] == '-') {
    neg = true;
    ++i;
  }
  __int128 m = 0;
  int e = 0, digits = 0;
  bool frac = false;
  for (; i < t.size() && t[i] != 'e'; ++i) {
    if (t[i] == '.') {
      frac = true;
      continue;
    }
    if (++digits > 18) return false;
    m = m * 10 + (t[i] - '0');
    if (frac) --e;
  }
  if (i < t.size()) e += std::stoi(t.substr(i + 1));
  out = {neg ? -m : m, e};
  return true;
}

inline __int128 pow10(int n) {
  __int128 p = 1;
  while (n-- > 0) p *= 10;
  return p;
}

// a * b / (1 - g), correctly rounded from the decimal forms of the inputs when
// every intermediate integer stays below 2^53; the plain double formula otherwise.
inline double product_over_one_minus(double a, double b, double g) {
  const double plain = a * b / (1.0 - g);
  Decimal da, db, dg;
  if (!to_decimal(a, da) || !to_decimal(b, db) || !to_decimal(g, dg) || dg.e >= 0 || dg.e < -18) return plain;
  const __int128 num = da.m * db.m;
  const int num_e = da.e + db.e;
  const __int128 den = pow10(-dg.e) - dg.m;  // (1 - g) * 10^(-dg.e)
  const int shift = num_e - dg.e;
  if (den <= 0 || shift > 18 || shift < -18) return plain;
  const __int128 n = shift >= 0 ? num * pow10(shift) : num;
  const __int128 d = shift >= 0 ? den : den * pow10(-shift);
  constexpr __int128 lim = static_cast<__int128>(1) << 53;
  if (n >= lim || n <= -lim || d >= lim) return plain;
  return static_cast<double>(n) / static_cast<double>(d);
}

}  // namespace detail

/// Lower value bound implied by the reward model:
///   SQIL: scale * min(labels) / (1 - gamma)
///   DAC:  median of observed minimum rewards / (1 - gamma)
inline double compute_qmin(const RewardConfig& reward, double gamma, const MedianFilter* observed_min = nullptr) {
  if (!(gamma >= 0.0 && gamma < 1.0)) throw ConfigError("gamma must lie in [0, 1)");
  if (reward.kind == RewardKind::dac) {
    if (!observed_min || observed_min->empty()) throw Error("DAC lower bound needs observed rewards");
    return observed_min->median() / (1.0 - gamma);
  }
  // Evaluated on the decimal config values so that e.g. 0.1 * -1 / (1 - 0.99)
  // is exactly -10 rather than carrying the binary representation error of 0.99.
  return detail::product_over_one_minus(reward.scale, std::min(reward.replay_label, reward.example_label), gamma);
}

inline double PenaltyBounds::q_min() const { return compute_qmin(reward_, gamma_, &min_reward_); }

/// Loss value with its gradient with respect to each input Q value.
struct PenaltyValue {
  double value = 0.0;
  Vec grad;
};

/// lambda * mean_i [max(Q_i - q_max, 0)^2 + max(q_min - Q_i, 0)^2]
inline PenaltyValue vp_loss(const Vec& q, double q_min, double q_max, double lambda) {
  if (q.size() == 0) throw EmptyBufferError("value penalty needs a non-empty batch");
  const double n = static_cast<double>(q.size());
  PenaltyValue out{0.0, Vec::Zero(q.size())};
  for (Eigen::Index i = 0; i < q.size(); ++i) {
    const double over = std::max(q[i] - q_max, 0.0), under = std::max(q_min - q[i], 0.0);
    out.value += over * over + under * under;
    out.grad[i] = lambda * 2.0 * (over - under) / n;
  }
  out.value *= lambda / n;
  return out;
}

inline PenaltyValue vp_loss(const Vec& q, const PenaltyBounds& bounds) {
  if (!bounds.warm()) throw Error("value penalty bounds are uninitialised");
  return vp_loss(q, bounds.q_min(), bounds.q_max(), bounds.lambda());
}

/// Alternative regularizers. For CQL, `ood_q` is samples x N: each column holds
/// the Q values of sampled actions at the state of the matching data column.
struct AltPenaltyValue {
  double value = 0.0;
  Vec grad_q;
  Mat grad_ood;
};

inline AltPenaltyValue alt_regularizer(RegularizerKind kind, const Vec& q, const Mat* ood_q, double coeff) {
  if (q.size() == 0) throw EmptyBufferError("regularizer needs a non-empty batch");
  const double n = static_cast<double>(q.size());
  AltPenaltyValue out;
  out.grad_q = Vec::Zero(q.size());
  if (kind == RegularizerKind::c2f_l2) {
    out.value = coeff * q.squaredNorm() / n;
    out.grad_q = (2.0 * coeff / n) * q;
    return out;
  }
  if (kind != RegularizerKind::cql) throw ConfigError("alt_regularizer handles c2f_l2 and cql only");
  if (!ood_q || ood_q->size() == 0) throw ConfigError("CQL regularizer needs sampled out-of-distribution Q values");
  if (ood_q->cols() != q.size())
    throw DimensionError("CQL sampled Q batch", static_cast<std::size_t>(q.size()),
                         static_cast<std::size_t>(ood_q->cols()));
  out.grad_ood = Mat::Zero(ood_q->rows(), ood_q->cols());
  for (Eigen::Index j = 0; j < q.size(); ++j) {
    const auto col = ood_q->col(j);
    const double m = col.maxCoeff();
    const Vec e = (col.array() - m).exp().matrix();
    const double s = e.sum();
    out.value += m + std::log(s) - q[j];
    out.grad_ood.col(j) = (coeff / n) * e / s;
    out.grad_q[j] = -coeff / n;
  }
  out.value *= coeff / n;
  return out;
}

}  // namespace ebc
