#pragma once

#include "ebc/envs/env.hpp"

namespace ebc {

/// Observation is the concatenation of the k most recent raw observations,
/// oldest first. Reset repeats the initial observation k times.
class FrameStack final : public Env {
 public:
  FrameStack(std::unique_ptr<Env> inner, std::size_t k) : inner_(std::move(inner)), k_(k) {
    if (k_ == 0) throw ConfigError("frame stack size must be >= 1");
    if (!inner_) throw ConfigError("frame stack needs an inner environment");
    spec_ = inner_->spec();
    spec_.obs_dim = inner_->spec().obs_dim * k_;
  }

  FrameStack(const FrameStack& o) : Env(o), inner_(o.inner_->clone()), k_(o.k_), spec_(o.spec_) {}

  const EnvSpec& spec() const override { return spec_; }
  std::string id() const override { return inner_->id() + "+stack" + std::to_string(k_); }
  std::unique_ptr<Env> clone() const override { return std::make_unique<FrameStack>(*this); }
  std::size_t k() const noexcept { return k_; }
  const Env& inner() const noexcept { return *inner_; }

  Vec reset(std::uint64_t seed) override { return repeat(inner_->reset(seed)); }

  Vec step(const Vec& state, const Vec& action) override {
    check_state(state);
    const auto d = static_cast<Eigen::Index>(inner_->spec().obs_dim);
    const Vec next_raw = inner_->step(latest(state), action);
    clamp_warnings_ = inner_->clamp_warnings();
    Vec out(state.size());
    out.head(state.size() - d) = state.tail(state.size() - d);
    out.tail(d) = next_raw;
    return out;
  }

  /// Most recent raw observation inside a stacked one.
  Vec latest(const Vec& stacked) const {
    const auto d = static_cast<Eigen::Index>(inner_->spec().obs_dim);
    return stacked.tail(d);
  }

  Vec repeat(const Vec& raw) const {
    const auto d = raw.size();
    Vec out(d * static_cast<Eigen::Index>(k_));
    for (std::size_t i = 0; i < k_; ++i) out.segment(static_cast<Eigen::Index>(i) * d, d) = raw;
    return out;
  }

  std::vector<std::string> task_names() const override { return inner_->task_names(); }

  SuccessPredicate success_predicate(const TaskId& task) const override {
    auto pred = inner_->success_predicate(task);
    const auto d = static_cast<Eigen::Index>(inner_->spec().obs_dim);
    return {task, [pred, d](const Vec& s) { return pred(Vec(s.tail(d))); }};
  }

  /// Success states are treated as steady: each raw example is repeated k times.
  ExampleBuffer generate_examples(const TaskId& task, std::size_t count, std::uint64_t seed) const override {
    const auto raw = inner_->generate_examples(task, count, seed);
    std::vector<Vec> states;
    states.reserve(raw.size());
    for (const auto& s : raw.states()) states.push_back(repeat(s));
    return ExampleBuffer(task, std::move(states));
  }

 private:
  std::unique_ptr<Env> inner_;
  std::size_t k_;
  EnvSpec spec_;
};

}  // namespace ebc
