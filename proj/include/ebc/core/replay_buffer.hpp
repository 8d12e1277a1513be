#pragma once

#include "ebc/core/error.hpp"
#include "ebc/core/types.hpp"

#include <cstddef>
#include <optional>
#include <vector>

namespace ebc {

/// One environment step. Rewards are not stored: they are a function of the
/// state under whichever reward model reads the buffer.
struct Transition {
  Vec state;
  Vec action;
  Vec next_state;
  std::size_t step_index = 0;
};

inline void check_transition(const Transition& t) {
  if (t.state.size() != t.next_state.size())
    throw DimensionError("next_state", static_cast<std::size_t>(t.state.size()),
                         static_cast<std::size_t>(t.next_state.size()));
  if (!t.state.allFinite()) throw NonFiniteError("transition field 'state' has a non-finite component");
  if (!t.action.allFinite()) throw NonFiniteError("transition field 'action' has a non-finite component");
  if (!t.next_state.allFinite())
    throw NonFiniteError("transition field 'next_state' has a non-finite component");
}

/// Fixed-capacity FIFO store of transitions. The first push establishes the
/// state and action dimensions; later pushes must agree.
class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
    if (capacity == 0) throw ConfigError("replay buffer capacity must be positive");
    entries_.reserve(std::min<std::size_t>(capacity, 1 << 16));
  }

  void push(Transition t) {
    if (!entries_.empty() || dims_set_) {
      if (static_cast<std::size_t>(t.state.size()) != state_dim_)
        throw DimensionError("state", state_dim_, static_cast<std::size_t>(t.state.size()));
      if (static_cast<std::size_t>(t.action.size()) != action_dim_)
        throw DimensionError("action", action_dim_, static_cast<std::size_t>(t.action.size()));
    }
    check_transition(t);
    if (!dims_set_) {
      state_dim_ = static_cast<std::size_t>(t.state.size());
      action_dim_ = static_cast<std::size_t>(t.action.size());
      dims_set_ = true;
    }
    if (entries_.size() < capacity_) {
      entries_.push_back(std::move(t));
    } else {
      entries_[head_] = std::move(t);
      head_ = (head_ + 1) % capacity_;
    }
    ++insertion_count_;
  }

  std::size_t size() const noexcept { return entries_.size(); }
  bool empty() const noexcept { return entries_.empty(); }
  std::size_t capacity() const noexcept { return capacity_; }
  std::size_t insertion_count() const noexcept { return insertion_count_; }
  std::size_t state_dim() const noexcept { return state_dim_; }
  std::size_t action_dim() const noexcept { return action_dim_; }

  /// i-th oldest entry.
  const Transition& operator[](std::size_t i) const { return entries_[physical(i)]; }

  /// Logical index of the transition that directly continues entry i in the
  /// same episode, if it is still stored.
  std::optional<std::size_t> successor(std::size_t i) const {
    if (i + 1 >= entries_.size()) return std::nullopt;
    const Transition& cur = (*this)[i];
    const Transition& nxt = (*this)[i + 1];
    if (nxt.step_index != cur.step_index + 1) return std::nullopt;
    return i + 1;
  }

  /// Logical indices of n uniform draws with replacement.
  std::vector<std::size_t> sample_indices(std::size_t n, Rng& rng) const {
    if (entries_.empty()) throw EmptyBufferError("cannot sample from an empty replay buffer");
    if (n == 0) throw ConfigError("batch size must be at least 1");
    std::vector<std::size_t> idx(n);
    for (auto& i : idx) i = uniform_index(rng, entries_.size());
    return idx;
  }

  std::vector<Transition> sample(std::size_t n, Rng& rng) const {
    std::vector<Transition> out;
    out.reserve(n);
    for (auto i : sample_indices(n, rng)) out.push_back((*this)[i]);
    return out;
  }

 private:
  std::size_t physical(std::size_t i) const { return (head_ + i) % entries_.size(); }

  std::size_t capacity_;
  std::vector<Transition> entries_;
  std::size_t head_ = 0;  // oldest entry once full
  std::size_t insertion_count_ = 0;
  std::size_t state_dim_ = 0;
  std::size_t action_dim_ = 0;
  bool dims_set_ = false;
};

}  // namespace ebc
