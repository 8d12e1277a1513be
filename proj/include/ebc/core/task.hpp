#pragma once

#include "ebc/core/error.hpp"

#include <algorithm>
#include <string>
#include <vector>

namespace ebc {

enum class TaskKind { main, auxiliary };

struct TaskId {
  std::string name;
  TaskKind kind = TaskKind::auxiliary;

  bool is_main() const noexcept { return kind == TaskKind::main; }
  friend bool operator==(const TaskId&, const TaskId&) = default;
};

/// The tasks of one experiment: exactly one main task plus zero or more
/// auxiliary tasks, all with distinct names. Index 0 is always the main task.
class TaskSet {
 public:
  TaskSet() = default;

  TaskSet(const std::string& main, const std::vector<std::string>& aux) {
    tasks_.push_back({main, TaskKind::main});
    for (const auto& name : aux) tasks_.push_back({name, TaskKind::auxiliary});
    validate();
  }

  explicit TaskSet(std::vector<TaskId> tasks) : tasks_(std::move(tasks)) {
    auto it = std::find_if(tasks_.begin(), tasks_.end(), [](const TaskId& t) { return t.is_main(); });
    if (it != tasks_.end()) std::rotate(tasks_.begin(), it, it + 1);
    validate();
  }

  const TaskId& main() const { return tasks_.front(); }
  const std::vector<TaskId>& all() const noexcept { return tasks_; }
  std::size_t size() const noexcept { return tasks_.size(); }
  std::size_t num_aux() const noexcept { return tasks_.empty() ? 0 : tasks_.size() - 1; }
  const TaskId& operator[](std::size_t i) const { return tasks_.at(i); }

  std::size_t index_of(const std::string& name) const {
    for (std::size_t i = 0; i < tasks_.size(); ++i)
      if (tasks_[i].name == name) return i;
    throw ConfigError("unknown task '" + name + "'");
  }

  bool contains(const std::string& name) const {
    return std::any_of(tasks_.begin(), tasks_.end(), [&](const TaskId& t) { return t.name == name; });
  }

 private:
  void validate() const {
    std::size_t mains = 0;
    for (std::size_t i = 0; i < tasks_.size(); ++i) {
      if (tasks_[i].name.empty()) throw ConfigError("task names must be non-empty");
      if (tasks_[i].is_main()) ++mains;
      for (std::size_t j = 0; j < i; ++j)
        if (tasks_[j].name == tasks_[i].name)
          throw ConfigError("duplicate task name '" + tasks_[i].name + "'");
    }
    if (mains != 1)
      throw ConfigError("exactly one main task required, got " + std::to_string(mains));
  }

  std::vector<TaskId> tasks_;
};

}  // namespace ebc
