#pragma once

#include "ebc/approx/checkpoint.hpp"
#include "ebc/approx/critics.hpp"
#include "ebc/approx/mlp.hpp"
#include "ebc/approx/optim.hpp"
#include "ebc/approx/policy.hpp"
#include "ebc/core/error.hpp"
#include "ebc/core/example_buffer.hpp"
#include "ebc/core/replay_buffer.hpp"
#include "ebc/core/task.hpp"
#include "ebc/core/types.hpp"
#include "ebc/envs/chain_world.hpp"
#include "ebc/envs/env.hpp"
#include "ebc/envs/frame_stack.hpp"
#include "ebc/envs/point_grab.hpp"
#include "ebc/eval/q_trace.hpp"
#include "ebc/eval/stats.hpp"
#include "ebc/intentions/intention.hpp"
#include "ebc/penalty/value_penalty.hpp"
#include "ebc/reward/reward_models.hpp"
#include "ebc/scheduler/scheduler.hpp"
#include "ebc/trainer/trainer.hpp"
