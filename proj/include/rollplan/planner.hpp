#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "rollplan/dynamics.hpp"
#include "rollplan/policy.hpp"
#include "rollplan/raster.hpp"
#include "rollplan/reward.hpp"
#include "rollplan/scene.hpp"

namespace rollplan {

enum class Backend { env_sim, dynamics };

std::string to_string(Backend b);
Backend backend_from_string(const std::string& s);

struct PlannerConfig {
  int num_candidates = 5;
  int rollout_length = 10;
  double temperature = 1.0;
  Backend backend = Backend::env_sim;
  bool resample_after_first = false;
  std::uint64_t root_seed = 0;
  int max_env_steps = 120;
  int workers = 1;
  int execute_horizon = 0;  // actions executed per replan; 0 means all of them

  void validate() const;
};

struct RolloutPlan {
  int candidate_index = 0;
  std::vector<Action> actions;
  std::vector<Image> predicted_frames;   // dynamics backend
  std::optional<WorldState> final_state;  // env_sim backend
  double reward = kRewardSentinel;
  double wall_time_ms = 0.0;
  bool failed = false;
  std::string error;
};

struct PlanResources {
  const DynamicsModel* model = nullptr;  // required for Backend::dynamics
  RewardConfig reward;
};

using RolloutJob = std::function<RolloutPlan()>;

struct BatchResult {
  std::vector<RolloutPlan> plans;  // in job order
  double wall_time_ms = 0.0;
};

/// Runs independent jobs on up to `workers` threads. A job that throws
/// yields a failed plan with the sentinel reward.
BatchResult parallel_execute(const std::vector<RolloutJob>& jobs, int workers);

struct PlanStepResult {
  std::size_t selected = 0;
  std::vector<RolloutPlan> plans;
  double wall_time_ms = 0.0;

  const RolloutPlan& best() const { return plans[selected]; }
};

struct StepContext {
  const Task& task;
  const Policy& policy;
  const PlanResources& resources;
  const PlannerConfig& config;
  std::uint64_t episode_seed = 0;  // mixed with root_seed for candidate streams
  int replan_index = 0;
};

/// One round of best-of-n planning. `forced_first_actions`, when given,
/// replaces sampling and sets the number of candidates.
PlanStepResult plan_step(const Image& observation, const WorldState& state, const StepContext& ctx,
                         const std::vector<Action>* forced_first_actions = nullptr);

struct EpisodeResult {
  std::string task;
  bool success = false;
  bool partial_success = false;
  int env_steps_used = 0;
  int num_replans = 0;
  std::vector<double> selected_rewards;
  double planning_time_ms = 0.0;
  std::uint64_t seed = 0;
};

EpisodeResult run_episode(const Task& task, std::uint64_t env_seed, const Policy& policy,
                          const PlanResources& resources, const PlannerConfig& config,
                          std::ostream* plan_log = nullptr);

/// No-planning baseline in the same result format.
EpisodeResult run_greedy_episode(const Task& task, std::uint64_t env_seed, const Policy& policy,
                                 int max_env_steps);

}  // namespace rollplan
