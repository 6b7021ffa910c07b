#include "rollplan/policy.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace rollplan {

namespace {

bool goal_reached(const ExtractedState& ext, const Task& task, int src_color) {
  const Vec2 src = *ext.object_positions[src_color];
  if (task.kind == TaskKind::stack) {
    const int dest_color = task.object_spec(*task.destination_object).color_id;
    return ext.object_positions[dest_color] &&
           distance(src, *ext.object_positions[dest_color]) <= task.success_radius;
  }
  return task.region->contains(src);
}

}  // namespace

void PolicyConfig::validate() const {
  if (gain < 0 || noise_std_at_temp_1 < 0 || approach_bias < 0 || grip_trigger_distance < 0 ||
      release_trigger_distance < 0) {
    throw std::invalid_argument("policy parameters must be non-negative");
  }
}

ScriptedPolicy::ScriptedPolicy(PolicyConfig config) : config_(config) { config_.validate(); }

Action ScriptedPolicy::greedy_action(const Image& observation, const Task& task) const {
  const int src_color = task.object_spec(task.source_object).color_id;
  const ExtractedState ext = extract(observation);
  if (ext.confidence == 0.0 || !ext.gripper_pos || !ext.object_positions[src_color]) {
    return Action{};
  }
  const Vec2 grip = *ext.gripper_pos;
  const bool holding = ext.held_color && *ext.held_color == src_color;

  if (!holding) {
    if (goal_reached(ext, task, src_color)) return Action{};
    const double b = config_.approach_bias / std::sqrt(2.0);
    const Vec2 target = *ext.object_positions[src_color] + Vec2{b, b};
    const Vec2 err = target - grip;
    const double dgrip = norm(err) <= config_.grip_trigger_distance ? -1.0 : 0.0;
    return Action{config_.gain * err.x, config_.gain * err.y, dgrip};
  }

  Vec2 dest;
  if (task.kind == TaskKind::stack) {
    const int dest_color = task.object_spec(*task.destination_object).color_id;
    if (!ext.object_positions[dest_color]) return Action{};
    dest = *ext.object_positions[dest_color];
  } else {
    dest = task.region->center;
  }
  const Vec2 err = dest - grip;
  const double dgrip = norm(err) <= config_.release_trigger_distance ? 1.0 : 0.0;
  return Action{config_.gain * err.x, config_.gain * err.y, dgrip};
}

Action ScriptedPolicy::propose(const PolicyQuery& query) const {
  const Action greedy = greedy_action(query.observation, query.task);
  if (query.temperature <= 0.0) return greedy;
  if (!query.rng) throw std::invalid_argument("sampling at temperature > 0 needs an rng stream");
  const double s = query.temperature * config_.noise_std_at_temp_1;
  const double nx = s * query.rng->normal();
  const double ny = s * query.rng->normal();
  const double ng = s / kMaxMove * query.rng->normal();
  return Action{greedy.dx() + nx, greedy.dy() + ny, greedy.dgrip() + ng};
}

StepOutcome greedy_rollout_baseline(std::uint64_t env_seed, const Task& task, int max_steps,
                                    const Policy& policy) {
  Episode ep(task, env_seed);
  for (int t = 0; t < max_steps && !ep.terminated(); ++t) {
    const Image obs = render(ep.state(), &task);
    ep.apply(policy.propose({obs, task, 0.0, nullptr}));
  }
  return ep.outcome();
}

}  // namespace rollplan
