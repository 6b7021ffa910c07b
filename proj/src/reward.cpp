#include "rollplan/reward.hpp"

#include <stdexcept>
#include <vector>

namespace rollplan {

namespace {

struct StagedInputs {
  Vec2 gripper;
  Vec2 source;
  Vec2 destination;
  bool holding = false;
  bool success = false;
};

double staged(const StagedInputs& in, const RewardConfig& cfg) {
  if (in.success) return cfg.success_bonus;
  const double dest_term = cfg.w_dest * distance(in.source, in.destination);
  if (in.holding) return cfg.grasp_bonus - dest_term;
  return -cfg.w_gap * distance(in.gripper, in.source) - dest_term;
}

}  // namespace

void RewardConfig::validate() const {
  if (w_gap < 0 || w_dest < 0 || grasp_bonus < 0 || success_bonus < 0) {
    throw std::invalid_argument("reward weights must be non-negative");
  }
  if (min_confidence < 0 || min_confidence > 1) throw std::invalid_argument("min_confidence must lie in [0,1]");
}

double score(const WorldState& state, const Task& task, const RewardConfig& cfg) {
  const SceneObject* src = state.find(task.source_object);
  const auto dest = destination_point(state, task);
  if (!src || !dest) return kRewardSentinel;
  StagedInputs in;
  in.gripper = state.gripper_pos;
  in.source = src->pos;
  in.destination = *dest;
  in.holding = state.held && *state.held == task.source_object;
  in.success = is_success(state, task);
  return staged(in, cfg);
}

double score(const Image& frame, const Task& task, const RewardConfig& cfg) {
  std::vector<int> colors;
  for (const auto& s : task.objects) colors.push_back(s.color_id);
  const ExtractedState ext = extract(frame, colors);
  if (ext.confidence < cfg.min_confidence || !ext.gripper_pos) return kRewardSentinel;

  const int src_color = task.object_spec(task.source_object).color_id;
  if (!ext.object_positions[src_color]) return kRewardSentinel;

  StagedInputs in;
  in.gripper = *ext.gripper_pos;
  in.source = *ext.object_positions[src_color];
  in.holding = ext.held_color && *ext.held_color == src_color;
  if (task.kind == TaskKind::stack) {
    const int dest_color = task.object_spec(*task.destination_object).color_id;
    if (!ext.object_positions[dest_color]) return kRewardSentinel;
    in.destination = *ext.object_positions[dest_color];
    in.success = !in.holding && distance(in.source, in.destination) <= task.success_radius;
  } else {
    in.destination = task.region->center;
    in.success = !in.holding && task.region->contains(in.source);
  }
  return staged(in, cfg);
}

std::size_t rank(std::span<const double> rewards) {
  if (rewards.empty()) throw std::invalid_argument("rank needs at least one candidate");
  std::size_t best = 0;
  for (std::size_t i = 1; i < rewards.size(); ++i) {
    if (rewards[i] > rewards[best]) best = i;
  }
  return best;
}

}  // namespace rollplan
