#pragma once

#include <span>

#include "rollplan/raster.hpp"
#include "rollplan/scene.hpp"

namespace rollplan {

inline constexpr double kRewardSentinel = -1e9;

struct RewardConfig {
  double w_gap = 1.0;
  double w_dest = 1.0;
  double grasp_bonus = 2.0;
  double success_bonus = 10.0;
  double min_confidence = 0.5;

  void validate() const;
};

/// Staged reward on the ground-truth state: success, then holding, then reaching.
double score(const WorldState& state, const Task& task, const RewardConfig& cfg = {});

/// Same staging on the state extracted from a frame. Frames whose extraction
/// confidence is below cfg.min_confidence score kRewardSentinel.
double score(const Image& frame, const Task& task, const RewardConfig& cfg = {});

/// Argmax with ties resolved to the lowest index. Throws std::invalid_argument
/// on an empty list.
std::size_t rank(std::span<const double> rewards);

}  // namespace rollplan
