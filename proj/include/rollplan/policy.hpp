#pragma once

#include <cstdint>

#include "rollplan/raster.hpp"
#include "rollplan/rng.hpp"
#include "rollplan/scene.hpp"

namespace rollplan {

struct PolicyQuery {
  const Image& observation;
  const Task& task;
  double temperature = 0.0;
  RngStream* rng = nullptr;  // may be null only when temperature == 0
};

/// Base policy: observation + instruction -> action. Implementations must be
/// deterministic given the query (including the rng stream state).
class Policy {
 public:
  virtual ~Policy() = default;
  virtual Action propose(const PolicyQuery& query) const = 0;
};

struct PolicyConfig {
  double gain = 0.6;
  double noise_std_at_temp_1 = 0.05;
  double approach_bias = 0.06;
  double grip_trigger_distance = 0.05;
  double release_trigger_distance = 0.04;

  void validate() const;
};

/// Two-phase reach/carry controller reading positions from the extracted
/// observation. The approach bias is a fixed workspace-frame offset on the
/// grasp target.
class ScriptedPolicy final : public Policy {
 public:
  explicit ScriptedPolicy(PolicyConfig config = {});

  Action propose(const PolicyQuery& query) const override;
  /// Noise-free controller output.
  Action greedy_action(const Image& observation, const Task& task) const;

  const PolicyConfig& config() const { return config_; }

 private:
  PolicyConfig config_;
};

/// Temperature-0 policy executed in the real environment until termination.
StepOutcome greedy_rollout_baseline(std::uint64_t env_seed, const Task& task, int max_steps,
                                    const Policy& policy);

}  // namespace rollplan
