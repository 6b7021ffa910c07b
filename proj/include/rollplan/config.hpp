#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "rollplan/dynamics.hpp"
#include "rollplan/planner.hpp"
#include "rollplan/policy.hpp"
#include "rollplan/provenance.hpp"
#include "rollplan/reward.hpp"
#include "rollplan/trainer.hpp"

namespace rollplan {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ExperimentConfig {
  PolicyConfig policy;
  DynamicsConfig dynamics;
  TrainConfig train;
  RewardConfig reward;
  PlannerConfig planner;

  std::vector<std::string> tasks = {"carrot_on_plate", "spoon_on_cloth", "stack_blocks", "eggplant_in_basket"};
  int episodes = 200;                     // planner benchmark episodes per seed
  std::vector<std::uint64_t> seeds = {0};  // root seeds for run / bench-time
  int collect_episodes = 500;
  double expert_temperature = 0.2;
  std::uint64_t collect_seed = 0;
  std::string output_dir = "out";

  /// Checks every section and that task names resolve. Throws ConfigError.
  void validate() const;

  std::vector<Task> task_templates() const;
};

/// Parses the sectioned key = value format. Unknown sections or keys,
/// malformed values and failed validation all raise ConfigError.
ExperimentConfig parse_config(const std::string& text);
ExperimentConfig load_config(const std::filesystem::path& path);

/// Canonical text: every key, fixed order, shortest round-trip numbers.
std::string serialise_config(const ExperimentConfig& config);

/// Hash of the canonical text.
std::uint64_t config_hash(const ExperimentConfig& config);

}  // namespace rollplan
