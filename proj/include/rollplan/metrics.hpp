#pragma once

#include <cstdint>
#include <map>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "rollplan/dynamics.hpp"
#include "rollplan/planner.hpp"
#include "rollplan/provenance.hpp"
#include "rollplan/trainer.hpp"

namespace rollplan {

/// Count-based rate; value() is the only place a division happens.
struct Rate {
  std::int64_t hits = 0;
  std::int64_t total = 0;

  double value() const { return total == 0 ? 0.0 : static_cast<double>(hits) / static_cast<double>(total); }
  friend bool operator==(const Rate&, const Rate&) = default;
};

struct SuccessRates {
  Rate success;
  Rate partial;
};

/// Throws std::invalid_argument on an empty list.
SuccessRates success_rates(std::span<const EpisodeResult> episodes);

/// Mean pixel L1 between the h-step open-loop prediction (logged actions)
/// and the ground-truth frame, over every start index with room for h steps.
double rollout_error(const DynamicsModel& model, const std::vector<EpisodeTrace>& episodes, int horizon);

/// Mean L1 between predicted and true frame differences on one-step
/// transitions. A copier scores mean |I_{t+1} - I_t|.
double optical_flow_loss(const DynamicsModel& model, const std::vector<EpisodeTrace>& episodes);

struct ExtractionError {
  double mean_px = 0.0;           // over items found in both frames
  std::int64_t compared = 0;
  std::int64_t missing = 0;       // present in truth, absent in prediction
  double missing_fraction() const {
    const auto all = compared + missing;
    return all == 0 ? 0.0 : static_cast<double>(missing) / static_cast<double>(all);
  }
};

/// Position error (pixels) of gripper and task objects extracted from the
/// h-step prediction versus the ground-truth frame.
ExtractionError extraction_error(const DynamicsModel& model, const std::vector<EpisodeTrace>& episodes,
                                 const std::vector<Task>& tasks, int horizon);

struct ModelErrorRow {
  int horizon = 1;
  double l1 = 0.0;
  double ofl = 0.0;
  double extract_err = 0.0;
};

/// One row per horizon. The optical-flow analog is a one-step quantity and is
/// repeated on each row.
std::vector<ModelErrorRow> model_error_table(const DynamicsModel& model, const std::vector<EpisodeTrace>& episodes,
                                             const std::vector<Task>& tasks, const std::vector<int>& horizons);

struct TimingRow {
  int n = 1;
  int workers = 1;
  double median_ms = 0.0;
  double p90_ms = 0.0;
};

double median(std::vector<double> values);
double percentile(std::vector<double> values, double q);

/// Per-plan-step wall time for each (n, workers) pair, measured over
/// `steps_per_point` planning steps drawn from seeded scenes.
std::vector<TimingRow> timing_table(const std::vector<int>& ns, const std::vector<int>& workers,
                                    const std::vector<Task>& tasks, const Policy& policy,
                                    const PlanResources& resources, const PlannerConfig& base,
                                    int steps_per_point, std::uint64_t seed);

/// Env seed for benchmark episode `index` under root seed `root`.
std::uint64_t episode_seed(std::uint64_t root, int index);

/// Episode i runs tasks[i % size] from episode_seed(root_seed, i); the
/// planner's candidate streams use root_seed as well.
std::vector<EpisodeResult> benchmark_episodes(const std::vector<Task>& tasks, int episodes, std::uint64_t root_seed,
                                              const Policy& policy, const PlanResources& resources,
                                              PlannerConfig config, std::ostream* plan_log = nullptr);

/// Same episode list, executed by the unplanned temperature-0 policy.
std::vector<EpisodeResult> greedy_episodes(const std::vector<Task>& tasks, int episodes, std::uint64_t root_seed,
                                           const Policy& policy, int max_env_steps);

struct SuccessRow {
  std::string task;
  Backend backend = Backend::env_sim;
  int n = 1;
  int l = 1;
  std::uint64_t seed = 0;
  bool success = false;
  bool partial = false;
  int steps = 0;
  double plan_time_ms = 0.0;
};

SuccessRow to_row(const EpisodeResult& r, const PlannerConfig& cfg);

// CSV writers. The first line is a '#' provenance comment, the second the
// header row.
void write_success_csv(std::ostream& out, std::span<const SuccessRow> rows, const Provenance& prov);
void write_timing_csv(std::ostream& out, std::span<const TimingRow> rows, const Provenance& prov);
void write_model_csv(std::ostream& out, std::span<const ModelErrorRow> rows, const Provenance& prov);

std::string provenance_comment(const Provenance& prov);

struct BenchmarkReport {
  std::map<std::string, Rate> success_by_task;
  Rate overall_success;
  Rate overall_partial;
  std::vector<TimingRow> timing;
  std::vector<ModelErrorRow> model_errors;
  std::string config_echo;
  std::vector<std::uint64_t> seeds;
};

BenchmarkReport summarise(std::span<const SuccessRow> rows);

}  // namespace rollplan
