#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "rollplan/dynamics.hpp"
#include "rollplan/policy.hpp"
#include "rollplan/provenance.hpp"
#include "rollplan/raster.hpp"

namespace rollplan {

// ---------------------------------------------------------------------------
// Dataset

struct TransitionRecord {
  ImageBytes image{};
  std::array<float, 3> action{};
  ImageBytes next_image{};
  std::uint32_t episode_id = 0;
  std::uint16_t step_index = 0;
  bool episode_success = false;

  Action to_action() const { return Action{action[0], action[1], action[2]}; }
  friend bool operator==(const TransitionRecord&, const TransitionRecord&) = default;
};

struct Dataset {
  std::vector<TransitionRecord> records;
  Provenance provenance;
};

class DatasetError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};
class DatasetTruncatedError : public DatasetError {
 public:
  using DatasetError::DatasetError;
};

inline constexpr std::uint32_t kDatasetFormatVersion = 1;
inline constexpr std::size_t kRecordBytes = 2 * kNumPixels + 3 * 4 + 4 + 2 + 1 + 1;

void save_dataset(const Dataset& dataset, const std::filesystem::path& path);
Dataset load_dataset(const std::filesystem::path& path);

struct CollectStats {
  int episodes = 0;
  int successful_episodes = 0;
  std::size_t transitions = 0;
};

/// Runs the policy at `expert_temperature` over seeded episodes, cycling
/// through the task templates, and logs every transition.
Dataset collect_dataset(int num_episodes, const std::vector<Task>& tasks, const Policy& policy,
                        double expert_temperature, std::uint64_t seed, CollectStats* stats = nullptr);

/// One logged episode as consecutive frames and the actions between them.
struct EpisodeTrace {
  std::uint32_t episode_id = 0;
  bool success = false;
  std::vector<Image> frames;    // length = actions.size() + 1
  std::vector<Action> actions;
};

/// Groups records into episodes (ordered by episode_id). Failed episodes
/// are dropped unless include_failures is set.
std::vector<EpisodeTrace> episodes_from(const Dataset& dataset, bool include_failures = false);

struct EpisodeSplit {
  std::vector<EpisodeTrace> train;
  std::vector<EpisodeTrace> heldout;
};

/// Last 10% of episodes by id are held out (at least one when possible).
EpisodeSplit split_heldout(std::vector<EpisodeTrace> episodes, double heldout_fraction = 0.1);

// ---------------------------------------------------------------------------
// Loss

struct LossParts {
  double total = 0.0;
  double l1 = 0.0;
  double gdl = 0.0;
};

/// L1 plus gradient-difference loss over image-layout buffers. When `grad`
/// is non-empty it receives scale * dL/dpredicted (overwritten).
template <typename T>
LossParts image_loss(std::span<const T> predicted, std::span<const T> target, double lambda_gdl,
                     std::span<T> grad = {}, double scale = 1.0);

LossParts loss(const Image& predicted, const Image& target, double lambda_gdl = 1.0);

// ---------------------------------------------------------------------------
// Optimiser

template <typename T>
class Adam {
 public:
  struct Options {
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
  };

  Adam(std::size_t num_params, Options opt) : opt_(opt), m_(num_params, 0.0), v_(num_params, 0.0) {}

  /// params and grads are the flattened parameter/gradient tensors in the
  /// same order each call.
  void step(std::span<const std::span<T>> params, std::span<const std::span<T>> grads) {
    ++t_;
    const double bc1 = 1.0 - std::pow(opt_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(opt_.beta2, static_cast<double>(t_));
    std::size_t k = 0;
    for (std::size_t ti = 0; ti < params.size(); ++ti) {
      auto p = params[ti];
      auto g = grads[ti];
      for (std::size_t i = 0; i < p.size(); ++i, ++k) {
        const double gi = static_cast<double>(g[i]);
        m_[k] = opt_.beta1 * m_[k] + (1.0 - opt_.beta1) * gi;
        v_[k] = opt_.beta2 * v_[k] + (1.0 - opt_.beta2) * gi * gi;
        const double mhat = m_[k] / bc1;
        const double vhat = v_[k] / bc2;
        p[i] = static_cast<T>(static_cast<double>(p[i]) - opt_.learning_rate * mhat / (std::sqrt(vhat) + opt_.eps));
      }
    }
  }

  long steps() const { return t_; }

 private:
  Options opt_;
  std::vector<double> m_, v_;
  long t_ = 0;
};

// ---------------------------------------------------------------------------
// Training

struct TrainConfig {
  int batch_size = 64;
  double learning_rate = 1e-3;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  double lambda_gdl = 1.0;
  int phase1_epochs = 100;
  int phase2_epochs = 20;
  std::vector<int> l_train_schedule = {2, 4, 8};
  std::uint64_t seed = 0;

  void validate() const;
};

class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};
class InsufficientEpisodeLengthError : public TrainingError {
 public:
  using TrainingError::TrainingError;
};

struct EpochLog {
  int epoch = 0;
  int horizon = 1;  // l_train; 1 for teacher-forced phase 1
  double mean_loss = 0.0;
  double mean_l1 = 0.0;
  std::vector<double> per_step_loss;  // mean loss by step index within windows
};

using EpochCallback = std::function<void(const EpochLog&)>;

/// One multi-step window: start frame, the logged actions, and the
/// ground-truth frames they produced.
struct Window {
  const EpisodeTrace* episode = nullptr;
  int start = 0;
  int length = 1;
};

/// Gradient of the mean window loss, with the model's own clamped prediction
/// fed forward between steps and no gradient across steps. Returns the
/// per-step mean loss parts. `grads` is accumulated into (not cleared).
template <typename T>
std::vector<LossParts> window_gradients(const DynamicsConfig& cfg, const MixerParams<T>& params,
                                        std::span<const Window> windows, double lambda_gdl,
                                        MixerParams<T>& grads);

/// Teacher-forced one-step training. Returns per-epoch logs.
std::vector<EpochLog> train_phase1(DynamicsModel& model, const std::vector<EpisodeTrace>& episodes,
                                   const TrainConfig& config, const EpochCallback& on_epoch = {});

/// Multi-step adaptation on the model's own predictions over the l_train
/// schedule (epochs split evenly across horizons).
std::vector<EpochLog> train_phase2_dagger(DynamicsModel& model, const std::vector<EpisodeTrace>& episodes,
                                          const TrainConfig& config, const EpochCallback& on_epoch = {});

}  // namespace rollplan
