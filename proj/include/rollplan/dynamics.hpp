#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <vector>

#include "rollplan/mixer.hpp"
#include "rollplan/policy.hpp"
#include "rollplan/provenance.hpp"
#include "rollplan/raster.hpp"

namespace rollplan {

class CorruptModelError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Learned image-space transition model f(image, action) -> next image.
class DynamicsModel {
 public:
  explicit DynamicsModel(DynamicsConfig config = {}, std::uint64_t init_seed = 0);
  DynamicsModel(DynamicsConfig config, MixerParams<float> params);

  const DynamicsConfig& config() const { return config_; }
  const MixerParams<float>& params() const { return params_; }
  MixerParams<float>& params() { return params_; }
  std::size_t parameter_count() const { return params_.parameter_count(); }

 private:
  DynamicsConfig config_;
  MixerParams<float> params_;
};

/// One-step prediction, clamped to [0,1]. Throws CorruptModelError when a
/// parameter is not finite.
Image forward(const DynamicsModel& model, const Image& image, const Action& action);

struct RolloutStep {
  Action action;
  Image frame;
};

/// Temperature sampling for steps after the first (off by default: those
/// steps use the greedy action).
struct ResampleOptions {
  double temperature = 1.0;
  std::uint64_t stream_seed = 0;  // step t uses derive_seed({stream_seed, t})
};

std::vector<RolloutStep> rollout(const DynamicsModel& model, const Image& image0, const Policy& policy,
                                 const Task& task, int length, const Action& first_action,
                                 const std::optional<ResampleOptions>& resample = std::nullopt);

class WeightFileError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};
class WeightFormatError : public WeightFileError {
 public:
  using WeightFileError::WeightFileError;
};
class WeightShapeError : public WeightFileError {
 public:
  using WeightFileError::WeightFileError;
};
class WeightTruncatedError : public WeightFileError {
 public:
  using WeightFileError::WeightFileError;
};

inline constexpr std::uint32_t kWeightFormatVersion = 1;

void save_weights(const DynamicsModel& model, const std::filesystem::path& path,
                  const Provenance& provenance = {});
DynamicsModel load_weights(const std::filesystem::path& path, Provenance* provenance = nullptr);

}  // namespace rollplan
