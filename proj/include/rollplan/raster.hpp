#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>

#include "rollplan/scene.hpp"

namespace rollplan {

inline constexpr int kImageSize = 32;
inline constexpr int kChannels = 3;
inline constexpr int kNumPixels = kImageSize * kImageSize * kChannels;
inline constexpr double kPixelPitch = 1.0 / kImageSize;

inline constexpr float kBackground = 0.3f;
inline constexpr float kOutline = 0.18f;

/// 32x32 RGB observation, row-major with interleaved channels. Row r covers
/// workspace y in [r/32, (r+1)/32); column c covers x likewise.
struct Image {
  std::array<float, kNumPixels> px{};

  float& at(int row, int col, int ch) { return px[(row * kImageSize + col) * kChannels + ch]; }
  float at(int row, int col, int ch) const {
    return px[(row * kImageSize + col) * kChannels + ch];
  }

  static Image filled(float value);

  friend bool operator==(const Image&, const Image&) = default;
};

using ImageBytes = std::array<std::uint8_t, kNumPixels>;

ImageBytes to_bytes(const Image& image);
Image from_bytes(std::span<const std::uint8_t, kNumPixels> bytes);

/// Rendering with the task's destination region outlined, if it has one.
Image render(const WorldState& state, const Task* task = nullptr);

struct ExtractedState {
  std::optional<Vec2> gripper_pos;
  double aperture_estimate = 0.0;
  std::array<std::optional<Vec2>, kChannels> object_positions;  // by color_id
  std::optional<int> held_color;
  double confidence = 0.0;
};

/// Colour-mask extraction. Confidence is the fraction of expected masks
/// (the gripper plus each expected color) that are present.
ExtractedState extract(const Image& image);
ExtractedState extract(const Image& image, std::span<const int> expected_colors);

/// Pixel index of a workspace coordinate, clamped to the image.
int pixel_index(double coord);

}  // namespace rollplan
