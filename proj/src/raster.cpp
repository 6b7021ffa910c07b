#include "rollplan/raster.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace rollplan {

namespace {

// Gripper pixels are the only ones whose darkest channel rises above the
// background level. The mask threshold sits halfway between background and
// the brightest such pixel, which is exact on rendered frames and tolerates
// the softened squares a learned model predicts.
constexpr float kGripperPeakMin = 0.38f;
constexpr float kColorThreshold = 0.5f;
constexpr double kHeldPixels = 1.5;

double pixel_center(int idx) { return (idx + 0.5) * kPixelPitch; }

void set_rgb(Image& img, int row, int col, float r, float g, float b) {
  img.at(row, col, 0) = r;
  img.at(row, col, 1) = g;
  img.at(row, col, 2) = b;
}

void draw_outline(Image& img, const Region& region) {
  const double band = 0.5 * kPixelPitch;
  for (int row = 0; row < kImageSize; ++row) {
    for (int col = 0; col < kImageSize; ++col) {
      const Vec2 p{pixel_center(col), pixel_center(row)};
      double edge;
      if (region.shape == RegionShape::square) {
        edge = std::max(std::abs(p.x - region.center.x), std::abs(p.y - region.center.y));
      } else {
        edge = distance(p, region.center);
      }
      if (std::abs(edge - region.radius) <= band) set_rgb(img, row, col, kOutline, kOutline, kOutline);
    }
  }
}

void draw_disc(Image& img, const SceneObject& obj) {
  float rgb[3] = {0.f, 0.f, 0.f};
  rgb[obj.color_id] = 1.f;
  const int lo_r = pixel_index(obj.pos.y - obj.radius), hi_r = pixel_index(obj.pos.y + obj.radius);
  const int lo_c = pixel_index(obj.pos.x - obj.radius), hi_c = pixel_index(obj.pos.x + obj.radius);
  for (int row = lo_r; row <= hi_r; ++row) {
    for (int col = lo_c; col <= hi_c; ++col) {
      if (distance({pixel_center(col), pixel_center(row)}, obj.pos) <= obj.radius) {
        set_rgb(img, row, col, rgb[0], rgb[1], rgb[2]);
      }
    }
  }
}

struct MaskAccumulator {
  double sum_row = 0.0;
  double sum_col = 0.0;
  double sum_value = 0.0;
  int count = 0;

  void add(int row, int col, double value) {
    sum_row += row + 0.5;
    sum_col += col + 0.5;
    sum_value += value;
    ++count;
  }
  Vec2 centroid() const { return {sum_col / count * kPixelPitch, sum_row / count * kPixelPitch}; }
};

}  // namespace

Image Image::filled(float value) {
  Image img;
  img.px.fill(value);
  return img;
}

ImageBytes to_bytes(const Image& image) {
  ImageBytes out;
  for (int i = 0; i < kNumPixels; ++i) {
    out[i] = static_cast<std::uint8_t>(std::lround(std::clamp(image.px[i], 0.f, 1.f) * 255.f));
  }
  return out;
}

Image from_bytes(std::span<const std::uint8_t, kNumPixels> bytes) {
  Image img;
  for (int i = 0; i < kNumPixels; ++i) img.px[i] = static_cast<float>(bytes[i]) / 255.f;
  return img;
}

int pixel_index(double coord) {
  return std::clamp(static_cast<int>(std::floor(coord * kImageSize)), 0, kImageSize - 1);
}

Image render(const WorldState& state, const Task* task) {
  Image img = Image::filled(kBackground);
  if (task && task->region) draw_outline(img, *task->region);

  // Earlier objects end up on top; the held object is always topmost.
  for (auto it = state.objects.rbegin(); it != state.objects.rend(); ++it) {
    if (!state.held || *state.held != it->id) draw_disc(img, *it);
  }
  if (state.held) {
    if (const SceneObject* held = state.find(*state.held)) draw_disc(img, *held);
  }

  const float bright = static_cast<float>(0.5 + 0.5 * std::clamp(state.aperture, 0.0, 1.0));
  const int gr = pixel_index(state.gripper_pos.y);
  const int gc = pixel_index(state.gripper_pos.x);
  for (int row = std::max(gr - 1, 0); row <= std::min(gr + 1, kImageSize - 1); ++row) {
    for (int col = std::max(gc - 1, 0); col <= std::min(gc + 1, kImageSize - 1); ++col) {
      set_rgb(img, row, col, bright, bright, bright);
    }
  }
  return img;
}

ExtractedState extract(const Image& image) {
  static constexpr int kAll[] = {0, 1, 2};
  return extract(image, kAll);
}

ExtractedState extract(const Image& image, std::span<const int> expected_colors) {
  MaskAccumulator gripper;
  std::array<MaskAccumulator, kChannels> colors;

  float peak = 0.0f;
  for (int i = 0; i < kNumPixels; i += kChannels) {
    peak = std::max(peak, std::min({image.px[i], image.px[i + 1], image.px[i + 2]}));
  }
  const float grip_cut =
      peak >= kGripperPeakMin ? 0.5f * (kBackground + peak) : std::numeric_limits<float>::infinity();

  for (int row = 0; row < kImageSize; ++row) {
    for (int col = 0; col < kImageSize; ++col) {
      const float r = image.at(row, col, 0), g = image.at(row, col, 1), b = image.at(row, col, 2);
      const float lo = std::min({r, g, b});
      if (!(lo >= grip_cut)) {
        const float ch[3] = {r, g, b};
        for (int c = 0; c < kChannels; ++c) {
          const bool others_low = ch[(c + 1) % 3] < kColorThreshold && ch[(c + 2) % 3] < kColorThreshold;
          if (ch[c] >= kColorThreshold && others_low) colors[c].add(row, col, ch[c]);
        }
      } else {
        gripper.add(row, col, (r + g + b) / 3.0);
      }
    }
  }

  ExtractedState out;
  int found = 0;
  int expected = 1;
  if (gripper.count > 0) {
    out.gripper_pos = gripper.centroid();
    const double mean = gripper.sum_value / gripper.count;
    out.aperture_estimate = std::clamp((mean - 0.5) / 0.5, 0.0, 1.0);
    ++found;
  }
  for (int c = 0; c < kChannels; ++c) {
    if (colors[c].count > 0) out.object_positions[c] = colors[c].centroid();
  }
  for (int c : expected_colors) {
    if (c < 0 || c >= kChannels) continue;
    ++expected;
    if (out.object_positions[c]) ++found;
  }
  out.confidence = static_cast<double>(found) / expected;

  if (out.gripper_pos && out.aperture_estimate < 0.5) {
    double best = std::numeric_limits<double>::infinity();
    for (int c = 0; c < kChannels; ++c) {
      if (!out.object_positions[c]) continue;
      const double d = distance(*out.object_positions[c], *out.gripper_pos) / kPixelPitch;
      if (d <= kHeldPixels && d < best) {
        best = d;
        out.held_color = c;
      }
    }
  }
  return out;
}

}  // namespace rollplan
