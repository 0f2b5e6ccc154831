#pragma once

#include <json.hpp>

#include "fundascreen/image.hpp"
#include "fundascreen/rng.hpp"

namespace fundascreen::nn {

// Color and geometry jitter applied to training images, in this order:
// flips, brightness, saturation, hue, contrast.
struct AugmentRanges {
  bool flip_vertical = true;
  bool flip_horizontal = true;
  double brightness_max_delta = 0.1147528;
  double saturation_lo = 0.5597273;
  double saturation_hi = 1.2748845;
  double hue_max_delta = 0.0251488;
  double contrast_lo = 0.9996807;
  double contrast_hi = 1.7704824;

  // No-op ranges: no flips, zero deltas, unit factors.
  static AugmentRanges identity();
  bool operator==(const AugmentRanges&) const = default;
};

void to_json(nlohmann::json& j, const AugmentRanges& r);
void from_json(const nlohmann::json& j, AugmentRanges& r);

// Draws every random quantity regardless of the ranges so the stream
// consumption per image is fixed. Output is clamped to [0, 1].
RgbImage augment(const RgbImage& image, const AugmentRanges& ranges, Rng& rng);

RgbImage flip_horizontal(const RgbImage& image);
RgbImage flip_vertical(const RgbImage& image);

// Individual color operations (clamped to [0, 1]).
void adjust_brightness(RgbImage& image, double delta);
void adjust_saturation(RgbImage& image, double factor);  // scales S in HSV
void adjust_hue(RgbImage& image, double delta);          // shifts H, in turns, wrapped
void adjust_contrast(RgbImage& image, double factor);    // about each channel's mean

}  // namespace fundascreen::nn
