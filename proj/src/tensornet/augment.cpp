#include "fundascreen/tensornet/augment.hpp"

#include <algorithm>
#include <cmath>

#include "fundascreen/error.hpp"

namespace fundascreen::nn {

AugmentRanges AugmentRanges::identity() {
  AugmentRanges r;
  r.flip_vertical = r.flip_horizontal = false;
  r.brightness_max_delta = 0.0;
  r.saturation_lo = r.saturation_hi = 1.0;
  r.hue_max_delta = 0.0;
  r.contrast_lo = r.contrast_hi = 1.0;
  return r;
}

#define FUNDASCREEN_AUGMENT_FIELDS(X)                                                                    \
  X(flip_vertical) X(flip_horizontal) X(brightness_max_delta) X(saturation_lo) X(saturation_hi)      \
      X(hue_max_delta) X(contrast_lo) X(contrast_hi)

void to_json(nlohmann::json& j, const AugmentRanges& r) {
  j = nlohmann::json::object();
#define X(name) j[#name] = r.name;
  FUNDASCREEN_AUGMENT_FIELDS(X)
#undef X
}

void from_json(const nlohmann::json& j, AugmentRanges& r) {
  if (!j.is_object()) fail(ErrorCode::config, "augmentation ranges must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    bool known = false;
#define X(name)                \
  if (key == #name) {          \
    known = true;              \
    value.get_to(r.name);      \
  }
    FUNDASCREEN_AUGMENT_FIELDS(X)
#undef X
    if (!known) fail(ErrorCode::config, "augmentation: unknown key '" + key + "'");
  }
}

namespace {

void clamp01(RgbImage& image) {
  for (double& v : image.rgb) v = std::clamp(v, 0.0, 1.0);
}

void rgb_to_hsv(double r, double g, double b, double& h, double& s, double& v) {
  const double mx = std::max({r, g, b});
  const double mn = std::min({r, g, b});
  const double range = mx - mn;
  v = mx;
  s = mx > 0.0 ? range / mx : 0.0;
  if (range <= 0.0) {
    h = 0.0;
    return;
  }
  double hh;
  if (mx == r) {
    hh = (g - b) / range;
  } else if (mx == g) {
    hh = 2.0 + (b - r) / range;
  } else {
    hh = 4.0 + (r - g) / range;
  }
  hh /= 6.0;
  if (hh < 0.0) hh += 1.0;
  h = hh;
}

void hsv_to_rgb(double h, double s, double v, double& r, double& g, double& b) {
  const double hh = (h - std::floor(h)) * 6.0;
  const int sector = static_cast<int>(hh) % 6;
  const double f = hh - std::floor(hh);
  const double p = v * (1.0 - s);
  const double q = v * (1.0 - s * f);
  const double t = v * (1.0 - s * (1.0 - f));
  switch (sector) {
    case 0: r = v, g = t, b = p; break;
    case 1: r = q, g = v, b = p; break;
    case 2: r = p, g = v, b = t; break;
    case 3: r = p, g = q, b = v; break;
    case 4: r = t, g = p, b = v; break;
    default: r = v, g = p, b = q; break;
  }
}

template <typename Fn>
void map_hsv(RgbImage& image, Fn&& fn) {
  for (std::size_t i = 0; i + 2 < image.rgb.size(); i += 3) {
    double h, s, v;
    rgb_to_hsv(image.rgb[i], image.rgb[i + 1], image.rgb[i + 2], h, s, v);
    if (s <= 0.0) continue;  // gray pixels carry no hue or saturation
    fn(h, s);
    hsv_to_rgb(h, s, v, image.rgb[i], image.rgb[i + 1], image.rgb[i + 2]);
  }
}

}  // namespace

RgbImage flip_horizontal(const RgbImage& image) {
  RgbImage out(image.side);
  const int n = image.side;
  for (int y = 0; y < n; ++y)
    for (int x = 0; x < n; ++x)
      for (int c = 0; c < 3; ++c) out.at(y, x, c) = image.at(y, n - 1 - x, c);
  return out;
}

RgbImage flip_vertical(const RgbImage& image) {
  RgbImage out(image.side);
  const int n = image.side;
  for (int y = 0; y < n; ++y)
    for (int x = 0; x < n; ++x)
      for (int c = 0; c < 3; ++c) out.at(y, x, c) = image.at(n - 1 - y, x, c);
  return out;
}

void adjust_brightness(RgbImage& image, double delta) {
  for (double& v : image.rgb) v += delta;
  clamp01(image);
}

void adjust_saturation(RgbImage& image, double factor) {
  map_hsv(image, [factor](double&, double& s) { s = std::clamp(s * factor, 0.0, 1.0); });
}

void adjust_hue(RgbImage& image, double delta) {
  map_hsv(image, [delta](double& h, double&) {
    h += delta;
    h -= std::floor(h);
  });
}

void adjust_contrast(RgbImage& image, double factor) {
  const std::size_t pixels = image.rgb.size() / 3;
  if (pixels == 0) return;
  for (int c = 0; c < 3; ++c) {
    double mean = 0.0;
    for (std::size_t i = 0; i < pixels; ++i) mean += image.rgb[i * 3 + c];
    mean /= static_cast<double>(pixels);
    for (std::size_t i = 0; i < pixels; ++i) {
      double& v = image.rgb[i * 3 + c];
      v = (v - mean) * factor + mean;
    }
  }
  clamp01(image);
}

RgbImage augment(const RgbImage& image, const AugmentRanges& r, Rng& rng) {
  const bool flip_v = rng.bernoulli(0.5);
  const bool flip_h = rng.bernoulli(0.5);
  const double brightness = rng.uniform(-r.brightness_max_delta, r.brightness_max_delta);
  const double saturation = rng.uniform(r.saturation_lo, r.saturation_hi);
  const double hue = rng.uniform(-r.hue_max_delta, r.hue_max_delta);
  const double contrast = rng.uniform(r.contrast_lo, r.contrast_hi);

  RgbImage out = image;
  if (r.flip_vertical && flip_v) out = flip_vertical(out);
  if (r.flip_horizontal && flip_h) out = flip_horizontal(out);
  if (brightness != 0.0) adjust_brightness(out, brightness);
  if (saturation != 1.0) adjust_saturation(out, saturation);
  if (hue != 0.0) adjust_hue(out, hue);
  if (contrast != 1.0) adjust_contrast(out, contrast);
  clamp01(out);
  return out;
}

}  // namespace fundascreen::nn
