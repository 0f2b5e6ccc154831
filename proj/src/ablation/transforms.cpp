#include <algorithm>
#include <cmath>
#include <cstdio>
#include <memory>

#include "fundascreen/ablation.hpp"
#include "fundascreen/csv.hpp"
#include "fundascreen/error.hpp"
#include "fundascreen/rng.hpp"

namespace fundascreen::ablation {

using nlohmann::json;

std::string_view to_string(Kind k) {
  switch (k) {
    case Kind::none: return "none";
    case Kind::top_bottom: return "top_bottom";
    case Kind::center_stripe: return "center_stripe";
    case Kind::outer_rim: return "outer_rim";
    case Kind::central_core: return "central_core";
    case Kind::gaussian_blur: return "gaussian_blur";
  }
  return "?";
}

Kind parse_kind(std::string_view text) {
  for (Kind k : {Kind::none, Kind::top_bottom, Kind::center_stripe, Kind::outer_rim, Kind::central_core,
                 Kind::gaussian_blur}) {
    if (text == to_string(k)) return k;
  }
  fail(ErrorCode::config, "unknown ablation kind '" + std::string(text) + "'");
}

bool is_mask(Kind k) { return k != Kind::none && k != Kind::gaussian_blur; }

AblationSpec AblationSpec::mask(Kind kind, double fraction) {
  AblationSpec s{kind, fraction, std::nullopt};
  s.validate();
  return s;
}

AblationSpec AblationSpec::blur(double sigma) {
  AblationSpec s{Kind::gaussian_blur, std::nullopt, sigma};
  s.validate();
  return s;
}

void AblationSpec::validate() const {
  const std::string name(to_string(kind));
  if (kind == Kind::none) {
    if (fraction || sigma) fail(ErrorCode::config, "ablation 'none' takes neither fraction nor sigma");
  } else if (kind == Kind::gaussian_blur) {
    if (fraction || !sigma) fail(ErrorCode::config, "gaussian_blur needs sigma and no fraction");
    if (!(std::isfinite(*sigma) && *sigma >= 0.0)) fail(ErrorCode::config, "blur sigma must be finite and >= 0");
  } else {
    if (sigma || !fraction) fail(ErrorCode::config, name + " needs fraction and no sigma");
    if (!(*fraction >= 0.0 && *fraction < 1.0)) {
      fail(ErrorCode::invalid_argument, name + " fraction " + csv::format_double(*fraction) + " outside [0, 1)");
    }
  }
}

double AblationSpec::parameter() const { return fraction ? *fraction : sigma ? *sigma : 0.0; }

std::string AblationSpec::label() const {
  if (kind == Kind::none) return "none";
  return std::string(to_string(kind)) + ":" + csv::format_double(parameter());
}

std::string AblationSpec::hash() const {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(derive_seed(0, label())));
  return buf;
}

void to_json(json& j, const AblationSpec& s) {
  j = json{{"kind", std::string(to_string(s.kind))}};
  if (s.fraction) j["fraction"] = *s.fraction;
  if (s.sigma) j["sigma"] = *s.sigma;
}

void from_json(const json& j, AblationSpec& s) {
  for (const auto& [key, value] : j.items()) {
    if (key != "kind" && key != "fraction" && key != "sigma") fail(ErrorCode::config, "unknown ablation key '" + key + "'");
  }
  s = AblationSpec{};
  s.kind = parse_kind(j.at("kind").get<std::string>());
  if (j.contains("fraction")) s.fraction = j.at("fraction").get<double>();
  if (j.contains("sigma")) s.sigma = j.at("sigma").get<double>();
  s.validate();
}

namespace {

// Squared distance of pixel centre (x, y) from the image centre, times 4, as
// an exact integer.
long long centre_key(int x, int y, int side) {
  const long long dx = 2LL * x + 1 - side;
  const long long dy = 2LL * y + 1 - side;
  return dx * dx + dy * dy;
}

// Largest key level L such that the count of pixels with key <= L is as
// close as possible to `inside`; -1 selects no pixels.
long long circle_level(int side, long long inside) {
  std::vector<long long> keys;
  keys.reserve(static_cast<std::size_t>(side) * side);
  for (int y = 0; y < side; ++y) {
    for (int x = 0; x < side; ++x) keys.push_back(centre_key(x, y, side));
  }
  std::sort(keys.begin(), keys.end());
  long long best_level = -1;
  long long best_gap = inside;
  for (std::size_t i = 0; i < keys.size(); ++i) {
    if (i + 1 < keys.size() && keys[i + 1] == keys[i]) continue;
    const auto count = static_cast<long long>(i + 1);
    const long long gap = std::llabs(count - inside);
    if (gap < best_gap) {
      best_gap = gap;
      best_level = keys[i];
    }
  }
  return best_level;
}

long long circle_inside_target(const AblationSpec& spec, int side) {
  const long long area = static_cast<long long>(side) * side;
  const auto masked = static_cast<long long>(std::llround(*spec.fraction * static_cast<double>(area)));
  return spec.kind == Kind::central_core ? masked : area - masked;
}

}  // namespace

double circle_radius(const AblationSpec& spec, int side) {
  spec.validate();
  if (spec.kind != Kind::central_core && spec.kind != Kind::outer_rim) {
    fail(ErrorCode::invalid_argument, "circle_radius needs a circular mask kind");
  }
  const long long level = circle_level(side, circle_inside_target(spec, side));
  return level < 0 ? 0.0 : std::sqrt(static_cast<double>(level)) / 2.0;
}

std::vector<std::uint8_t> mask_pixels(const AblationSpec& spec, int side) {
  spec.validate();
  if (side <= 0) fail(ErrorCode::invalid_argument, "mask side must be positive");
  const auto n = static_cast<std::size_t>(side);
  std::vector<std::uint8_t> mask(n * n, 0);
  if (!is_mask(spec.kind)) return mask;
  const double f = *spec.fraction;

  const auto fill_rows = [&](int from, int to) {
    for (int y = std::max(from, 0); y < std::min(to, side); ++y) {
      std::fill_n(mask.begin() + static_cast<std::ptrdiff_t>(y) * side, side, 1);
    }
  };
  switch (spec.kind) {
    case Kind::top_bottom: {
      const int total = static_cast<int>(std::lround(f * side));
      const int top = total / 2;
      fill_rows(0, top);
      fill_rows(side - (total - top), side);
      break;
    }
    case Kind::center_stripe: {
      const int height = static_cast<int>(std::lround(f * side));
      const int start = (side - height) / 2;
      fill_rows(start, start + height);
      break;
    }
    case Kind::central_core:
    case Kind::outer_rim: {
      const long long level = circle_level(side, circle_inside_target(spec, side));
      const bool core = spec.kind == Kind::central_core;
      for (int y = 0; y < side; ++y) {
        for (int x = 0; x < side; ++x) {
          const bool inside = centre_key(x, y, side) <= level;
          mask[static_cast<std::size_t>(y) * n + static_cast<std::size_t>(x)] = inside == core ? 1 : 0;
        }
      }
      break;
    }
    default: break;
  }
  return mask;
}

namespace {

RgbImage apply_mask(const RgbImage& image, const std::vector<std::uint8_t>& mask) {
  RgbImage out = image;
  for (std::size_t p = 0; p < mask.size(); ++p) {
    if (mask[p] == 0) continue;
    for (int c = 0; c < 3; ++c) out.rgb[p * 3 + static_cast<std::size_t>(c)] = kMaskFill;
  }
  return out;
}

}  // namespace

RgbImage mask_image(const RgbImage& image, const AblationSpec& spec) {
  if (spec.kind == Kind::gaussian_blur) fail(ErrorCode::invalid_argument, "mask_image called with a blur spec");
  if (image.side <= 0) fail(ErrorCode::invalid_argument, "mask_image needs a non-empty square image");
  return apply_mask(image, mask_pixels(spec, image.side));
}

std::vector<double> gaussian_kernel(double sigma_px) {
  if (!(sigma_px > 0.0)) return {1.0};
  const int radius = static_cast<int>(std::ceil(3.0 * sigma_px));
  std::vector<double> k(static_cast<std::size_t>(2 * radius + 1));
  double sum = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    const double w = std::exp(-0.5 * (i * i) / (sigma_px * sigma_px));
    k[static_cast<std::size_t>(i + radius)] = w;
    sum += w;
  }
  for (double& w : k) w /= sum;
  return k;
}

RgbImage blur_image(const RgbImage& image, double sigma_ref) {
  if (!(std::isfinite(sigma_ref) && sigma_ref >= 0.0)) fail(ErrorCode::invalid_argument, "blur sigma must be >= 0");
  const int side = image.side;
  const double sigma_px = sigma_ref * side / kReferenceSide;
  if (!(sigma_px > 0.0)) return image;
  const auto kernel = gaussian_kernel(sigma_px);
  const int radius = static_cast<int>(kernel.size() / 2);
  const auto clamp = [side](int v) { return std::clamp(v, 0, side - 1); };

  RgbImage tmp = image;
  RgbImage out = image;
  for (int y = 0; y < side; ++y) {
    for (int x = 0; x < side; ++x) {
      for (int c = 0; c < 3; ++c) {
        double acc = 0.0;
        for (int i = -radius; i <= radius; ++i) acc += kernel[static_cast<std::size_t>(i + radius)] * image.at(y, clamp(x + i), c);
        tmp.at(y, x, c) = acc;
      }
    }
  }
  for (int y = 0; y < side; ++y) {
    for (int x = 0; x < side; ++x) {
      for (int c = 0; c < 3; ++c) {
        double acc = 0.0;
        for (int i = -radius; i <= radius; ++i) acc += kernel[static_cast<std::size_t>(i + radius)] * tmp.at(clamp(y + i), x, c);
        out.at(y, x, c) = acc;
      }
    }
  }
  return out;
}

models::ImageTransform make_transform(const AblationSpec& spec, int side) {
  spec.validate();
  if (spec.kind == Kind::none) return {};
  if (spec.kind == Kind::gaussian_blur) {
    const double sigma = *spec.sigma;
    if (sigma == 0.0) return {};
    return [sigma](RgbImage& img) { img = blur_image(img, sigma); };
  }
  auto mask = std::make_shared<const std::vector<std::uint8_t>>(mask_pixels(spec, side));
  return [mask, side](RgbImage& img) {
    if (img.side != side) fail(ErrorCode::shape_mismatch, "ablation mask built for a different image side");
    img = apply_mask(img, *mask);
  };
}

}  // namespace fundascreen::ablation
