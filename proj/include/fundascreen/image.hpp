#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace fundascreen {

// Square 8-bit RGB raster, interleaved row-major. This is the on-disk and
// in-cohort representation; pixel value k stands for k / 255.
struct FundusImage {
  int side = 0;
  std::vector<std::uint8_t> rgb;  // side * side * 3

  FundusImage() = default;
  explicit FundusImage(int side_px) : side(side_px), rgb(static_cast<std::size_t>(side_px) * side_px * 3, 0) {}

  std::uint8_t& at(int y, int x, int c) { return rgb[(static_cast<std::size_t>(y) * side + x) * 3 + c]; }
  std::uint8_t at(int y, int x, int c) const { return rgb[(static_cast<std::size_t>(y) * side + x) * 3 + c]; }

  bool operator==(const FundusImage&) const = default;
};

// Square RGB raster with continuous values, interleaved row-major. Used for
// augmentation, masking and blur; values are nominally in [0, 1].
struct RgbImage {
  int side = 0;
  std::vector<double> rgb;

  RgbImage() = default;
  explicit RgbImage(int side_px, double fill = 0.0)
      : side(side_px), rgb(static_cast<std::size_t>(side_px) * side_px * 3, fill) {}

  double& at(int y, int x, int c) { return rgb[(static_cast<std::size_t>(y) * side + x) * 3 + c]; }
  double at(int y, int x, int c) const { return rgb[(static_cast<std::size_t>(y) * side + x) * 3 + c]; }

  bool operator==(const RgbImage&) const = default;
};

RgbImage to_rgb(const FundusImage& image);

// Rounds to the nearest 8-bit level after clamping to [0, 1].
FundusImage quantize(const RgbImage& image);

// Binary PPM (P6, maxval 255). Only square images are accepted on read.
void write_ppm(std::ostream& out, const FundusImage& image);
void write_ppm_file(const std::string& path, const FundusImage& image);
FundusImage read_ppm(std::istream& in, const std::string& source);
FundusImage read_ppm_file(const std::string& path);

}  // namespace fundascreen
