#include "fundascreen/image.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>

#include "fundascreen/error.hpp"

namespace fundascreen {

RgbImage to_rgb(const FundusImage& image) {
  RgbImage out(image.side);
  for (std::size_t i = 0; i < image.rgb.size(); ++i) out.rgb[i] = image.rgb[i] / 255.0;
  return out;
}

FundusImage quantize(const RgbImage& image) {
  FundusImage out(image.side);
  for (std::size_t i = 0; i < image.rgb.size(); ++i) {
    const double v = std::clamp(image.rgb[i], 0.0, 1.0);
    out.rgb[i] = static_cast<std::uint8_t>(std::lround(v * 255.0));
  }
  return out;
}

void write_ppm(std::ostream& out, const FundusImage& image) {
  out << "P6\n" << image.side << ' ' << image.side << "\n255\n";
  out.write(reinterpret_cast<const char*>(image.rgb.data()), static_cast<std::streamsize>(image.rgb.size()));
}

void write_ppm_file(const std::string& path, const FundusImage& image) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorCode::io, "cannot write " + path);
  write_ppm(out, image);
  if (!out) fail(ErrorCode::io, "write failed for " + path);
}

namespace {

// Reads the next header token, skipping whitespace and '#' comments.
std::string next_token(std::istream& in) {
  std::string tok;
  int c;
  while ((c = in.get()) != EOF) {
    if (c == '#') {
      while ((c = in.get()) != EOF && c != '\n') {
      }
      continue;
    }
    if (std::isspace(c)) {
      if (!tok.empty()) break;
      continue;
    }
    tok.push_back(static_cast<char>(c));
  }
  return tok;
}

int header_int(std::istream& in, const std::string& source, const char* what) {
  const std::string tok = next_token(in);
  if (tok.empty() || !std::all_of(tok.begin(), tok.end(), [](char ch) { return std::isdigit(static_cast<unsigned char>(ch)); })) {
    fail(ErrorCode::parse, source + ": malformed PPM header, bad " + what + " '" + tok + "'");
  }
  if (tok.size() > 9) fail(ErrorCode::parse, source + ": malformed PPM header, " + what + " too large");
  return std::stoi(tok);
}

}  // namespace

FundusImage read_ppm(std::istream& in, const std::string& source) {
  const std::string magic = next_token(in);
  if (magic != "P6") fail(ErrorCode::parse, source + ": malformed PPM header, magic '" + magic + "' is not P6");
  const int width = header_int(in, source, "width");
  const int height = header_int(in, source, "height");
  const int maxval = header_int(in, source, "maxval");
  if (maxval != 255) {
    fail(ErrorCode::unsupported, source + ": unsupported PPM maxval " + std::to_string(maxval) + ", only 255 is accepted");
  }
  if (width <= 0 || width != height) {
    fail(ErrorCode::parse, source + ": PPM must be square and non-empty, got " + std::to_string(width) + "x" +
                               std::to_string(height));
  }
  FundusImage img(width);
  in.read(reinterpret_cast<char*>(img.rgb.data()), static_cast<std::streamsize>(img.rgb.size()));
  if (in.gcount() != static_cast<std::streamsize>(img.rgb.size())) {
    fail(ErrorCode::parse, source + ": truncated PPM pixel data");
  }
  return img;
}

FundusImage read_ppm_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::missing_input, "cannot open image " + path);
  return read_ppm(in, path);
}

}  // namespace fundascreen
