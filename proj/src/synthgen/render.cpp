#include <algorithm>
#include <cmath>
#include <numbers>

#include "fundascreen/rng.hpp"
#include "fundascreen/synthgen.hpp"

namespace fundascreen::synthgen {

namespace {

// All geometry is in fractional image coordinates: u to the right, v down,
// both in [0, 1].
constexpr double kRetinaRadius = 0.47;
constexpr double kMaculaRadius = 0.07;
constexpr double kDiscSemiU = 0.045;
constexpr double kDiscSemiV = 0.055;
constexpr double kRimOuter = 1.6;           // rim annulus, in disc radii
constexpr double kSignalEnvelopeSd = 0.04;  // vertical extent of the Hb-dependent vessel contrast
constexpr double kTextureScale = 1.0;
constexpr double kBaseColor[3] = {0.78, 0.36, 0.18};
constexpr double kDiscColor[3] = {0.95, 0.82, 0.55};

struct Segment {
  double u0, v0, u1, v1, half_width;
};

void grow_vessel(std::vector<Segment>& out, Rng& rng, double u, double v, double angle, double length, double half_width,
                 int depth) {
  constexpr int kPieces = 3;
  for (int i = 0; i < kPieces; ++i) {
    angle += 0.07 * rng.uniform(-1.0, 1.0);
    const double nu = u + std::cos(angle) * length / kPieces;
    const double nv = v + std::sin(angle) * length / kPieces;
    out.push_back(Segment{u, v, nu, nv, half_width});
    u = nu;
    v = nv;
  }
  if (depth > 0) {
    grow_vessel(out, rng, u, v, angle + 0.5, length * 0.65, half_width * 0.7, depth - 1);
    grow_vessel(out, rng, u, v, angle - 0.5, length * 0.65, half_width * 0.7, depth - 1);
  }
}

double segment_distance(const Segment& s, double u, double v) {
  const double du = s.u1 - s.u0;
  const double dv = s.v1 - s.v0;
  const double len2 = du * du + dv * dv;
  double t = len2 > 0 ? ((u - s.u0) * du + (v - s.v0) * dv) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  const double pu = s.u0 + t * du - u;
  const double pv = s.v0 + t * dv - v;
  return std::sqrt(pu * pu + pv * pv);
}

}  // namespace

double disc_center_u(cohort::Eye eye) { return eye == cohort::Eye::left ? 0.25 : 0.75; }

RenderLayers render_fundus_layers(const VisitLatent& latent, const GeneratorConfig& config) {
  const int n = config.image_side;
  const double hb = latent.apparent_hb();
  const double detail = std::max(0.0, hb - kHbFloor);

  Rng geo(derive_seed(latent.jitter_seed, "geometry"));
  const double disc_u = disc_center_u(latent.eye) + 0.01 * geo.uniform(-1.0, 1.0);
  const double disc_v = 0.5 + 0.005 * geo.uniform(-1.0, 1.0);
  // Vessels run towards the image centre from the disc, plus two short nasal trunks.
  const double toward_center = disc_u < 0.5 ? 1.0 : -1.0;
  std::vector<Segment> segments;
  struct Root {
    double angle, length, half_width;
  };
  constexpr double kPi = std::numbers::pi;
  const Root roots[] = {{0.26, 0.30, 0.012}, {-0.26, 0.30, 0.012}, {0.96, 0.28, 0.011},
                        {-0.96, 0.28, 0.011}, {kPi - 0.52, 0.15, 0.010}, {-(kPi - 0.52), 0.15, 0.010}};
  for (const auto& r : roots) {
    const double a = r.angle + 0.05 * geo.normal();
    const double ang = toward_center > 0 ? a : kPi - a;
    grow_vessel(segments, geo, disc_u, disc_v, ang, r.length * (1.0 + 0.05 * geo.normal()), r.half_width, 2);
  }

  Rng noise(derive_seed(latent.jitter_seed, "noise"));
  RenderLayers out;
  const std::size_t pixels = static_cast<std::size_t>(n) * n;
  out.retina.assign(pixels, 0.0);
  out.vessel.assign(pixels, 0.0);
  out.rim.assign(pixels, 0.0);
  out.checker.assign(pixels, 0.0);
  RgbImage img(n, 0.0);
  const double px = 1.0 / n;

  for (int y = 0; y < n; ++y) {
    const double v = (y + 0.5) * px;
    const double envelope = std::exp(-0.5 * std::pow((v - 0.5) / kSignalEnvelopeSd, 2));
    for (int x = 0; x < n; ++x) {
      const double u = (x + 0.5) * px;
      const std::size_t idx = static_cast<std::size_t>(y) * n + x;
      const double d = std::hypot(u - 0.5, v - 0.5);
      if (d > kRetinaRadius) continue;
      out.retina[idx] = 1.0;

      double c[3];
      const double vignette = 1.0 - 0.3 * (d / kRetinaRadius) * (d / kRetinaRadius);
      const double macula = 1.0 - 0.2 * std::exp(-(d / kMaculaRadius) * (d / kMaculaRadius));
      for (int k = 0; k < 3; ++k) c[k] = kBaseColor[k] * vignette * macula;

      const double pallor = config.pallor_gain * (config.reference_hb - hb);
      for (double& ck : c) ck += pallor;

      const double rho = std::hypot((u - disc_u) / kDiscSemiU, (v - disc_v) / kDiscSemiV);
      if (rho < 1.0) {
        for (int k = 0; k < 3; ++k) c[k] = kDiscColor[k] + pallor;
      }

      double coverage = 0.0;
      for (const auto& s : segments) {
        const double reach = s.half_width + px;
        if (u < std::min(s.u0, s.u1) - reach || u > std::max(s.u0, s.u1) + reach) continue;
        if (v < std::min(s.v0, s.v1) - reach || v > std::max(s.v0, s.v1) + reach) continue;
        const double edge = segment_distance(s, u, v) - s.half_width;
        coverage = std::max(coverage, std::clamp(0.5 - edge * n, 0.0, 1.0));
      }
      out.vessel[idx] = coverage;
      // Capillary texture in the background of the signal band: a pixel-scale
      // checkerboard whose amplitude follows the vessel contrast.
      const double sign = (x + y) % 2 == 0 ? 1.0 : -1.0;
      const double texture = sign * config.vessel_gain * detail * envelope * (1.0 - coverage) * kTextureScale;
      for (double& ck : c) ck += texture;
      if (coverage > 0.0) {
        const double strength = std::min(0.95, config.vessel_base_contrast + config.vessel_gain * hb * envelope);
        for (double& ck : c) ck *= 1.0 - strength * coverage;
      }

      if (rho >= 1.0 && rho < kRimOuter) {
        out.rim[idx] = 1.0;
        out.checker[idx] = sign;
        for (double& ck : c) ck += sign * config.disc_gain * detail;
      }

      for (int k = 0; k < 3; ++k) {
        const double value = c[k] + (config.noise_sd > 0 ? noise.normal(0.0, config.noise_sd) : 0.0);
        img.at(y, x, k) = value;
      }
    }
  }
  out.image = quantize(img);
  return out;
}

FundusImage render_fundus(const VisitLatent& latent, const GeneratorConfig& config) {
  return render_fundus_layers(latent, config).image;
}

}  // namespace fundascreen::synthgen
