#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "fundascreen/cohort.hpp"
#include "fundascreen/image.hpp"

namespace fundascreen::synthgen {

// Hemoglobin range of the generator; detail signals are measured from the floor.
inline constexpr double kHbFloor = 6.0;
inline constexpr double kHbCeiling = 20.0;

struct GeneratorConfig {
  int n_patients = 2000;
  int image_side = 64;
  double female_fraction = 0.549;

  // Hemoglobin per visit: Gaussian(sex mean, hb_sd), truncated to [6, 20].
  double hb_mean_female = 13.6;
  double hb_mean_male = 15.0;
  double hb_sd = 1.25;
  double reference_hb = 14.3;

  // HCT and RBC are noisy affine functions of Hb.
  double hct_per_hb = 2.94;
  double hct_noise_sd = 1.0;
  double rbc_per_hb = 0.32;
  double rbc_noise_sd = 0.2;

  // Image signal gains, per g/dL of apparent hemoglobin.
  double pallor_gain = 0.0;
  double vessel_gain = 0.02;
  double disc_gain = 0.012;
  double vessel_base_contrast = 0.3;

  // Patient-specific offset (g/dL) added to hemoglobin as seen by the image.
  double nuisance_sd = 0.6;
  double two_visit_fraction = 0.3;
  double single_eye_fraction = 0.1;
  double noise_sd = 0.02;  // pixel units, values in [0, 1]
  std::uint64_t seed = 0;

  // Throws Error(config) on invalid values.
  void validate() const;
};

struct VisitLatent {
  std::string patient_id;
  int visit_index = 0;
  cohort::Eye eye = cohort::Eye::left;
  double true_hb = 0.0;
  double nuisance_offset = 0.0;
  std::uint64_t jitter_seed = 0;

  double apparent_hb() const { return true_hb + nuisance_offset; }
  bool operator==(const VisitLatent&) const = default;
};

struct SyntheticCohort {
  cohort::Cohort patients;           // images not yet rendered
  std::vector<VisitLatent> latents;  // one per (visit, eye), manifest order
};

SyntheticCohort sample_cohort(const GeneratorConfig& config);

// Per-pixel layers behind one rendered image, exposed for oracle tests.
struct RenderLayers {
  FundusImage image;
  std::vector<double> retina;   // 1 inside the retina disc
  std::vector<double> vessel;   // vessel coverage in [0, 1]
  std::vector<double> rim;      // 1 in the disc-rim annulus
  std::vector<double> checker;  // +-1 rim texture sign
};

FundusImage render_fundus(const VisitLatent& latent, const GeneratorConfig& config);
RenderLayers render_fundus_layers(const VisitLatent& latent, const GeneratorConfig& config);

// Horizontal centre of the optic disc in fractional coordinates.
double disc_center_u(cohort::Eye eye);

// sample_cohort followed by rendering every eye image. `jobs` bounds the
// number of rendering threads (0 = hardware concurrency).
SyntheticCohort generate(const GeneratorConfig& config, unsigned jobs = 1);

// Dataset directory: manifest.csv, cbc_extra.csv, images/*.ppm and the
// generator.json sidecar (config + latents, for oracle tests only).
void write_dataset(const SyntheticCohort& data, const GeneratorConfig& config, const std::string& dir);
void write_dataset(const cohort::Cohort& cohort, const std::string& dir);

// Reads manifest, extra CBC values and all images. Never reads generator.json.
cohort::Cohort read_dataset(const std::string& dir);

struct GeneratorSidecar {
  GeneratorConfig config;
  std::vector<VisitLatent> latents;
};
GeneratorSidecar read_generator_sidecar(const std::string& dir);

void to_json(nlohmann::json& j, const GeneratorConfig& c);
// Missing keys keep their defaults; unknown keys are rejected.
void from_json(const nlohmann::json& j, GeneratorConfig& c);

}  // namespace fundascreen::synthgen
