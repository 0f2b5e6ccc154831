#include <cmath>

#include "fundascreen/error.hpp"
#include "fundascreen/parallel.hpp"
#include "fundascreen/rng.hpp"
#include "fundascreen/synthgen.hpp"

namespace fundascreen::synthgen {

using cohort::CbcComponent;
using cohort::Eye;
using cohort::EyeImage;
using cohort::PatientRecord;
using cohort::Sex;
using cohort::Visit;

void GeneratorConfig::validate() const {
  auto require = [](bool ok, const char* what) {
    if (!ok) fail(ErrorCode::config, std::string("generator config: ") + what);
  };
  require(n_patients >= 0, "n_patients must be >= 0");
  require(image_side >= 32 && image_side % 2 == 0, "image_side must be even and >= 32");
  require(pallor_gain >= 0 && vessel_gain >= 0 && disc_gain >= 0, "signal gains must be >= 0");
  require(vessel_base_contrast >= 0 && vessel_base_contrast < 1, "vessel_base_contrast must be in [0, 1)");
  require(female_fraction >= 0 && female_fraction <= 1, "female_fraction must be in [0, 1]");
  require(two_visit_fraction >= 0 && two_visit_fraction <= 1, "two_visit_fraction must be in [0, 1]");
  require(single_eye_fraction >= 0 && single_eye_fraction <= 1, "single_eye_fraction must be in [0, 1]");
  require(hb_sd >= 0 && nuisance_sd >= 0 && noise_sd >= 0, "standard deviations must be >= 0");
  require(hct_noise_sd >= 0 && rbc_noise_sd >= 0, "standard deviations must be >= 0");
  require(hb_mean_female > 6 && hb_mean_female < 20 && hb_mean_male > 6 && hb_mean_male < 20,
          "hemoglobin means must lie in (6, 20)");
}

namespace {

double round_to(double v, double step) { return std::round(v / step) * step; }

double truncated_normal(Rng& rng, double mean, double sd, double lo, double hi) {
  if (sd == 0.0) return std::clamp(mean, lo, hi);
  for (int tries = 0; tries < 10000; ++tries) {
    const double v = rng.normal(mean, sd);
    if (v >= lo && v <= hi) return v;
  }
  return std::clamp(mean, lo, hi);
}

const char* pick_ethnicity(Rng& rng) {
  static constexpr std::pair<const char*, double> kLevels[] = {
      {"white", 0.91}, {"asian", 0.04}, {"black", 0.025}, {"mixed", 0.01}, {"other", 0.015}};
  double u = rng.uniform();
  for (const auto& [name, p] : kLevels) {
    if (u < p) return name;
    u -= p;
  }
  return "other";
}

std::string patient_id(int i) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "P%06d", i + 1);
  return buf;
}

}  // namespace

SyntheticCohort sample_cohort(const GeneratorConfig& config) {
  config.validate();
  SyntheticCohort out;
  out.patients.reserve(static_cast<std::size_t>(config.n_patients));
  for (int i = 0; i < config.n_patients; ++i) {
    const std::uint64_t pseed = derive_seed(config.seed, "patient/" + std::to_string(i));
    Rng rng(pseed);
    PatientRecord p;
    p.patient_id = patient_id(i);
    p.sex = rng.bernoulli(config.female_fraction) ? Sex::female : Sex::male;
    const bool male = p.sex == Sex::male;
    p.age = round_to(std::clamp(rng.normal(56.5, 8.1), 40.0, 70.0), 0.1);
    p.ethnicity = pick_ethnicity(rng);
    p.smoker = rng.bernoulli(male ? 0.14 : 0.10);
    const double age_c = p.age - 56.5;
    p.height = round_to(rng.normal(male ? 175.8 : 162.5, male ? 6.8 : 6.2) - 0.1 * age_c, 0.1);
    p.weight = round_to(std::max(40.0, rng.normal(male ? 85.5 : 71.0, male ? 13.5 : 13.0)), 0.1);
    p.bmi = round_to(p.weight / ((p.height / 100.0) * (p.height / 100.0)), 0.01);
    p.sbp = std::round(128.0 + 0.55 * age_c + (male ? 5.0 : 0.0) + rng.normal(0.0, 16.0));
    p.dbp = std::round(79.0 + 0.1 * age_c + (male ? 3.0 : 0.0) + rng.normal(0.0, 9.5));
    p.pulse = std::round(std::max(40.0, 70.0 - (male ? 2.0 : 0.0) + rng.normal(0.0, 10.5)));

    const double nuisance = rng.normal(0.0, config.nuisance_sd);
    const int n_visits = rng.bernoulli(config.two_visit_fraction) ? 2 : 1;
    for (int k = 0; k < n_visits; ++k) {
      Visit v;
      v.visit_index = k;
      v.visit_id = cohort::visit_id(p.patient_id, k);
      const double hb = truncated_normal(rng, male ? config.hb_mean_male : config.hb_mean_female, config.hb_sd, kHbFloor, kHbCeiling);
      const double hct = config.hct_per_hb * hb + rng.normal(0.0, config.hct_noise_sd);
      const double rbc = std::max(0.5, config.rbc_per_hb * hb + rng.normal(0.0, config.rbc_noise_sd));
      v.hb = hb;
      v.hct = hct;
      v.rbc = rbc;
      v.extra_cbc = {CbcComponent{"mcv", hct / rbc * 10.0, "fL"}, CbcComponent{"mch", hb / rbc * 10.0, "pg"},
                     CbcComponent{"mchc", hb / hct * 100.0, "g/dL"}};

      std::vector<Eye> eyes = {Eye::left, Eye::right};
      if (rng.bernoulli(config.single_eye_fraction)) eyes = {rng.bernoulli(0.5) ? Eye::left : Eye::right};
      for (Eye e : eyes) {
        EyeImage img;
        img.eye = e;
        img.image_path = "images/" + v.visit_id + "_" + std::string(cohort::to_string(e)) + ".ppm";
        v.eyes.push_back(std::move(img));

        VisitLatent lat;
        lat.patient_id = p.patient_id;
        lat.visit_index = k;
        lat.eye = e;
        lat.true_hb = hb;
        lat.nuisance_offset = nuisance;
        lat.jitter_seed = derive_seed(pseed, "visit/" + std::to_string(k) + "/" + std::string(cohort::to_string(e)));
        out.latents.push_back(lat);
      }
      p.visits.push_back(std::move(v));
    }
    out.patients.push_back(std::move(p));
  }
  return out;
}

SyntheticCohort generate(const GeneratorConfig& config, unsigned jobs) {
  SyntheticCohort data = sample_cohort(config);
  std::vector<cohort::EyeImage*> slots;
  for (auto& p : data.patients) {
    for (auto& v : p.visits) {
      for (auto& e : v.eyes) slots.push_back(&e);
    }
  }
  parallel_for(slots.size(), jobs, [&](std::size_t i) { slots[i]->image = render_fundus(data.latents[i], config); });
  return data;
}

#define FUNDASCREEN_GENERATOR_FIELDS(X)                                                                         \
  X(n_patients) X(image_side) X(female_fraction) X(hb_mean_female) X(hb_mean_male) X(hb_sd) X(reference_hb) \
      X(hct_per_hb) X(hct_noise_sd) X(rbc_per_hb) X(rbc_noise_sd) X(pallor_gain) X(vessel_gain) X(disc_gain)  \
          X(vessel_base_contrast) X(nuisance_sd) X(two_visit_fraction) X(single_eye_fraction) X(noise_sd) X(seed)

void to_json(nlohmann::json& j, const GeneratorConfig& c) {
  j = nlohmann::json::object();
#define X(name) j[#name] = c.name;
  FUNDASCREEN_GENERATOR_FIELDS(X)
#undef X
}

void from_json(const nlohmann::json& j, GeneratorConfig& c) {
  if (!j.is_object()) fail(ErrorCode::config, "generator config must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    bool known = false;
#define X(name)                                                                   \
  if (key == #name) {                                                             \
    known = true;                                                                 \
    try {                                                                         \
      value.get_to(c.name);                                                       \
    } catch (const nlohmann::json::exception&) {                                  \
      fail(ErrorCode::config, "generator config: bad value for '" + key + "'");   \
    }                                                                             \
  }
    FUNDASCREEN_GENERATOR_FIELDS(X)
#undef X
    if (!known) fail(ErrorCode::config, "generator config: unknown key '" + key + "'");
  }
}

}  // namespace fundascreen::synthgen
