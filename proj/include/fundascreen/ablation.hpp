#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "fundascreen/cohort.hpp"
#include "fundascreen/image.hpp"
#include "fundascreen/models.hpp"
#include "fundascreen/tensornet/optim.hpp"

namespace fundascreen::ablation {

enum class Kind { none, top_bottom, center_stripe, outer_rim, central_core, gaussian_blur };

std::string_view to_string(Kind k);
Kind parse_kind(std::string_view text);
bool is_mask(Kind k);

// One ablation arm. Mask kinds carry `fraction` (share of image area
// masked, in [0, 1)); gaussian_blur carries `sigma` in pixels at the 587 px
// reference resolution.
struct AblationSpec {
  Kind kind = Kind::none;
  std::optional<double> fraction;
  std::optional<double> sigma;

  static AblationSpec none() { return {}; }
  static AblationSpec mask(Kind kind, double fraction);
  static AblationSpec blur(double sigma);

  void validate() const;
  // Stable text form, e.g. "center_stripe:0.2", "gaussian_blur:4", "none".
  std::string label() const;
  // Hex digest of label(); recorded per training/evaluation phase.
  std::string hash() const;
  double parameter() const;

  bool operator==(const AblationSpec&) const = default;
};

void to_json(nlohmann::json& j, const AblationSpec& s);
void from_json(const nlohmann::json& j, AblationSpec& s);

inline constexpr double kReferenceSide = 587.0;
// Masked pixels take this value in [0, 1] image space, i.e. 0 after the
// network's input shift.
inline constexpr double kMaskFill = 0.5;

// Row-major side x side mask, 1 = masked. Band heights are rounded to whole
// rows; circle radii are chosen so the masked pixel count is as close as the
// pixel lattice allows to fraction * side^2.
std::vector<std::uint8_t> mask_pixels(const AblationSpec& spec, int side);

// Effective radius in pixels of the circle bounding a central_core or
// outer_rim mask.
double circle_radius(const AblationSpec& spec, int side);

RgbImage mask_image(const RgbImage& image, const AblationSpec& spec);

// Separable Gaussian, radius ceil(3 sigma), normalized kernel, clamp-to-edge
// borders. `sigma_ref` is rescaled by side / 587.
RgbImage blur_image(const RgbImage& image, double sigma_ref);
std::vector<double> gaussian_kernel(double sigma_px);

// Transform for a whole arm, with the mask precomputed for `side`.
models::ImageTransform make_transform(const AblationSpec& spec, int side);

// --- grid runner -----------------------------------------------------------

struct ArmSeedResult {
  int seed_index = 0;
  std::uint64_t seed = 0;
  std::optional<double> auc;  // per-eye validation AUC
  std::string error;          // non-empty if this member failed
  std::string train_hash;     // transform hash used while training/tuning
  std::string eval_hash;      // transform hash used for validation
};

struct ArmResult {
  AblationSpec spec;
  std::vector<ArmSeedResult> seeds;
  std::optional<double> mean_auc;
  std::optional<double> delta;  // baseline mean - arm mean
  std::string error;
};

struct AblationReport {
  models::TaskSpec task;
  std::vector<ArmResult> arms;
  std::optional<double> baseline_mean_auc;

  const ArmResult* find(const AblationSpec& spec) const;
};

struct GridOptions {
  nn::TrainSchedule schedule;
  nn::AugmentRanges augment;
  std::uint64_t root_seed = 0;
  int seeds_per_arm = 3;
  unsigned jobs = 1;
};

// Trains `seeds_per_arm` fundus-only members per spec with the transform
// applied to every train, tune and validation image and reports per-eye
// validation AUC without ensembling or eye averaging. A `none` arm is added
// when absent.
AblationReport run_ablation_grid(const cohort::Cohort& cohort, const cohort::SplitAssignment& split,
                                 const models::TaskSpec& task, std::vector<AblationSpec> specs,
                                 const GridOptions& options);

// Seed of member `index` of an arm: the arm hash plus the index.
std::uint64_t arm_seed(const AblationSpec& spec, std::uint64_t root_seed, int index);

// `kind,param,seed,auc` rows: one per trained member, then a summary row per
// arm with seed = "mean" and one with seed = "delta" (baseline - mean).
void write_ablation_report(std::ostream& out, const AblationReport& report);

// Run manifest: per arm and seed, the transform hash used for training and
// tuning and the one used for validation.
nlohmann::json ablation_manifest(const AblationReport& report);

std::vector<AblationSpec> read_grid_config(const std::string& path);

}  // namespace fundascreen::ablation
