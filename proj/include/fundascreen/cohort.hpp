#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "fundascreen/image.hpp"

namespace fundascreen::cohort {

enum class Sex { female, male };
enum class Eye { left, right };
enum class Split { train, tune, validation };
enum class Severity { none, mild, moderate, severe };

std::string_view to_string(Sex s);
std::string_view to_string(Eye e);
std::string_view to_string(Split s);
std::string_view to_string(Severity s);
Sex parse_sex(std::string_view text);
Eye parse_eye(std::string_view text);
Split parse_split(std::string_view text);

struct CbcComponent {
  std::string name;
  double value = 0.0;
  std::string unit;

  bool operator==(const CbcComponent&) const = default;
};

struct EyeImage {
  Eye eye = Eye::left;
  std::string image_path;  // relative to the dataset directory
  FundusImage image;

  bool operator==(const EyeImage&) const = default;
};

struct Visit {
  std::string visit_id;
  int visit_index = 0;
  std::optional<double> hb;   // g/dL
  std::optional<double> hct;  // percent
  std::optional<double> rbc;  // 10^12/L
  std::vector<CbcComponent> extra_cbc;
  std::vector<EyeImage> eyes;  // 0..2

  // Has at least one image and a hemoglobin value.
  bool eligible() const { return !eyes.empty() && hb.has_value(); }

  bool operator==(const Visit&) const = default;
};

struct PatientRecord {
  std::string patient_id;
  Sex sex = Sex::female;
  double age = 0.0;
  std::string ethnicity;
  bool smoker = false;
  double sbp = 0.0;
  double dbp = 0.0;
  double pulse = 0.0;
  double height = 0.0;  // cm
  double weight = 0.0;  // kg
  double bmi = 0.0;
  std::vector<Visit> visits;

  bool operator==(const PatientRecord&) const = default;
};

using Cohort = std::vector<PatientRecord>;

// Throws Error(invalid_argument) naming the violated invariant.
void validate(const Visit& visit);
void validate(const PatientRecord& patient);

struct AnemiaLabels {
  bool anemia = false;
  bool moderate = false;
  bool approximate = false;
  Severity severity = Severity::none;

  bool operator==(const AnemiaLabels&) const = default;
};

inline constexpr double kAnemiaCutoffFemale = 12.0;
inline constexpr double kAnemiaCutoffMale = 13.0;
inline constexpr double kModerateCutoff = 11.0;
inline constexpr double kApproximateCutoff = 12.5;
inline constexpr double kSevereCutoff = 8.0;

// Comparisons are strict: hb exactly at a cutoff is not anemic.
AnemiaLabels classify_anemia(double hb, Sex sex);

// --- splitting -------------------------------------------------------------

struct SplitFractions {
  double train = 0.70;
  double tune = 0.10;
  double validation = 0.20;
};

class SplitAssignment {
 public:
  void assign(const std::string& patient_id, Split split) { map_[patient_id] = split; }
  std::optional<Split> find(const std::string& patient_id) const;
  Split at(const std::string& patient_id) const;
  std::size_t size() const { return map_.size(); }
  std::size_t count(Split split) const;
  const std::map<std::string, Split>& entries() const { return map_; }

  bool operator==(const SplitAssignment&) const = default;

 private:
  std::map<std::string, Split> map_;
};

// Stratum key used by stratified_split: sex x age-decile bin.
struct Stratum {
  Sex sex;
  int age_bin;
  auto operator<=>(const Stratum&) const = default;
};

// Age decile cut points (9 values) of the cohort's age distribution.
std::vector<double> age_decile_cuts(std::span<const PatientRecord> cohort);
int age_bin(double age, std::span<const double> cuts);

SplitAssignment stratified_split(std::span<const PatientRecord> cohort, std::uint64_t seed,
                                 SplitFractions fractions = {});

void write_split_csv(std::ostream& out, const SplitAssignment& split);
void write_split_file(const std::string& path, const SplitAssignment& split);
SplitAssignment read_split_file(const std::string& path);

// --- standardization -------------------------------------------------------

class Standardizer {
 public:
  struct Feature {
    std::string name;
    double mean = 0.0;
    double sd = 1.0;
    bool operator==(const Feature&) const = default;
  };

  // `columns[j]` holds the training values of feature `names[j]`. Features
  // with fewer than two values or zero sample variance are dropped and
  // reported in dropped().
  static Standardizer fit(const std::vector<std::string>& names, const std::vector<std::vector<double>>& columns);

  // Takes a full raw row (all fitted names, in fit order) and returns the
  // z-scores of the retained features.
  std::vector<double> apply(std::span<const double> raw_row) const;
  double apply_one(std::size_t retained_index, double value) const;
  double invert_one(std::size_t retained_index, double z) const;
  std::vector<double> invert(std::span<const double> z_row) const;

  const std::vector<Feature>& retained() const { return retained_; }
  const std::vector<std::string>& input_names() const { return input_names_; }
  const std::vector<std::string>& dropped() const { return dropped_; }
  const std::vector<std::string>& warnings() const { return warnings_; }
  std::size_t dimension() const { return retained_.size(); }

  // Rebuild from serialized parts (bundle.json).
  static Standardizer from_parts(std::vector<std::string> input_names, std::vector<Feature> retained,
                                 std::vector<std::string> dropped);

  bool operator==(const Standardizer&) const = default;

 private:
  std::vector<std::string> input_names_;
  std::vector<Feature> retained_;
  std::vector<std::size_t> source_index_;
  std::vector<std::string> dropped_;
  std::vector<std::string> warnings_;
};

// --- visit views -----------------------------------------------------------

// Each patient reduced to its first eligible visit; patients with no eligible
// visit are omitted.
Cohort first_visit_view(std::span<const PatientRecord> cohort);

struct VisitPair {
  std::size_t patient = 0;  // index into the source cohort
  std::size_t first = 0;    // visit positions within the patient
  std::size_t second = 0;
};

// The earliest two eligible visits of every patient that has at least two.
std::vector<VisitPair> multi_visit_pairs(std::span<const PatientRecord> cohort);

// --- metadata features -----------------------------------------------------

// Raw (unstandardized) metadata: sex, age, one-hot ethnicity over `levels`,
// smoker, blood pressure, pulse, height, weight, BMI.
std::vector<std::string> metadata_feature_names(std::span<const std::string> ethnicity_levels);
std::vector<double> metadata_features(const PatientRecord& patient, std::span<const std::string> ethnicity_levels);
std::vector<std::string> ethnicity_levels(std::span<const PatientRecord> cohort);

// --- manifest --------------------------------------------------------------

inline const std::vector<std::string> kManifestHeader = {
    "patient_id", "visit_index", "sex", "age", "ethnicity", "smoker", "sbp", "dbp", "pulse",
    "height", "weight", "bmi", "hb", "hct", "rbc", "eye", "image_path"};

inline const std::vector<std::string> kExtraCbcHeader = {"patient_id", "visit_index", "name", "value", "unit"};

// One row per (visit, eye); visits without images get one row with empty
// eye and image_path.
void write_manifest(std::ostream& out, const Cohort& cohort);
void write_extra_cbc(std::ostream& out, const Cohort& cohort);

// Rebuilds the cohort structure; images are left empty (paths only).
Cohort read_manifest(std::istream& in, const std::string& source);
void read_extra_cbc(std::istream& in, const std::string& source, Cohort& cohort);

std::string visit_id(const std::string& patient_id, int visit_index);

}  // namespace fundascreen::cohort
