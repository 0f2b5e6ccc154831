#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <ostream>
#include <set>

#include "fundascreen/cohort.hpp"
#include "fundascreen/csv.hpp"
#include "fundascreen/error.hpp"
#include "fundascreen/rng.hpp"

namespace fundascreen::cohort {

std::string_view to_string(Sex s) { return s == Sex::female ? "female" : "male"; }
std::string_view to_string(Eye e) { return e == Eye::left ? "left" : "right"; }

std::string_view to_string(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::tune: return "tune";
    case Split::validation: return "validation";
  }
  return "?";
}

std::string_view to_string(Severity s) {
  switch (s) {
    case Severity::none: return "none";
    case Severity::mild: return "mild";
    case Severity::moderate: return "moderate";
    case Severity::severe: return "severe";
  }
  return "?";
}

Sex parse_sex(std::string_view text) {
  if (text == "female") return Sex::female;
  if (text == "male") return Sex::male;
  fail(ErrorCode::parse, "unknown sex '" + std::string(text) + "'");
}

Eye parse_eye(std::string_view text) {
  if (text == "left") return Eye::left;
  if (text == "right") return Eye::right;
  fail(ErrorCode::parse, "unknown eye '" + std::string(text) + "'");
}

Split parse_split(std::string_view text) {
  if (text == "train") return Split::train;
  if (text == "tune") return Split::tune;
  if (text == "validation") return Split::validation;
  fail(ErrorCode::parse, "unknown split '" + std::string(text) + "'");
}

void validate(const Visit& visit) {
  if (visit.hb && !(*visit.hb > 0.0 && *visit.hb < 25.0)) {
    fail(ErrorCode::invalid_argument, visit.visit_id + ": hb " + csv::format_double(*visit.hb) + " outside (0, 25)");
  }
  if (visit.eyes.size() > 2) fail(ErrorCode::invalid_argument, visit.visit_id + ": more than 2 eye images");
  if (visit.eyes.size() == 2 && visit.eyes[0].eye == visit.eyes[1].eye) {
    fail(ErrorCode::invalid_argument, visit.visit_id + ": two images of the same eye");
  }
  std::set<std::string> names;
  for (const auto& c : visit.extra_cbc) {
    if (!names.insert(c.name).second) {
      fail(ErrorCode::invalid_argument, visit.visit_id + ": duplicate CBC component '" + c.name + "'");
    }
  }
}

void validate(const PatientRecord& patient) {
  if (patient.visits.empty()) fail(ErrorCode::invalid_argument, patient.patient_id + ": no visits");
  if (!(patient.age >= 18.0 && patient.age <= 100.0)) {
    fail(ErrorCode::invalid_argument, patient.patient_id + ": age " + csv::format_double(patient.age) + " outside [18, 100]");
  }
  if (patient.height > 0.0 && patient.weight > 0.0 && patient.bmi > 0.0) {
    const double implied = patient.weight / std::pow(patient.height / 100.0, 2);
    if (std::abs(implied - patient.bmi) > 0.05 * implied) {
      fail(ErrorCode::invalid_argument, patient.patient_id + ": bmi inconsistent with height and weight");
    }
  }
  for (const auto& v : patient.visits) validate(v);
}

AnemiaLabels classify_anemia(double hb, Sex sex) {
  if (!std::isfinite(hb)) fail(ErrorCode::invalid_argument, "hemoglobin must be finite");
  const double cutoff = sex == Sex::female ? kAnemiaCutoffFemale : kAnemiaCutoffMale;
  AnemiaLabels l;
  l.anemia = hb < cutoff;
  l.moderate = hb < kModerateCutoff;
  l.approximate = hb < kApproximateCutoff;
  if (hb < kSevereCutoff) {
    l.severity = Severity::severe;
  } else if (hb < kModerateCutoff) {
    l.severity = Severity::moderate;
  } else if (hb < cutoff) {
    l.severity = Severity::mild;
  } else {
    l.severity = Severity::none;
  }
  return l;
}

// --- splitting -------------------------------------------------------------

std::optional<Split> SplitAssignment::find(const std::string& patient_id) const {
  auto it = map_.find(patient_id);
  if (it == map_.end()) return std::nullopt;
  return it->second;
}

Split SplitAssignment::at(const std::string& patient_id) const {
  auto s = find(patient_id);
  if (!s) fail(ErrorCode::missing_input, "patient " + patient_id + " has no split assignment");
  return *s;
}

std::size_t SplitAssignment::count(Split split) const {
  return static_cast<std::size_t>(
      std::count_if(map_.begin(), map_.end(), [split](const auto& kv) { return kv.second == split; }));
}

std::vector<double> age_decile_cuts(std::span<const PatientRecord> cohort) {
  std::vector<double> ages;
  ages.reserve(cohort.size());
  for (const auto& p : cohort) ages.push_back(p.age);
  std::sort(ages.begin(), ages.end());
  std::vector<double> cuts;
  if (ages.empty()) return cuts;
  for (int k = 1; k <= 9; ++k) {
    const std::size_t idx = std::min(ages.size() - 1, static_cast<std::size_t>(k * ages.size() / 10));
    cuts.push_back(ages[idx]);
  }
  return cuts;
}

int age_bin(double age, std::span<const double> cuts) {
  return static_cast<int>(std::upper_bound(cuts.begin(), cuts.end(), age) - cuts.begin());
}

SplitAssignment stratified_split(std::span<const PatientRecord> cohort, std::uint64_t seed, SplitFractions fractions) {
  const std::array<double, 3> f = {fractions.train, fractions.tune, fractions.validation};
  for (double x : f) {
    if (!(x >= 0.0 && x <= 1.0)) fail(ErrorCode::invalid_argument, "split fractions must lie in [0, 1]");
  }
  if (std::abs(f[0] + f[1] + f[2] - 1.0) > 1e-9) fail(ErrorCode::invalid_argument, "split fractions must sum to 1");
  if (cohort.empty()) fail(ErrorCode::invalid_argument, "cannot split an empty cohort");

  const auto cuts = age_decile_cuts(cohort);
  std::map<Stratum, std::vector<std::string>> strata;
  for (const auto& p : cohort) strata[Stratum{p.sex, age_bin(p.age, cuts)}].push_back(p.patient_id);

  SplitAssignment out;
  // Running global targets; leftovers after flooring go to the split with a
  // positive in-stratum remainder that is furthest behind its global target.
  std::array<double, 3> global_target{};
  std::array<double, 3> global_assigned{};
  for (auto& [key, ids] : strata) {
    std::sort(ids.begin(), ids.end());
    Rng rng(derive_seed(seed, "split/" + std::string(to_string(key.sex)) + "/" + std::to_string(key.age_bin)));
    for (std::size_t i = ids.size(); i > 1; --i) std::swap(ids[i - 1], ids[rng.below(i)]);

    const double n = static_cast<double>(ids.size());
    std::array<std::size_t, 3> counts{};
    std::array<double, 3> remainder{};
    std::size_t used = 0;
    for (int s = 0; s < 3; ++s) {
      const double target = f[s] * n;
      counts[s] = static_cast<std::size_t>(std::floor(target + 1e-9));
      remainder[s] = target - static_cast<double>(counts[s]);
      used += counts[s];
      global_target[s] += target;
    }
    std::size_t left = ids.size() - used;
    while (left > 0) {
      int best = -1;
      double best_deficit = -1e300;
      for (int s = 0; s < 3; ++s) {
        if (remainder[s] <= 1e-9) continue;
        const double deficit = global_target[s] - (global_assigned[s] + static_cast<double>(counts[s]));
        if (deficit > best_deficit) {
          best_deficit = deficit;
          best = s;
        }
      }
      if (best < 0) best = 0;
      ++counts[best];
      remainder[best] = 0.0;
      --left;
    }
    std::size_t pos = 0;
    for (int s = 0; s < 3; ++s) {
      for (std::size_t k = 0; k < counts[s]; ++k) out.assign(ids[pos++], static_cast<Split>(s));
      global_assigned[s] += static_cast<double>(counts[s]);
    }
  }
  return out;
}

void write_split_csv(std::ostream& out, const SplitAssignment& split) {
  out << "patient_id,split\n";
  for (const auto& [id, s] : split.entries()) out << id << ',' << to_string(s) << '\n';
}

void write_split_file(const std::string& path, const SplitAssignment& split) {
  std::ofstream out(path);
  if (!out) fail(ErrorCode::io, "cannot write " + path);
  write_split_csv(out, split);
}

SplitAssignment read_split_file(const std::string& path) {
  const auto table = csv::Table::read_file(path);
  table.require_header({"patient_id", "split"});
  SplitAssignment out;
  for (const auto& row : table.rows()) {
    if (out.find(row.fields[0])) {
      fail(ErrorCode::parse, path + ":" + std::to_string(row.line) + ": duplicate patient " + row.fields[0]);
    }
    try {
      out.assign(row.fields[0], parse_split(row.fields[1]));
    } catch (const Error& e) {
      fail(ErrorCode::parse, path + ":" + std::to_string(row.line) + ": " + e.what());
    }
  }
  return out;
}

// --- visit views -----------------------------------------------------------

Cohort first_visit_view(std::span<const PatientRecord> cohort) {
  Cohort out;
  for (const auto& p : cohort) {
    auto it = std::find_if(p.visits.begin(), p.visits.end(), [](const Visit& v) { return v.eligible(); });
    if (it == p.visits.end()) continue;
    PatientRecord reduced = p;
    reduced.visits = {*it};
    out.push_back(std::move(reduced));
  }
  return out;
}

std::vector<VisitPair> multi_visit_pairs(std::span<const PatientRecord> cohort) {
  std::vector<VisitPair> out;
  for (std::size_t i = 0; i < cohort.size(); ++i) {
    std::vector<std::size_t> eligible;
    for (std::size_t k = 0; k < cohort[i].visits.size() && eligible.size() < 2; ++k) {
      if (cohort[i].visits[k].eligible()) eligible.push_back(k);
    }
    if (eligible.size() == 2) out.push_back(VisitPair{i, eligible[0], eligible[1]});
  }
  return out;
}

// --- metadata features -----------------------------------------------------

std::vector<std::string> metadata_feature_names(std::span<const std::string> levels) {
  std::vector<std::string> names = {"sex_male", "age"};
  for (const auto& l : levels) names.push_back("ethnicity_" + l);
  for (const char* n : {"smoker", "sbp", "dbp", "pulse", "height", "weight", "bmi"}) names.emplace_back(n);
  return names;
}

std::vector<double> metadata_features(const PatientRecord& p, std::span<const std::string> levels) {
  std::vector<double> row = {p.sex == Sex::male ? 1.0 : 0.0, p.age};
  for (const auto& l : levels) row.push_back(p.ethnicity == l ? 1.0 : 0.0);
  row.insert(row.end(), {p.smoker ? 1.0 : 0.0, p.sbp, p.dbp, p.pulse, p.height, p.weight, p.bmi});
  return row;
}

std::vector<std::string> ethnicity_levels(std::span<const PatientRecord> cohort) {
  std::set<std::string> levels;
  for (const auto& p : cohort) levels.insert(p.ethnicity);
  return {levels.begin(), levels.end()};
}

std::string visit_id(const std::string& patient_id, int visit_index) {
  return patient_id + "_v" + std::to_string(visit_index);
}

}  // namespace fundascreen::cohort
