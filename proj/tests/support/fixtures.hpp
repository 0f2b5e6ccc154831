#pragma once

// Small builders shared by the unit suites.

#include <atomic>
#include <filesystem>
#include <string>

#include "fundascreen/cohort.hpp"
#include "fundascreen/rng.hpp"

namespace fixture {

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("fundascreen_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::string str(const std::string& child = "") const { return child.empty() ? path_.string() : (path_ / child).string(); }

 private:
  std::filesystem::path path_;
};

inline fundascreen::cohort::Visit visit(int index, double hb, int eyes = 2) {
  fundascreen::cohort::Visit v;
  v.visit_index = index;
  v.hb = hb;
  v.hct = 3.0 * hb;
  v.rbc = 0.33 * hb;
  for (int e = 0; e < eyes; ++e) {
    fundascreen::cohort::EyeImage img;
    img.eye = e == 0 ? fundascreen::cohort::Eye::left : fundascreen::cohort::Eye::right;
    img.image_path = "images/x.ppm";
    v.eyes.push_back(img);
  }
  return v;
}

inline fundascreen::cohort::PatientRecord patient(const std::string& id, fundascreen::cohort::Sex sex, double age) {
  fundascreen::cohort::PatientRecord p;
  p.patient_id = id;
  p.sex = sex;
  p.age = age;
  p.ethnicity = "white";
  p.sbp = 130;
  p.dbp = 80;
  p.pulse = 70;
  p.height = 170;
  p.weight = 70;
  p.bmi = 70.0 / (1.7 * 1.7);
  return p;
}

// Cohort with uniform ages in [40, 70) and alternating sex.
inline fundascreen::cohort::Cohort simple_cohort(int n, std::uint64_t seed) {
  fundascreen::Rng rng(seed);
  fundascreen::cohort::Cohort c;
  for (int i = 0; i < n; ++i) {
    auto p = patient("P" + std::to_string(i), i % 2 ? fundascreen::cohort::Sex::male : fundascreen::cohort::Sex::female,
                     rng.uniform(40.0, 70.0));
    p.visits.push_back(visit(0, rng.normal(14.0, 1.2)));
    c.push_back(std::move(p));
  }
  return c;
}

}  // namespace fixture
