#include <map>
#include <tuple>
#include <ostream>

#include "fundascreen/cohort.hpp"
#include "fundascreen/csv.hpp"
#include "fundascreen/error.hpp"

namespace fundascreen::cohort {

namespace {

std::string opt(const std::optional<double>& v) { return v ? csv::format_double(*v) : std::string(); }

std::string located(const csv::Table& t, const csv::Row& row, const std::string& what) {
  return t.source() + ":" + std::to_string(row.line) + ": " + what;
}

}  // namespace

void write_manifest(std::ostream& out, const Cohort& cohort) {
  out << csv::join(kManifestHeader) << '\n';
  for (const auto& p : cohort) {
    const std::string prefix = p.patient_id;
    for (const auto& v : p.visits) {
      std::vector<std::string> base = {p.patient_id,
                                       std::to_string(v.visit_index),
                                       std::string(to_string(p.sex)),
                                       csv::format_double(p.age),
                                       p.ethnicity,
                                       p.smoker ? "1" : "0",
                                       csv::format_double(p.sbp),
                                       csv::format_double(p.dbp),
                                       csv::format_double(p.pulse),
                                       csv::format_double(p.height),
                                       csv::format_double(p.weight),
                                       csv::format_double(p.bmi),
                                       opt(v.hb),
                                       opt(v.hct),
                                       opt(v.rbc)};
      if (v.eyes.empty()) {
        out << csv::join(base) << ",,\n";
        continue;
      }
      for (const auto& e : v.eyes) {
        out << csv::join(base) << ',' << to_string(e.eye) << ',' << e.image_path << '\n';
      }
    }
  }
}

void write_extra_cbc(std::ostream& out, const Cohort& cohort) {
  out << csv::join(kExtraCbcHeader) << '\n';
  for (const auto& p : cohort) {
    for (const auto& v : p.visits) {
      for (const auto& c : v.extra_cbc) {
        out << p.patient_id << ',' << v.visit_index << ',' << c.name << ',' << csv::format_double(c.value) << ','
            << c.unit << '\n';
      }
    }
  }
}

Cohort read_manifest(std::istream& in, const std::string& source) {
  const auto t = csv::Table::parse(in, source);
  t.require_header(kManifestHeader);
  Cohort cohort;
  std::map<std::string, std::size_t> index;
  for (const auto& row : t.rows()) {
    const auto& f = row.fields;
    try {
      PatientRecord p;
      p.patient_id = f[0];
      if (p.patient_id.empty()) fail(ErrorCode::parse, "empty patient_id");
      const int visit_index = static_cast<int>(t.integer(row, 1));
      p.sex = parse_sex(f[2]);
      p.age = t.number(row, 3);
      p.ethnicity = f[4];
      if (f[5] != "0" && f[5] != "1") fail(ErrorCode::parse, "smoker must be 0 or 1");
      p.smoker = f[5] == "1";
      p.sbp = t.number(row, 6);
      p.dbp = t.number(row, 7);
      p.pulse = t.number(row, 8);
      p.height = t.number(row, 9);
      p.weight = t.number(row, 10);
      p.bmi = t.number(row, 11);

      auto it = index.find(p.patient_id);
      if (it == index.end()) {
        it = index.emplace(p.patient_id, cohort.size()).first;
        cohort.push_back(p);
      } else {
        auto& existing = cohort[it->second];
        auto meta_of = [](const PatientRecord& r) {
          return std::tie(r.sex, r.age, r.ethnicity, r.smoker, r.sbp, r.dbp, r.pulse, r.height, r.weight, r.bmi);
        };
        if (meta_of(existing) != meta_of(p)) fail(ErrorCode::parse, "patient metadata differs between rows");
      }
      auto& patient = cohort[it->second];
      Visit* visit = nullptr;
      if (!patient.visits.empty() && patient.visits.back().visit_index == visit_index) {
        visit = &patient.visits.back();
        if (visit->hb != t.optional_number(row, 12) || visit->hct != t.optional_number(row, 13) ||
            visit->rbc != t.optional_number(row, 14)) {
          fail(ErrorCode::parse, "blood values differ between rows of one visit");
        }
      } else {
        if (!patient.visits.empty() && patient.visits.back().visit_index >= visit_index) {
          fail(ErrorCode::parse, "visit rows out of order");
        }
        Visit v;
        v.visit_index = visit_index;
        v.visit_id = visit_id(patient.patient_id, visit_index);
        v.hb = t.optional_number(row, 12);
        v.hct = t.optional_number(row, 13);
        v.rbc = t.optional_number(row, 14);
        patient.visits.push_back(std::move(v));
        visit = &patient.visits.back();
      }
      if (f[15].empty() != f[16].empty()) fail(ErrorCode::parse, "eye and image_path must both be set or both empty");
      if (!f[15].empty()) {
        EyeImage e;
        e.eye = parse_eye(f[15]);
        e.image_path = f[16];
        visit->eyes.push_back(std::move(e));
        if (visit->eyes.size() > 2) fail(ErrorCode::parse, "more than two eye rows for one visit");
      }
    } catch (const Error& e) {
      if (std::string(e.what()).starts_with(source)) throw;
      fail(ErrorCode::parse, located(t, row, e.what()));
    }
  }
  return cohort;
}

void read_extra_cbc(std::istream& in, const std::string& source, Cohort& cohort) {
  const auto t = csv::Table::parse(in, source);
  t.require_header(kExtraCbcHeader);
  std::map<std::pair<std::string, int>, Visit*> visits;
  for (auto& p : cohort) {
    for (auto& v : p.visits) visits[{p.patient_id, v.visit_index}] = &v;
  }
  for (const auto& row : t.rows()) {
    const auto key = std::make_pair(row.fields[0], static_cast<int>(t.integer(row, 1)));
    auto it = visits.find(key);
    if (it == visits.end()) fail(ErrorCode::parse, located(t, row, "unknown visit " + key.first + "/" + row.fields[1]));
    it->second->extra_cbc.push_back(CbcComponent{row.fields[2], t.number(row, 3), row.fields[4]});
  }
}

}  // namespace fundascreen::cohort
