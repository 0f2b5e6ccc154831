#include <filesystem>
#include <fstream>

#include "fundascreen/csv.hpp"
#include "fundascreen/error.hpp"
#include "fundascreen/synthgen.hpp"

namespace fundascreen::synthgen {

namespace fs = std::filesystem;

namespace {

std::ofstream open_out(const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorCode::io, "cannot write " + path.string());
  return out;
}

}  // namespace

void write_dataset(const cohort::Cohort& cohort, const std::string& dir) {
  const fs::path root(dir);
  std::error_code ec;
  fs::create_directories(root / "images", ec);
  if (ec) fail(ErrorCode::io, "cannot create " + (root / "images").string() + ": " + ec.message());
  for (const auto& p : cohort) {
    for (const auto& v : p.visits) {
      for (const auto& e : v.eyes) {
        if (e.image.side == 0) fail(ErrorCode::invalid_argument, "image for " + e.image_path + " was never rendered");
        write_ppm_file((root / e.image_path).string(), e.image);
      }
    }
  }
  {
    auto out = open_out(root / "manifest.csv");
    cohort::write_manifest(out, cohort);
  }
  {
    auto out = open_out(root / "cbc_extra.csv");
    cohort::write_extra_cbc(out, cohort);
  }
}

void write_dataset(const SyntheticCohort& data, const GeneratorConfig& config, const std::string& dir) {
  write_dataset(data.patients, dir);
  nlohmann::json side;
  side["config"] = config;
  auto& lat = side["latents"] = nlohmann::json::array();
  for (const auto& l : data.latents) {
    lat.push_back({{"patient_id", l.patient_id},
                   {"visit_index", l.visit_index},
                   {"eye", cohort::to_string(l.eye)},
                   {"true_hb", l.true_hb},
                   {"nuisance_offset", l.nuisance_offset},
                   {"jitter_seed", l.jitter_seed}});
  }
  auto out = open_out(fs::path(dir) / "generator.json");
  out << side.dump(1) << '\n';
}

cohort::Cohort read_dataset(const std::string& dir) {
  const fs::path root(dir);
  const fs::path manifest = root / "manifest.csv";
  std::ifstream in(manifest);
  if (!in) fail(ErrorCode::missing_input, "cannot open " + manifest.string());
  cohort::Cohort cohort = cohort::read_manifest(in, manifest.string());

  const fs::path extra = root / "cbc_extra.csv";
  if (fs::exists(extra)) {
    std::ifstream ein(extra);
    cohort::read_extra_cbc(ein, extra.string(), cohort);
  }

  int side = -1;
  for (auto& p : cohort) {
    for (auto& v : p.visits) {
      for (auto& e : v.eyes) {
        const fs::path path = root / e.image_path;
        if (!fs::exists(path)) {
          fail(ErrorCode::missing_input, manifest.string() + ": image_path '" + e.image_path + "' of " + v.visit_id +
                                             " does not exist (" + path.string() + ")");
        }
        e.image = read_ppm_file(path.string());
        if (side < 0) side = e.image.side;
        if (e.image.side != side) {
          fail(ErrorCode::parse, path.string() + ": image side " + std::to_string(e.image.side) +
                                     " differs from dataset side " + std::to_string(side));
        }
      }
    }
    cohort::validate(p);
  }
  return cohort;
}

GeneratorSidecar read_generator_sidecar(const std::string& dir) {
  const fs::path path = fs::path(dir) / "generator.json";
  std::ifstream in(path);
  if (!in) fail(ErrorCode::missing_input, "cannot open " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::parse, path.string() + ": " + e.what());
  }
  GeneratorSidecar out;
  out.config = j.at("config").get<GeneratorConfig>();
  for (const auto& l : j.at("latents")) {
    VisitLatent v;
    v.patient_id = l.at("patient_id").get<std::string>();
    v.visit_index = l.at("visit_index").get<int>();
    v.eye = cohort::parse_eye(l.at("eye").get<std::string>());
    v.true_hb = l.at("true_hb").get<double>();
    v.nuisance_offset = l.at("nuisance_offset").get<double>();
    v.jitter_seed = l.at("jitter_seed").get<std::uint64_t>();
    out.latents.push_back(v);
  }
  return out;
}

}  // namespace fundascreen::synthgen
