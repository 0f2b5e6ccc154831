#include <cmath>
#include <filesystem>
#include <fstream>
#include <ostream>

#include "fundascreen/csv.hpp"
#include "fundascreen/error.hpp"
#include "fundascreen/models.hpp"
#include "fundascreen/tensornet/loss.hpp"

namespace fundascreen::models {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

json standardizer_json(const cohort::Standardizer& s) {
  json retained = json::array();
  for (const auto& f : s.retained()) retained.push_back({{"name", f.name}, {"mean", f.mean}, {"sd", f.sd}});
  return {{"input_names", s.input_names()}, {"retained", retained}, {"dropped", s.dropped()}};
}

cohort::Standardizer standardizer_from(const json& j) {
  std::vector<cohort::Standardizer::Feature> retained;
  for (const auto& f : j.at("retained")) {
    retained.push_back({f.at("name").get<std::string>(), f.at("mean").get<double>(), f.at("sd").get<double>()});
  }
  return cohort::Standardizer::from_parts(j.at("input_names").get<std::vector<std::string>>(), std::move(retained),
                                          j.at("dropped").get<std::vector<std::string>>());
}

std::string member_file(std::size_t i) { return "member" + std::to_string(i) + ".fsck"; }

}  // namespace

void ModelBundle::validate() const {
  task.validate();
  if (family == Family::metadata_only) {
    const auto outputs = task.kind == TaskKind::classification ? 1u : task.targets.size();
    if (baseline.weights.size() != outputs || baseline.intercepts.size() != outputs) {
      fail(ErrorCode::invalid_argument, "baseline weights do not match the task");
    }
    return;
  }
  if (members.empty()) fail(ErrorCode::invalid_argument, "network bundle needs at least one member");
  if (member_seeds.size() != members.size()) fail(ErrorCode::invalid_argument, "one seed per member required");
  if (architecture.layers.empty() || architecture.layers.back().units != task.outputs()) {
    fail(ErrorCode::invalid_argument, "architecture head does not match the task");
  }
}

void ModelBundle::save(const std::string& dir) const {
  validate();
  fs::create_directories(dir);
  json j;
  j["family"] = std::string(to_string(family));
  j["task"] = task;
  j["ethnicity_levels"] = ethnicity_levels;
  j["metadata_standardizer"] = standardizer_json(metadata_std);
  j["target_standardizer"] = standardizer_json(target_std);
  if (family == Family::metadata_only) {
    j["baseline"] = {{"weights", baseline.weights}, {"intercepts", baseline.intercepts}, {"warnings", baseline.warnings}};
  } else {
    j["architecture"] = architecture;
    json ms = json::array();
    for (std::size_t i = 0; i < members.size(); ++i) {
      ms.push_back({{"seed", member_seeds[i]}, {"checkpoint", member_file(i)}});
      nn::write_checkpoint_file((fs::path(dir) / member_file(i)).string(), members[i]);
    }
    j["members"] = ms;
  }
  const auto path = (fs::path(dir) / "bundle.json").string();
  std::ofstream out(path);
  if (!out) fail(ErrorCode::io, "cannot write " + path);
  out << j.dump(2) << '\n';
  if (!out) fail(ErrorCode::io, "failed writing " + path);
}

ModelBundle ModelBundle::load(const std::string& dir) {
  const auto path = (fs::path(dir) / "bundle.json").string();
  std::ifstream in(path);
  if (!in) fail(ErrorCode::missing_input, "cannot open " + path);
  ModelBundle b;
  try {
    const json j = json::parse(in);
    b.family = parse_family(j.at("family").get<std::string>());
    b.task = j.at("task").get<TaskSpec>();
    b.ethnicity_levels = j.at("ethnicity_levels").get<std::vector<std::string>>();
    b.metadata_std = standardizer_from(j.at("metadata_standardizer"));
    b.target_std = standardizer_from(j.at("target_standardizer"));
    if (b.family == Family::metadata_only) {
      const auto& bl = j.at("baseline");
      b.baseline.weights = bl.at("weights").get<std::vector<std::vector<double>>>();
      b.baseline.intercepts = bl.at("intercepts").get<std::vector<double>>();
      b.baseline.warnings = bl.at("warnings").get<std::vector<std::string>>();
    } else {
      b.architecture = j.at("architecture").get<nn::Architecture>();
      for (const auto& m : j.at("members")) {
        b.member_seeds.push_back(m.at("seed").get<std::uint64_t>());
        b.members.push_back(nn::read_checkpoint_file((fs::path(dir) / m.at("checkpoint").get<std::string>()).string()));
      }
    }
  } catch (const json::exception& e) {
    fail(ErrorCode::parse, path + ": " + e.what());
  }
  b.validate();
  return b;
}

std::vector<double> aggregate(const std::vector<EyeProvenance>& eyes) {
  if (eyes.empty()) fail(ErrorCode::invalid_argument, "aggregate needs at least one eye");
  std::vector<double> out(eyes.front().mean.size(), 0.0);
  for (const auto& e : eyes) {
    for (std::size_t k = 0; k < out.size(); ++k) out[k] += e.mean[k];
  }
  for (double& v : out) v /= static_cast<double>(eyes.size());
  return out;
}

Predictor::Predictor(const ModelBundle& bundle) : bundle_(&bundle) {
  bundle.validate();
  for (const auto& ckpt : bundle.members) {
    nn::Network net(bundle.architecture, 0);
    nn::load_parameters(net, ckpt, true);
    nets_.push_back(std::move(net));
  }
}

PatientPrediction Predictor::predict(const cohort::PatientRecord& patient, const cohort::Visit& visit,
                                     const ImageTransform& transform) const {
  const ModelBundle& b = *bundle_;
  PatientPrediction pred;
  pred.patient_id = patient.patient_id;
  pred.visit_index = visit.visit_index;

  const auto raw = cohort::metadata_features(patient, b.ethnicity_levels);
  const auto names = cohort::metadata_feature_names(b.ethnicity_levels);
  for (std::size_t j = 0; j < raw.size(); ++j) {
    if (!std::isfinite(raw[j])) fail(ErrorCode::missing_input, patient.patient_id + ": metadata field '" + names[j] + "' is absent");
  }
  const std::vector<double> x = b.metadata_std.apply(raw);

  if (b.family == Family::metadata_only) {
    if (b.task.kind == TaskKind::classification) {
      const double p = sigmoid(b.baseline.predict(0, x));
      pred.values = {1.0 - p, p};
    } else {
      for (std::size_t k = 0; k < b.task.targets.size(); ++k) pred.values.push_back(b.baseline.predict(k, x));
    }
    return pred;
  }

  if (visit.eyes.empty()) {
    fail(ErrorCode::missing_input, visit.visit_id + ": field 'image_path' is absent; " + std::string(to_string(b.family)) +
                                       " needs at least one eye image");
  }
  for (const auto& eye : visit.eyes) {
    if (eye.image.side <= 0) fail(ErrorCode::missing_input, visit.visit_id + ": image " + eye.image_path + " not loaded");
    EyeProvenance prov;
    prov.eye = eye.eye;
    const nn::Tensor input = eye_input(eye.image, transform);
    for (const auto& net : nets_) {
      std::vector<double> out = net.has_side_input() ? net.predict(input, x) : net.predict(input);
      if (b.task.kind == TaskKind::classification) {
        out = nn::softmax(out);
      } else {
        out = b.target_std.invert(out);
      }
      prov.member_outputs.push_back(std::move(out));
    }
    prov.mean.assign(prov.member_outputs.front().size(), 0.0);
    for (const auto& m : prov.member_outputs) {
      for (std::size_t k = 0; k < m.size(); ++k) prov.mean[k] += m[k];
    }
    for (double& v : prov.mean) v /= static_cast<double>(prov.member_outputs.size());
    pred.eyes.push_back(std::move(prov));
  }
  pred.values = aggregate(pred.eyes);
  return pred;
}

PatientPrediction predict_patient(const ModelBundle& bundle, const cohort::PatientRecord& patient,
                                  const cohort::Visit& visit) {
  return Predictor(bundle).predict(patient, visit);
}

void write_predictions(std::ostream& out, const ModelBundle& bundle, const std::vector<PatientPrediction>& preds) {
  out << csv::join(kPredictionsHeader) << '\n';
  const std::string family(to_string(bundle.family));
  const std::string task = bundle.task.name();
  for (const auto& p : preds) {
    if (bundle.task.kind == TaskKind::classification) {
      out << p.patient_id << ',' << family << ',' << task << ',' << bundle.task.targets[0] << ','
          << csv::format_double(p.values.at(1)) << '\n';
    } else {
      for (std::size_t k = 0; k < bundle.task.targets.size(); ++k) {
        out << p.patient_id << ',' << family << ',' << task << ',' << bundle.task.targets[k] << ','
            << csv::format_double(p.values.at(k)) << '\n';
      }
    }
  }
}

void write_pair_predictions(std::ostream& out, const ModelBundle& bundle, const Predictor& predictor,
                            const cohort::Cohort& validation_patients) {
  out << csv::join(kPairsHeader) << '\n';
  if (bundle.task.kind != TaskKind::regression) return;
  const std::string family(to_string(bundle.family));
  const std::string task = bundle.task.name();
  for (const auto& pair : cohort::multi_visit_pairs(validation_patients)) {
    const auto& patient = validation_patients[pair.patient];
    const auto& v1 = patient.visits[pair.first];
    const auto& v2 = patient.visits[pair.second];
    const auto p1 = predictor.predict(patient, v1);
    const auto p2 = predictor.predict(patient, v2);
    for (std::size_t k = 0; k < bundle.task.targets.size(); ++k) {
      const auto& target = bundle.task.targets[k];
      const auto t1 = regression_value(v1, target);
      const auto t2 = regression_value(v2, target);
      if (!t1 || !t2) continue;
      out << patient.patient_id << ',' << family << ',' << task << ',' << target << ',' << v1.visit_index << ','
          << csv::format_double(*t1) << ',' << csv::format_double(p1.values[k]) << '\n';
      out << patient.patient_id << ',' << family << ',' << task << ',' << target << ',' << v2.visit_index << ','
          << csv::format_double(*t2) << ',' << csv::format_double(p2.values[k]) << '\n';
    }
  }
}

}  // namespace fundascreen::models
