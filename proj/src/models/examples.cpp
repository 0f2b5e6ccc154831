#include "fundascreen/error.hpp"
#include "fundascreen/models.hpp"

namespace fundascreen::models {

namespace {

// First eligible visit carrying every target of the task.
const cohort::Visit* select_visit(const cohort::PatientRecord& p, const TaskSpec& task) {
  for (const auto& v : p.visits) {
    if (!v.eligible()) continue;
    if (task.kind == TaskKind::regression) {
      bool all = true;
      for (const auto& t : task.targets) all = all && regression_value(v, t).has_value();
      if (!all) continue;
    }
    return &v;
  }
  return nullptr;
}

}  // namespace

PreparedData prepare_data(const cohort::Cohort& cohort, const cohort::SplitAssignment& split, const TaskSpec& task) {
  task.validate();
  PreparedData data;
  data.task = task;

  for (const auto& p : cohort) {
    const auto s = split.find(p.patient_id);
    if (!s) fail(ErrorCode::missing_input, "patient " + p.patient_id + " is missing from the split file");
    const cohort::Visit* v = select_visit(p, task);
    if (v == nullptr) continue;
    SplitData& dst = *s == cohort::Split::train ? data.train : *s == cohort::Split::tune ? data.tune : data.validation;
    cohort::PatientRecord copy = p;
    copy.visits = {*v};
    dst.patients.push_back(std::move(copy));
  }
  if (data.train.patients.empty()) fail(ErrorCode::missing_input, "train split has no eligible patients for " + task.name());
  if (data.tune.patients.empty()) fail(ErrorCode::missing_input, "tune split has no eligible patients for " + task.name());

  data.ethnicity_levels = cohort::ethnicity_levels(data.train.patients);
  const auto names = cohort::metadata_feature_names(data.ethnicity_levels);
  std::vector<std::vector<double>> columns(names.size());
  for (const auto& p : data.train.patients) {
    const auto row = cohort::metadata_features(p, data.ethnicity_levels);
    for (std::size_t j = 0; j < row.size(); ++j) columns[j].push_back(row[j]);
  }
  data.metadata_std = cohort::Standardizer::fit(names, columns);

  if (task.kind == TaskKind::regression) {
    std::vector<std::vector<double>> tcols(task.targets.size());
    for (const auto& p : data.train.patients) {
      for (std::size_t k = 0; k < task.targets.size(); ++k) {
        tcols[k].push_back(*regression_value(p.visits.front(), task.targets[k]));
      }
    }
    data.target_std = cohort::Standardizer::fit(task.targets, tcols);
    if (data.target_std.dimension() != task.targets.size()) {
      fail(ErrorCode::invalid_argument, "a regression target has zero variance on the train split");
    }
  }

  for (SplitData* sd : {&data.train, &data.tune, &data.validation}) {
    for (std::size_t i = 0; i < sd->patients.size(); ++i) {
      const auto& p = sd->patients[i];
      const auto& v = p.visits.front();
      sd->metadata.push_back(data.metadata_std.apply(cohort::metadata_features(p, data.ethnicity_levels)));
      if (task.kind == TaskKind::regression) {
        std::vector<double> t;
        for (const auto& name : task.targets) t.push_back(*regression_value(v, name));
        sd->targets_z.push_back(data.target_std.apply(t));
        sd->targets.push_back(std::move(t));
      } else {
        sd->labels.push_back(*class_label(p, v, task.targets[0]));
      }
      for (std::size_t e = 0; e < v.eyes.size(); ++e) sd->eyes.push_back({i, e, v.eyes[e].eye});
    }
  }
  return data;
}

}  // namespace fundascreen::models
