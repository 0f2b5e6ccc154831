#include <filesystem>
#include <fstream>

#include "fundascreen/error.hpp"
#include "fundascreen/models.hpp"
#include "fundascreen/parallel.hpp"
#include "fundascreen/rng.hpp"

namespace fundascreen::models {

namespace fs = std::filesystem;

ModelBundle train_bundle(Family family, const PreparedData& data, const PipelineConfig& config) {
  ModelBundle bundle;
  bundle.family = family;
  bundle.task = data.task;
  bundle.ethnicity_levels = data.ethnicity_levels;
  bundle.metadata_std = data.metadata_std;
  bundle.target_std = data.target_std;

  if (family == Family::metadata_only) {
    if (data.task.kind == TaskKind::regression) {
      bundle.baseline = fit_metadata_regression(data.train.metadata, data.train.targets);
    } else {
      bundle.baseline = fit_metadata_logistic(data.train.metadata, data.train.labels, config.logistic);
    }
    return bundle;
  }

  if (config.ensemble < 1) fail(ErrorCode::config, "ensemble size must be at least 1");
  const auto n = static_cast<std::size_t>(config.ensemble);
  bundle.members.resize(n);
  bundle.member_seeds.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    bundle.member_seeds[i] = derive_seed(config.root_seed, "train/" + std::string(to_string(family)) + "/" +
                                                               data.task.name() + "/member" + std::to_string(i));
  }
  bundle.architecture = member_architecture(family, data);
  parallel_for(n, config.jobs, [&](std::size_t i) {
    MemberOptions options;
    options.schedule = config.schedule;
    options.augment = config.augment;
    options.seed = bundle.member_seeds[i];
    try {
      bundle.members[i] = train_member(family, data, options).checkpoint;
    } catch (const Error& e) {
      fail(e.code(), "member " + std::to_string(i) + ": " + e.what());
    }
  });
  return bundle;
}

std::vector<PipelineOutput> train_pipeline(const cohort::Cohort& cohort, const cohort::SplitAssignment& split,
                                           const PipelineConfig& config, const std::string& out_dir) {
  if (config.tasks.empty()) fail(ErrorCode::config, "no tasks requested");
  cohort::Cohort validation_patients;
  for (const auto& p : cohort) {
    if (split.find(p.patient_id) == cohort::Split::validation) validation_patients.push_back(p);
  }

  std::vector<PipelineOutput> outputs;
  for (const auto& task : config.tasks) {
    const PreparedData data = prepare_data(cohort, split, task);
    for (Family family : config.families) {
      const std::string stem = std::string(to_string(family)) + "_" + task.name();
      PipelineOutput out{family, task, (fs::path(out_dir) / "bundles" / stem).string(),
                         (fs::path(out_dir) / "predictions" / (stem + ".csv")).string(), ""};
      const ModelBundle bundle = train_bundle(family, data, config);
      bundle.save(out.bundle_dir);

      const Predictor predictor(bundle);
      const SplitData& val = data.validation;
      std::vector<PatientPrediction> preds(val.patients.size());
      parallel_for(preds.size(), config.jobs,
                   [&](std::size_t i) { preds[i] = predictor.predict(val.patients[i], val.visit(i)); });

      fs::create_directories(fs::path(out.predictions_path).parent_path());
      std::ofstream pf(out.predictions_path);
      if (!pf) fail(ErrorCode::io, "cannot write " + out.predictions_path);
      write_predictions(pf, bundle, preds);
      if (!pf) fail(ErrorCode::io, "failed writing " + out.predictions_path);

      if (task.kind == TaskKind::regression) {
        out.pairs_path = (fs::path(out_dir) / "predictions" / (stem + "_pairs.csv")).string();
        std::ofstream qf(out.pairs_path);
        if (!qf) fail(ErrorCode::io, "cannot write " + out.pairs_path);
        write_pair_predictions(qf, bundle, predictor, validation_patients);
        if (!qf) fail(ErrorCode::io, "failed writing " + out.pairs_path);
      }
      outputs.push_back(std::move(out));
    }
  }
  return outputs;
}

}  // namespace fundascreen::models
