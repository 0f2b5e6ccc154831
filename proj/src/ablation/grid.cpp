#include <algorithm>
#include <fstream>
#include <ostream>

#include "fundascreen/ablation.hpp"
#include "fundascreen/csv.hpp"
#include "fundascreen/error.hpp"
#include "fundascreen/metrics.hpp"
#include "fundascreen/parallel.hpp"
#include "fundascreen/rng.hpp"

namespace fundascreen::ablation {

using nlohmann::json;

const ArmResult* AblationReport::find(const AblationSpec& spec) const {
  for (const auto& a : arms) {
    if (a.spec == spec) return &a;
  }
  return nullptr;
}

std::uint64_t arm_seed(const AblationSpec& spec, std::uint64_t root_seed, int index) {
  return derive_seed(root_seed, "ablation/" + spec.label()) + static_cast<std::uint64_t>(index);
}

AblationReport run_ablation_grid(const cohort::Cohort& cohort, const cohort::SplitAssignment& split,
                                 const models::TaskSpec& task, std::vector<AblationSpec> specs,
                                 const GridOptions& options) {
  if (task.kind != models::TaskKind::classification) {
    fail(ErrorCode::config, "ablation grid needs a classification task, got " + task.name());
  }
  if (options.seeds_per_arm < 1) fail(ErrorCode::config, "seeds_per_arm must be at least 1");
  for (const auto& s : specs) s.validate();
  if (std::none_of(specs.begin(), specs.end(), [](const AblationSpec& s) { return s.kind == Kind::none; })) {
    specs.insert(specs.begin(), AblationSpec::none());
  }

  const models::PreparedData data = models::prepare_data(cohort, split, task);
  if (data.validation.eyes.empty()) fail(ErrorCode::missing_input, "validation split has no eye images");
  const int side = data.train.image(data.train.eyes.front()).side;
  std::vector<int> eye_labels;
  for (const auto& e : data.validation.eyes) eye_labels.push_back(data.validation.labels[e.patient]);

  AblationReport report;
  report.task = task;
  const auto seeds = static_cast<std::size_t>(options.seeds_per_arm);
  report.arms.resize(specs.size());
  for (std::size_t a = 0; a < specs.size(); ++a) {
    report.arms[a].spec = specs[a];
    report.arms[a].seeds.resize(seeds);
  }

  parallel_for(specs.size() * seeds, options.jobs, [&](std::size_t job) {
    const std::size_t a = job / seeds;
    const std::size_t s = job % seeds;
    const AblationSpec& spec = specs[a];
    ArmSeedResult& out = report.arms[a].seeds[s];
    out.seed_index = static_cast<int>(s);
    out.seed = arm_seed(spec, options.root_seed, static_cast<int>(s));
    try {
      models::MemberOptions mo;
      mo.schedule = options.schedule;
      mo.augment = options.augment;
      mo.seed = out.seed;
      mo.transform = make_transform(spec, side);
      out.train_hash = spec.hash();
      const auto member = models::train_member(models::Family::fundus_only, data, mo);

      nn::Network net(member.architecture, 0);
      nn::load_parameters(net, member.checkpoint, true);
      const auto eval_transform = make_transform(spec, side);
      out.eval_hash = spec.hash();
      const auto outputs = models::eye_outputs(net, task, data.validation, eval_transform);
      std::vector<double> scores;
      scores.reserve(outputs.size());
      for (const auto& o : outputs) scores.push_back(o[0]);
      out.auc = metrics::auc_value(scores, eye_labels);
      if (!out.auc) out.error = "validation split lacks one class";
    } catch (const std::exception& e) {
      out.error = e.what();
    }
  });

  for (auto& arm : report.arms) {
    double sum = 0.0;
    bool ok = true;
    for (const auto& s : arm.seeds) {
      if (!s.auc) {
        ok = false;
        if (arm.error.empty()) arm.error = "seed " + std::to_string(s.seed_index) + ": " + s.error;
      } else {
        sum += *s.auc;
      }
    }
    if (ok) arm.mean_auc = sum / static_cast<double>(arm.seeds.size());
    if (arm.spec.kind == Kind::none) report.baseline_mean_auc = arm.mean_auc;
  }
  for (auto& arm : report.arms) {
    if (arm.mean_auc && report.baseline_mean_auc) arm.delta = *report.baseline_mean_auc - *arm.mean_auc;
  }
  return report;
}

void write_ablation_report(std::ostream& out, const AblationReport& report) {
  out << "kind,param,seed,auc\n";
  const auto param = [](const AblationSpec& s) { return csv::format_double(s.parameter()); };
  for (const auto& arm : report.arms) {
    for (const auto& s : arm.seeds) {
      out << to_string(arm.spec.kind) << ',' << param(arm.spec) << ',' << s.seed_index << ','
          << (s.auc ? csv::format_double(*s.auc) : std::string()) << '\n';
    }
  }
  for (const auto& arm : report.arms) {
    out << to_string(arm.spec.kind) << ',' << param(arm.spec) << ",mean,"
        << (arm.mean_auc ? csv::format_double(*arm.mean_auc) : std::string()) << '\n';
    out << to_string(arm.spec.kind) << ',' << param(arm.spec) << ",delta,"
        << (arm.delta ? csv::format_double(*arm.delta) : std::string()) << '\n';
  }
}

json ablation_manifest(const AblationReport& report) {
  json arms = json::array();
  for (const auto& arm : report.arms) {
    json seeds = json::array();
    for (const auto& s : arm.seeds) {
      json js = {{"seed_index", s.seed_index}, {"seed", s.seed}, {"train_hash", s.train_hash},
                 {"eval_hash", s.eval_hash}};
      if (!s.error.empty()) js["error"] = s.error;
      seeds.push_back(js);
    }
    json ja = {{"spec", arm.spec}, {"label", arm.spec.label()}, {"seeds", seeds}};
    if (!arm.error.empty()) ja["error"] = arm.error;
    arms.push_back(ja);
  }
  return {{"task", report.task}, {"arms", arms}};
}

std::vector<AblationSpec> read_grid_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::missing_input, "cannot open grid config " + path);
  try {
    json j = json::parse(in);
    if (j.is_object()) j = j.at("specs");
    return j.get<std::vector<AblationSpec>>();
  } catch (const json::exception& e) {
    fail(ErrorCode::parse, path + ": " + e.what());
  }
}

}  // namespace fundascreen::ablation
