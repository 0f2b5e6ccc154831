#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "fundascreen/ablation.hpp"
#include "fundascreen/cohort.hpp"
#include "fundascreen/csv.hpp"
#include "fundascreen/error.hpp"
#include "fundascreen/metrics.hpp"
#include "fundascreen/models.hpp"
#include "fundascreen/synthgen.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace fundascreen;

namespace {

constexpr const char* kToolVersion = "0.1.0";

// Everything a subcommand needs, merged from the config file, the
// environment and flags (flags win).
struct RunConfig {
  std::uint64_t root_seed = 0;
  synthgen::GeneratorConfig generator;
  cohort::SplitFractions fractions;
  nn::TrainSchedule schedule;
  nn::AugmentRanges augment;
  std::vector<models::TaskSpec> tasks = {models::TaskSpec::parse("anemia")};
  std::vector<models::Family> families = {models::Family::metadata_only, models::Family::fundus_only,
                                          models::Family::combined};
  int ensemble = 3;
  int bootstrap = 2000;
  std::vector<ablation::AblationSpec> grid;
  int ablation_seeds = 3;
  unsigned jobs = 0;
};

json to_json(const RunConfig& c, const std::string& command, const json& paths) {
  json tasks = json::array();
  for (const auto& t : c.tasks) tasks.push_back(t);
  json families = json::array();
  for (auto f : c.families) families.push_back(std::string(models::to_string(f)));
  json j;
  j["tool"] = "fundascreen";
  j["version"] = kToolVersion;
  j["command"] = command;
  j["paths"] = paths;
  j["seed"] = c.root_seed;
  j["generator"] = c.generator;
  j["split"] = {{"train", c.fractions.train}, {"tune", c.fractions.tune}, {"validation", c.fractions.validation}};
  j["schedule"] = c.schedule;
  j["augment"] = c.augment;
  j["tasks"] = tasks;
  j["families"] = families;
  j["ensemble"] = c.ensemble;
  j["bootstrap"] = c.bootstrap;
  j["ablation_grid"] = c.grid;
  j["ablation_seeds"] = c.ablation_seeds;
  j["jobs"] = c.jobs;
  return j;
}

json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::missing_input, "cannot open " + path);
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    fail(ErrorCode::parse, path + ": " + e.what());
  }
}

void apply_config_file(RunConfig& c, const json& j, const std::string& source) {
  static const std::vector<std::string> known = {"seed",    "generator", "split",     "schedule",      "augment",
                                                 "tasks",   "families",  "ensemble",  "bootstrap",     "ablation_grid",
                                                 "ablation_seeds", "tool", "version", "command", "paths", "jobs"};
  if (!j.is_object()) fail(ErrorCode::config, source + ": config must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    if (std::find(known.begin(), known.end(), key) == known.end()) {
      fail(ErrorCode::config, source + ": unknown config key '" + key + "'");
    }
  }
  try {
    if (j.contains("seed")) c.root_seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("generator")) c.generator = j.at("generator").get<synthgen::GeneratorConfig>();
    if (j.contains("split")) {
      const auto& s = j.at("split");
      c.fractions.train = s.value("train", c.fractions.train);
      c.fractions.tune = s.value("tune", c.fractions.tune);
      c.fractions.validation = s.value("validation", c.fractions.validation);
    }
    if (j.contains("schedule")) c.schedule = j.at("schedule").get<nn::TrainSchedule>();
    if (j.contains("augment")) c.augment = j.at("augment").get<nn::AugmentRanges>();
    if (j.contains("tasks")) c.tasks = j.at("tasks").get<std::vector<models::TaskSpec>>();
    if (j.contains("families")) {
      c.families.clear();
      for (const auto& f : j.at("families")) c.families.push_back(models::parse_family(f.get<std::string>()));
    }
    if (j.contains("ensemble")) c.ensemble = j.at("ensemble").get<int>();
    if (j.contains("bootstrap")) c.bootstrap = j.at("bootstrap").get<int>();
    if (j.contains("ablation_grid")) c.grid = j.at("ablation_grid").get<std::vector<ablation::AblationSpec>>();
    if (j.contains("ablation_seeds")) c.ablation_seeds = j.at("ablation_seeds").get<int>();
  } catch (const json::exception& e) {
    fail(ErrorCode::config, source + ": " + e.what());
  }
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) fail(ErrorCode::io, "cannot write " + path.string());
  out << text;
  if (!out) fail(ErrorCode::io, "failed writing " + path.string());
}

void write_resolved(const fs::path& dir, const RunConfig& c, const std::string& command, const json& paths) {
  write_text(dir / "resolved_config.json", to_json(c, command, paths).dump(2) + "\n");
}

void require_file(const fs::path& path) {
  std::error_code ec;
  if (!fs::is_regular_file(path, ec) || fs::file_size(path, ec) == 0) {
    fail(ErrorCode::io, "expected artifact missing or empty: " + path.string());
  }
}

void log(const std::string& msg) { std::cerr << "[fundascreen] " << msg << std::endl; }

std::vector<models::TaskSpec> parse_tasks(const std::vector<std::string>& texts) {
  std::vector<models::TaskSpec> tasks;
  for (const auto& t : texts) tasks.push_back(models::TaskSpec::parse(t));
  return tasks;
}

// Predictions file -> evaluation directory and reports.
std::vector<metrics::MetricReport> evaluate_file(const fs::path& pred_path, const cohort::Cohort& cohort,
                                                 const metrics::BootstrapOptions& options, const fs::path& out_dir) {
  const auto table = csv::Table::read_file(pred_path.string());
  if (table.rows().empty()) fail(ErrorCode::missing_input, pred_path.string() + ": no prediction rows");
  const fs::path pairs_path = pred_path.parent_path() / (pred_path.stem().string() + "_pairs.csv");
  std::optional<csv::Table> pairs;
  if (fs::exists(pairs_path)) pairs = csv::Table::read_file(pairs_path.string());
  const auto ev = metrics::evaluate_predictions(table, cohort, pairs ? &*pairs : nullptr, options);

  std::ostringstream js;
  metrics::write_reports(js, ev.reports);
  write_text(out_dir / "metrics.json", js.str());
  require_file(out_dir / "metrics.json");
  for (const auto& roc : ev.rocs) {
    std::ostringstream rs;
    metrics::write_roc_csv(rs, roc.curve);
    const fs::path p = out_dir / ("roc_" + roc.family + "_" + roc.target + ".csv");
    write_text(p, rs.str());
    require_file(p);
  }
  return ev.reports;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Anemia screening from fundus images: synthetic data, models, evaluation and ablation."};
  app.require_subcommand(1);
  app.fallthrough();
  app.set_version_flag("--version", kToolVersion);

  std::string config_path;
  std::optional<std::uint64_t> seed_flag;
  unsigned jobs = 0;
  app.add_option("--config", config_path, "JSON run configuration")->check(CLI::ExistingFile);
  app.add_option("--seed", seed_flag, "root seed (default: $FUNDASCREEN_SEED, then the config, then 0)");
  app.add_option("--jobs", jobs, "worker threads (0 = available cores)");

  // synth
  auto* synth = app.add_subcommand("synth", "generate a synthetic dataset");
  std::string synth_out;
  std::optional<int> synth_n, synth_side;
  std::optional<double> synth_nuisance;
  synth->add_option("--out", synth_out, "dataset directory")->required();
  synth->add_option("--n", synth_n, "number of patients");
  synth->add_option("--side", synth_side, "image side in pixels");
  synth->add_option("--nuisance-sd", synth_nuisance, "patient-specific offset sd (g/dL)");

  // split
  auto* split_cmd = app.add_subcommand("split", "assign patients to train/tune/validation");
  std::string split_data, split_out;
  split_cmd->add_option("--data", split_data, "dataset directory")->required();
  split_cmd->add_option("--out", split_out, "split CSV (default DATA/split.csv)");

  // train
  auto* train = app.add_subcommand("train", "train model bundles and write validation predictions");
  std::string train_data, train_split, train_run = "run", train_family;
  std::vector<std::string> train_tasks;
  std::optional<int> train_ensemble;
  std::optional<int> train_epochs;
  train->add_option("--data", train_data, "dataset directory")->required();
  train->add_option("--split", train_split, "split CSV (default DATA/split.csv)");
  train->add_option("--family", train_family, "metadata_only, fundus_only, combined or all");
  train->add_option("--task", train_tasks, "task(s): anemia, moderate, approximate, hb, cbc, ...")->delimiter(',');
  train->add_option("--ensemble", train_ensemble, "networks per bundle");
  train->add_option("--max-epochs", train_epochs, "override the schedule's epoch cap");
  train->add_option("--run", train_run, "run directory");

  // eval
  auto* eval = app.add_subcommand("eval", "score a predictions CSV");
  std::string eval_pred, eval_data, eval_out;
  std::optional<int> eval_boot;
  eval->add_option("--pred", eval_pred, "predictions CSV")->required();
  eval->add_option("--data", eval_data, "dataset directory")->required();
  eval->add_option("--bootstrap", eval_boot, "bootstrap resamples");
  eval->add_option("--out", eval_out, "output directory (default RUN/eval/<stem>)");

  // ablate
  auto* ablate = app.add_subcommand("ablate", "run a masking/blur ablation grid");
  std::string ablate_data, ablate_split, ablate_grid, ablate_run = "run", ablate_task = "anemia";
  std::optional<int> ablate_epochs;
  ablate->add_option("--data", ablate_data, "dataset directory")->required();
  ablate->add_option("--split", ablate_split, "split CSV (default DATA/split.csv)");
  ablate->add_option("--grid", ablate_grid, "grid config JSON (list of ablation specs)");
  ablate->add_option("--task", ablate_task, "anemia or moderate");
  ablate->add_option("--max-epochs", ablate_epochs, "override the schedule's epoch cap");
  ablate->add_option("--run", ablate_run, "run directory");

  // report
  auto* report = app.add_subcommand("report", "consolidated tables for a run");
  std::string report_run, report_data;
  report->add_option("--run", report_run, "run directory")->required();
  report->add_option("--data", report_data, "dataset directory (default: from the run's resolved config)");

  try {
    try {
      app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
      return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
      return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
      return app.exit(e);
    } catch (const CLI::ParseError& e) {
      fail(ErrorCode::invalid_argument, e.what());
    }

    RunConfig cfg;
    if (!config_path.empty()) {
      const json j = read_json_file(config_path);
      // A bare generator config is accepted for synth.
      if (synth->parsed() && !j.contains("generator") && !j.contains("schedule")) {
        try {
          cfg.generator = j.get<synthgen::GeneratorConfig>();
        } catch (const json::exception& e) {
          fail(ErrorCode::config, config_path + ": " + e.what());
        }
        if (j.contains("seed")) cfg.root_seed = cfg.generator.seed;
      } else {
        apply_config_file(cfg, j, config_path);
      }
    }
    if (const char* env = std::getenv("FUNDASCREEN_SEED"); env != nullptr && !seed_flag) {
      try {
        std::size_t used = 0;
        const std::string text(env);
        cfg.root_seed = std::stoull(text, &used);
        if (used != text.size()) throw std::invalid_argument(text);
      } catch (const std::exception&) {
        fail(ErrorCode::config, "FUNDASCREEN_SEED is not an unsigned integer");
      }
    }
    if (seed_flag) cfg.root_seed = *seed_flag;
    cfg.jobs = jobs;

    if (synth->parsed()) {
      if (synth_n) cfg.generator.n_patients = *synth_n;
      if (synth_side) cfg.generator.image_side = *synth_side;
      if (synth_nuisance) cfg.generator.nuisance_sd = *synth_nuisance;
      if (seed_flag || std::getenv("FUNDASCREEN_SEED") != nullptr) cfg.generator.seed = cfg.root_seed;
      cfg.root_seed = cfg.generator.seed;
      cfg.generator.validate();
      log("generating " + std::to_string(cfg.generator.n_patients) + " patients");
      const auto data = synthgen::generate(cfg.generator, cfg.jobs);
      synthgen::write_dataset(data, cfg.generator, synth_out);
      write_resolved(synth_out, cfg, "synth", {{"out", synth_out}});
      require_file(fs::path(synth_out) / "manifest.csv");
      return 0;
    }

    if (split_cmd->parsed()) {
      const auto cohort = synthgen::read_dataset(split_data);
      const auto assignment = cohort::stratified_split(cohort, cfg.root_seed, cfg.fractions);
      const std::string out = split_out.empty() ? (fs::path(split_data) / "split.csv").string() : split_out;
      cohort::write_split_file(out, assignment);
      require_file(out);
      log("split written to " + out);
      return 0;
    }

    if (train->parsed()) {
      if (!train_tasks.empty()) cfg.tasks = parse_tasks(train_tasks);
      if (!train_family.empty() && train_family != "all") cfg.families = {models::parse_family(train_family)};
      if (train_ensemble) cfg.ensemble = *train_ensemble;
      if (train_epochs) cfg.schedule.max_epochs = *train_epochs;
      if (cfg.ensemble < 1) fail(ErrorCode::config, "--ensemble must be at least 1");
      cfg.schedule.validate();
      const std::string split_path = train_split.empty() ? (fs::path(train_data) / "split.csv").string() : train_split;
      const auto cohort = synthgen::read_dataset(train_data);
      const auto assignment = cohort::read_split_file(split_path);

      models::PipelineConfig pc;
      pc.tasks = cfg.tasks;
      pc.families = cfg.families;
      pc.ensemble = cfg.ensemble;
      pc.schedule = cfg.schedule;
      pc.augment = cfg.augment;
      pc.root_seed = cfg.root_seed;
      pc.jobs = cfg.jobs;
      fs::create_directories(train_run);
      write_resolved(train_run, cfg, "train", {{"data", train_data}, {"split", split_path}, {"run", train_run}});
      log("training " + std::to_string(pc.tasks.size()) + " task(s) x " + std::to_string(pc.families.size()) +
          " family(ies)");
      const auto outputs = models::train_pipeline(cohort, assignment, pc, train_run);
      for (const auto& o : outputs) {
        require_file(fs::path(o.bundle_dir) / "bundle.json");
        require_file(o.predictions_path);
        log("wrote " + o.predictions_path);
      }
      return 0;
    }

    if (eval->parsed()) {
      if (eval_boot) cfg.bootstrap = *eval_boot;
      const fs::path pred(eval_pred);
      if (!fs::exists(pred)) fail(ErrorCode::missing_input, "predictions file not found: " + eval_pred);
      const fs::path out =
          eval_out.empty() ? pred.parent_path().parent_path() / "eval" / pred.stem() : fs::path(eval_out);
      const auto cohort = synthgen::read_dataset(eval_data);
      metrics::BootstrapOptions bo;
      bo.samples = cfg.bootstrap;
      bo.seed = derive_seed(cfg.root_seed, "eval");
      bo.jobs = cfg.jobs;
      evaluate_file(pred, cohort, bo, out);
      write_resolved(out, cfg, "eval", {{"pred", eval_pred}, {"data", eval_data}, {"out", out.string()}});
      log("metrics written to " + (out / "metrics.json").string());
      return 0;
    }

    if (ablate->parsed()) {
      if (!ablate_grid.empty()) cfg.grid = ablation::read_grid_config(ablate_grid);
      if (cfg.grid.empty()) fail(ErrorCode::config, "no ablation grid given (--grid or config ablation_grid)");
      if (ablate_epochs) cfg.schedule.max_epochs = *ablate_epochs;
      const auto task = models::TaskSpec::parse(ablate_task);
      cfg.tasks = {task};
      const std::string split_path =
          ablate_split.empty() ? (fs::path(ablate_data) / "split.csv").string() : ablate_split;
      const auto cohort = synthgen::read_dataset(ablate_data);
      const auto assignment = cohort::read_split_file(split_path);
      fs::create_directories(ablate_run);
      write_resolved(ablate_run, cfg, "ablate",
                     {{"data", ablate_data}, {"split", split_path}, {"grid", ablate_grid}, {"run", ablate_run}});
      ablation::GridOptions go;
      go.schedule = cfg.schedule;
      go.augment = cfg.augment;
      go.root_seed = cfg.root_seed;
      go.seeds_per_arm = cfg.ablation_seeds;
      go.jobs = cfg.jobs;
      log("ablation grid with " + std::to_string(cfg.grid.size()) + " arm(s)");
      const auto rep = ablation::run_ablation_grid(cohort, assignment, task, cfg.grid, go);
      std::ostringstream os;
      ablation::write_ablation_report(os, rep);
      const fs::path out = fs::path(ablate_run) / "ablation_report.csv";
      write_text(out, os.str());
      write_text(fs::path(ablate_run) / "ablation_manifest.json", ablation::ablation_manifest(rep).dump(2) + "\n");
      require_file(out);
      for (const auto& arm : rep.arms) {
        if (!arm.error.empty()) log("arm " + arm.spec.label() + " failed: " + arm.error);
      }
      return 0;
    }

    if (report->parsed()) {
      const fs::path run(report_run);
      const fs::path pred_dir = run / "predictions";
      if (!fs::is_directory(pred_dir)) fail(ErrorCode::missing_input, "no predictions directory in " + report_run);
      std::string data_dir = report_data;
      if (data_dir.empty()) {
        const fs::path resolved = run / "resolved_config.json";
        const json j = read_json_file(resolved.string());
        if (!j.contains("paths") || !j.at("paths").contains("data")) {
          fail(ErrorCode::config, resolved.string() + " does not record a data directory; pass --data");
        }
        data_dir = j.at("paths").at("data").get<std::string>();
        if (j.contains("bootstrap") && config_path.empty()) cfg.bootstrap = j.at("bootstrap").get<int>();
      }
      std::vector<fs::path> files;
      for (const auto& entry : fs::directory_iterator(pred_dir)) {
        const auto name = entry.path().filename().string();
        if (entry.path().extension() == ".csv" && name.find("_pairs.csv") == std::string::npos) files.push_back(entry.path());
      }
      std::sort(files.begin(), files.end());
      if (files.empty()) fail(ErrorCode::missing_input, "no prediction files in " + pred_dir.string());
      std::optional<cohort::Cohort> cohort;
      std::vector<metrics::MetricReport> all;
      for (const auto& f : files) {
        const fs::path eval_dir = run / "eval" / f.stem();
        std::vector<metrics::MetricReport> reps;
        if (fs::exists(eval_dir / "metrics.json")) {
          reps = metrics::read_reports((eval_dir / "metrics.json").string());
        } else {
          if (!cohort) cohort = synthgen::read_dataset(data_dir);
          metrics::BootstrapOptions bo;
          bo.samples = cfg.bootstrap;
          bo.seed = derive_seed(cfg.root_seed, "eval");
          bo.jobs = cfg.jobs;
          reps = evaluate_file(f, *cohort, bo, eval_dir);
        }
        all.insert(all.end(), reps.begin(), reps.end());
      }
      const fs::path out = run / "report";
      std::ostringstream t2, auc, agree, reg;
      metrics::write_sensitivity_table(t2, all);
      metrics::write_auc_table(auc, all);
      metrics::write_agreement_table(agree, all);
      metrics::write_regression_table(reg, all);
      write_text(out / "sensitivity_at_specificity.csv", t2.str());
      write_text(out / "auc.csv", auc.str());
      write_text(out / "agreement.csv", agree.str());
      write_text(out / "regression.csv", reg.str());
      for (const char* f : {"sensitivity_at_specificity.csv", "auc.csv", "agreement.csv", "regression.csv"}) {
        require_file(out / f);
      }
      log("report written to " + out.string());
      return 0;
    }
  } catch (const Error& e) {
    std::cerr << "ERROR:" << error_code_name(e.code()) << ": " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "ERROR:IO: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
