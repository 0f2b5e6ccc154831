#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include "fixtures.hpp"
#include "fundascreen/csv.hpp"
#include "fundascreen/error.hpp"
#include "fundascreen/metrics.hpp"
#include "fundascreen/models.hpp"
#include "fundascreen/synthgen.hpp"
#include "fundascreen/tensornet/loss.hpp"

using namespace fundascreen;
using namespace fundascreen::models;

namespace {

synthgen::SyntheticCohort small_data(int n, double pallor, double vessel, double disc, std::uint64_t seed = 1) {
  synthgen::GeneratorConfig g;
  g.n_patients = n;
  g.image_side = 32;
  g.pallor_gain = pallor;
  g.vessel_gain = vessel;
  g.disc_gain = disc;
  g.seed = seed;
  return synthgen::generate(g, 1);
}

double tune_auc(const MemberResult& r, const PreparedData& data) {
  nn::Network net(r.architecture, 0);
  nn::load_parameters(net, r.checkpoint, true);
  const auto out = eye_outputs(net, data.task, data.tune);
  std::vector<double> scores;
  std::vector<int> labels;
  for (std::size_t i = 0; i < out.size(); ++i) {
    scores.push_back(out[i][0]);
    labels.push_back(data.tune.labels[data.tune.eyes[i].patient]);
  }
  return metrics::roc_auc(scores, labels).auc;
}

std::vector<std::vector<double>> column(const std::vector<double>& x) {
  std::vector<std::vector<double>> m;
  for (double v : x) m.push_back({v});
  return m;
}

}  // namespace

TEST_SUITE("models") {
  TEST_CASE("task parsing") {
    const auto cbc = TaskSpec::parse("cbc");
    CHECK(cbc.kind == TaskKind::regression);
    CHECK(cbc.targets == std::vector<std::string>{"hb", "hct", "rbc"});
    CHECK(cbc.name() == "hb+hct+rbc");
    CHECK(cbc.outputs() == 3);
    CHECK(TaskSpec::parse("hb,mcv") == TaskSpec::parse("hb+mcv"));
    const auto a = TaskSpec::parse("anemia");
    CHECK(a.kind == TaskKind::classification);
    CHECK(a.outputs() == 2);
    CHECK_THROWS_AS(TaskSpec::parse("hb,anemia"), Error);
    nlohmann::json j = cbc;
    CHECK(j.get<TaskSpec>() == cbc);
  }

  TEST_CASE("family names") {
    for (auto f : {Family::metadata_only, Family::fundus_only, Family::combined}) CHECK(parse_family(to_string(f)) == f);
    CHECK_THROWS_AS(parse_family("other"), Error);
    CHECK_FALSE(is_network(Family::metadata_only));
  }

  TEST_CASE("regression baseline examples") {
    const auto exact = fit_metadata_regression(column({0, 1, 2, 3}), column({0, 2, 4, 6}));
    CHECK(exact.weights[0][0] == doctest::Approx(2.0).epsilon(1e-8));
    CHECK(std::abs(exact.intercepts[0]) <= 1e-8);

    const auto flat = fit_metadata_regression(column({0, 1, 2, 3}), column({5, 5, 5, 5}));
    CHECK(std::abs(flat.weights[0][0]) <= 1e-8);
    CHECK(flat.intercepts[0] == doctest::Approx(5.0).epsilon(1e-10));

    const auto three = fit_metadata_regression(column({0, 1, 2}), column({1, 3, 5}));
    CHECK(three.weights[0][0] == doctest::Approx(2.0).epsilon(1e-8));
    CHECK(three.intercepts[0] == doctest::Approx(1.0).epsilon(1e-8));
    const double x = 1.5;
    CHECK(three.predict(0, std::span<const double>(&x, 1)) == doctest::Approx(4.0));
  }

  TEST_CASE("regression residuals are orthogonal to the design") {
    Rng rng(4);
    std::vector<std::vector<double>> x, y;
    for (int i = 0; i < 200; ++i) {
      x.push_back({rng.normal(), rng.normal(), rng.normal()});
      y.push_back({1.0 + x.back()[0] - 0.5 * x.back()[2] + rng.normal(), rng.normal()});
    }
    const auto m = fit_metadata_regression(x, y);
    CHECK(m.warnings.empty());
    for (std::size_t t = 0; t < 2; ++t) {
      std::vector<double> dot(4, 0.0);
      for (std::size_t i = 0; i < x.size(); ++i) {
        const double r = y[i][t] - m.predict(t, x[i]);
        dot[0] += r;
        for (int j = 0; j < 3; ++j) dot[j + 1] += r * x[i][j];
      }
      for (double d : dot) CHECK(std::abs(d) <= 1e-8);
    }
  }

  TEST_CASE("rank-deficient design is solved with a warning") {
    std::vector<std::vector<double>> x;
    std::vector<std::vector<double>> y;
    for (int i = 0; i < 10; ++i) {
      x.push_back({double(i), 2.0 * i});
      y.push_back({3.0 * i + 1});
    }
    const auto m = fit_metadata_regression(x, y);
    CHECK_FALSE(m.warnings.empty());
    for (std::size_t i = 0; i < x.size(); ++i) CHECK(m.predict(0, x[i]) == doctest::Approx(y[i][0]).epsilon(1e-6));
  }

  TEST_CASE("logistic baseline examples") {
    std::vector<std::vector<double>> x;
    std::vector<int> labels;
    for (int i = 0; i < 40; ++i) {
      x.push_back({i < 20 ? -1.0 - 0.1 * i : 1.0 + 0.1 * i});
      labels.push_back(i < 20 ? 0 : 1);
    }
    const auto sep = fit_metadata_logistic(x, labels);
    std::vector<double> scores;
    for (const auto& r : x) {
      const double p = sigmoid(sep.predict(0, r));
      CHECK(p > 0.0);
      CHECK(p < 1.0);
      scores.push_back(p);
    }
    CHECK(metrics::roc_auc(scores, labels).auc == 1.0);

    const std::vector<int> one_class(40, 1);
    CHECK_THROWS_AS(fit_metadata_logistic(x, one_class), Error);
  }

  TEST_CASE("logistic: independent labels give chance AUC, duplication is a no-op") {
    Rng rng(6);
    std::vector<std::vector<double>> x;
    std::vector<int> labels;
    for (int i = 0; i < 4000; ++i) {
      x.push_back({rng.normal(), rng.normal()});
      labels.push_back(rng.bernoulli(0.3) ? 1 : 0);
    }
    const auto m = fit_metadata_logistic(x, labels);
    std::vector<double> scores;
    for (const auto& r : x) scores.push_back(m.predict(0, r));
    CHECK(std::abs(metrics::roc_auc(scores, labels).auc - 0.5) <= 0.05);

    std::vector<std::vector<double>> x2;
    std::vector<int> l2;
    for (int i = 0; i < 300; ++i) {
      for (int k = 0; k < 2; ++k) {
        x2.push_back(x[i]);
        l2.push_back(labels[i]);
      }
    }
    const std::vector<std::vector<double>> x1(x.begin(), x.begin() + 300);
    const std::vector<int> l1(labels.begin(), labels.begin() + 300);
    const auto a = fit_metadata_logistic(x1, l1);
    const auto b = fit_metadata_logistic(x2, l2);
    for (std::size_t j = 0; j < a.weights[0].size(); ++j) CHECK(a.weights[0][j] == doctest::Approx(b.weights[0][j]).epsilon(1e-9));
    CHECK(a.intercepts[0] == doctest::Approx(b.intercepts[0]).epsilon(1e-9));
  }

  TEST_CASE("aggregation examples and order invariance") {
    EyeProvenance one{cohort::Eye::left, {{0.7}}, {0.7}};
    CHECK(aggregate({one}) == std::vector<double>{0.7});
    EyeProvenance two{cohort::Eye::left, {{0.2}, {0.4}}, {0.3}};
    CHECK(aggregate({two})[0] == doctest::Approx(0.3));
    EyeProvenance l{cohort::Eye::left, {{0.3}}, {0.3}}, r{cohort::Eye::right, {{0.5}}, {0.5}};
    CHECK(aggregate({l, r})[0] == doctest::Approx(0.4));

    Rng rng(2);
    std::vector<EyeProvenance> eyes(2);
    std::vector<double> member_first(3, 0.0);
    for (auto& e : eyes) {
      e.member_outputs.resize(3);
      for (int m = 0; m < 3; ++m) {
        e.member_outputs[m] = {rng.uniform()};
        member_first[m] += e.member_outputs[m][0] / 2;
      }
      e.mean = {(e.member_outputs[0][0] + e.member_outputs[1][0] + e.member_outputs[2][0]) / 3};
    }
    const double eyes_first = (member_first[0] + member_first[1] + member_first[2]) / 3;
    CHECK(aggregate(eyes)[0] == doctest::Approx(eyes_first).epsilon(1e-14));
  }

  TEST_CASE("prepare_data selects first eligible visits and fits on train only") {
    const auto data = small_data(120, 0, 0.02, 0.012);
    const auto split = cohort::stratified_split(data.patients, 1);
    const auto prep = prepare_data(data.patients, split, TaskSpec::parse("cbc"));
    CHECK(prep.train.patients.size() + prep.tune.patients.size() + prep.validation.patients.size() == 120);
    CHECK(prep.train.targets.front().size() == 3);
    double mean = 0;
    for (const auto& r : prep.train.targets_z) mean += r[0];
    CHECK(std::abs(mean / prep.train.targets_z.size()) < 1e-9);
    for (const auto& p : prep.validation.patients) CHECK(split.at(p.patient_id) == cohort::Split::validation);

    cohort::SplitAssignment partial;
    partial.assign(data.patients[0].patient_id, cohort::Split::train);
    CHECK_THROWS_AS(prepare_data(data.patients, partial, TaskSpec::parse("hb")), Error);
  }

  TEST_CASE("train_member: zero-signal null") {
    const auto data = small_data(3000, 0, 0, 0);
    const auto split = cohort::stratified_split(data.patients, 1, cohort::SplitFractions{0.3, 0.6, 0.1});
    const auto prep = prepare_data(data.patients, split, TaskSpec::parse("anemia"));
    MemberOptions opt;
    opt.schedule.max_epochs = 3;
    opt.seed = 3;
    const auto auc = tune_auc(train_member(Family::fundus_only, prep, opt), prep);
    CHECK(auc >= 0.45);
    CHECK(auc <= 0.55);
  }

  TEST_CASE("train_member: pallor signal under the default schedule") {
    const auto data = small_data(600, 0.05, 0, 0);
    const auto split = cohort::stratified_split(data.patients, 1, cohort::SplitFractions{0.6, 0.3, 0.1});
    const auto prep = prepare_data(data.patients, split, TaskSpec::parse("anemia"));
    MemberOptions opt;
    opt.seed = 3;
    CHECK(tune_auc(train_member(Family::fundus_only, prep, opt), prep) >= 0.8);
  }

  TEST_CASE("train_member: deterministic, isolated from validation, reports divergence") {
    const auto data = small_data(150, 0, 0.02, 0.012);
    const auto split = cohort::stratified_split(data.patients, 2);
    const auto prep = prepare_data(data.patients, split, TaskSpec::parse("hb"));
    std::set<std::string> validation_ids;
    for (const auto& p : prep.validation.patients) validation_ids.insert(p.patient_id);

    std::set<std::string> touched;
    int steps = 0, stops = 0;
    MemberOptions opt;
    opt.schedule.max_epochs = 2;
    opt.seed = 11;
    opt.trace = [&](TracePhase phase, const std::string& id) {
      touched.insert(id);
      (phase == TracePhase::gradient_step ? steps : stops)++;
    };
    const auto a = train_member(Family::combined, prep, opt);
    CHECK(steps > 0);
    CHECK(stops > 0);
    for (const auto& id : touched) CHECK(validation_ids.count(id) == 0);

    opt.trace = {};
    const auto b = train_member(Family::combined, prep, opt);
    CHECK(a.checkpoint == b.checkpoint);
    CHECK(a.tune_history == b.tune_history);

    opt.schedule.base_lr = 1e6;
    opt.schedule.warmup_start_lr = 1e6;
    try {
      train_member(Family::fundus_only, prep, opt);
      FAIL("expected divergence");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::diverged);
      CHECK(std::string(e.what()).find("step") != std::string::npos);
    }
  }

  TEST_CASE("combined family reads metadata, fundus_only ignores it") {
    const auto data = small_data(120, 0, 0.02, 0.012);
    const auto split = cohort::stratified_split(data.patients, 1);
    const auto prep = prepare_data(data.patients, split, TaskSpec::parse("anemia"));
    PipelineConfig cfg;
    cfg.ensemble = 1;
    cfg.schedule.max_epochs = 1;
    for (auto family : {Family::fundus_only, Family::combined}) {
      const auto bundle = train_bundle(family, prep, cfg);
      const Predictor predictor(bundle);
      auto patient = prep.validation.patients[0];
      const auto before = predictor.predict(patient, patient.visits[0]).values;
      patient.age += 20;
      patient.sbp += 30;
      const auto after = predictor.predict(patient, patient.visits[0]).values;
      if (family == Family::combined) CHECK(before != after);
      else CHECK(before == after);
    }
  }

  TEST_CASE("predictor rejects a missing modality naming the field") {
    const auto data = small_data(100, 0, 0.02, 0.012);
    const auto split = cohort::stratified_split(data.patients, 1);
    const auto prep = prepare_data(data.patients, split, TaskSpec::parse("hb"));
    PipelineConfig cfg;
    cfg.ensemble = 1;
    cfg.schedule.max_epochs = 1;
    const auto bundle = train_bundle(Family::fundus_only, prep, cfg);
    auto patient = prep.validation.patients[0];
    patient.visits[0].eyes.clear();
    try {
      predict_patient(bundle, patient, patient.visits[0]);
      FAIL("expected missing_input");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::missing_input);
      CHECK(std::string(e.what()).find("image") != std::string::npos);
    }

    const auto meta = train_bundle(Family::metadata_only, prep, cfg);
    patient.height = std::nan("");
    try {
      predict_patient(meta, patient, patient.visits[0]);
      FAIL("expected missing_input");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::missing_input);
      CHECK(std::string(e.what()).find("height") != std::string::npos);
    }
  }

  TEST_CASE("single member single eye: prediction equals raw output") {
    const auto data = small_data(100, 0, 0.02, 0.012);
    const auto split = cohort::stratified_split(data.patients, 1);
    const auto prep = prepare_data(data.patients, split, TaskSpec::parse("anemia"));
    PipelineConfig cfg;
    cfg.ensemble = 1;
    cfg.schedule.max_epochs = 1;
    const auto bundle = train_bundle(Family::fundus_only, prep, cfg);
    REQUIRE(bundle.members.size() == 1);
    auto patient = prep.validation.patients[0];
    patient.visits[0].eyes.resize(1);
    const auto pred = predict_patient(bundle, patient, patient.visits[0]);
    nn::Network net(bundle.architecture, 0);
    nn::load_parameters(net, bundle.members[0], true);
    const auto raw = nn::softmax(net.predict(eye_input(patient.visits[0].eyes[0].image, {})));
    CHECK(pred.values[1] == doctest::Approx(raw[1]).epsilon(1e-15));
    REQUIRE(pred.eyes.size() == 1);
    CHECK(pred.eyes[0].member_outputs.size() == 1);
  }

  TEST_CASE("pipeline outputs, bundle round trip and baseline sanity") {
    fixture::TempDir dir("pipeline");
    const auto data = small_data(160, 0, 0.02, 0.012);
    const auto split = cohort::stratified_split(data.patients, 1);
    PipelineConfig cfg;
    cfg.tasks = {TaskSpec::parse("anemia"), TaskSpec::parse("cbc")};
    cfg.ensemble = 1;
    cfg.schedule.max_epochs = 1;
    cfg.root_seed = 5;
    const auto outputs = train_pipeline(data.patients, split, cfg, dir.str());
    CHECK(outputs.size() == 6);

    const auto validation = cohort::first_visit_view(data.patients);
    std::size_t n_val = 0;
    for (const auto& p : validation) n_val += split.at(p.patient_id) == cohort::Split::validation;

    for (const auto& o : outputs) {
      const auto table = csv::Table::read_file(o.predictions_path);
      table.require_header(kPredictionsHeader);
      CHECK(table.rows().size() == n_val * (o.task.kind == TaskKind::regression ? 3 : 1));
      const auto bundle = ModelBundle::load(o.bundle_dir);
      CHECK(bundle.task == o.task);
      if (is_network(o.family)) {
        CHECK(bundle.members.size() == 1);
        CHECK(bundle.architecture.layers.back().units == o.task.outputs());
      }
      if (o.task.kind == TaskKind::regression) CHECK(std::filesystem::exists(o.pairs_path));
    }

    // Reloaded bundles predict exactly what the in-memory ones did.
    const auto& cbc = outputs[4];
    const auto table = csv::Table::read_file(cbc.predictions_path);
    const auto bundle = ModelBundle::load(cbc.bundle_dir);
    const auto& row = table.rows().front();
    const auto id = row.fields[0];
    for (const auto& p : validation) {
      if (p.patient_id != id) continue;
      const auto pred = predict_patient(bundle, p, p.visits[0]);
      CHECK(csv::format_double(pred.values[0]) == row.fields[4]);
    }

    // Metadata regression beats the constant train-mean predictor on Hb.
    const auto prep = prepare_data(data.patients, split, TaskSpec::parse("hb"));
    const auto meta = train_bundle(Family::metadata_only, prep, cfg);
    double mean = 0;
    for (const auto& t : prep.train.targets) mean += t[0];
    mean /= prep.train.targets.size();
    double mae_model = 0, mae_const = 0;
    for (std::size_t i = 0; i < prep.validation.patients.size(); ++i) {
      const auto& p = prep.validation.patients[i];
      const double truth = prep.validation.targets[i][0];
      mae_model += std::abs(predict_patient(meta, p, p.visits[0]).values[0] - truth);
      mae_const += std::abs(mean - truth);
    }
    CHECK(mae_model <= mae_const);
  }
}
