#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include "fixtures.hpp"
#include "fundascreen/error.hpp"
#include "fundascreen/metrics.hpp"
#include "fundascreen/rng.hpp"
#include "oracles.hpp"

using namespace fundascreen;
using namespace fundascreen::metrics;

namespace {

double round2(double v) { return std::round(v * 100.0) / 100.0; }
double round1(double v) { return std::round(v * 10.0) / 10.0; }

struct Sample {
  std::vector<double> scores;
  std::vector<int> labels;
};

Sample shifted_sample(std::size_t n, double shift, Rng& rng) {
  Sample s;
  for (std::size_t i = 0; i < n; ++i) {
    const int y = i % 3 == 0 ? 1 : 0;
    s.labels.push_back(y);
    s.scores.push_back(rng.normal() + shift * y);
  }
  return s;
}

Statistic auc_statistic(const Sample& s) {
  return [&s](std::span<const std::size_t> idx) -> std::optional<double> {
    std::vector<double> sc;
    std::vector<int> lb;
    for (auto i : idx) {
      sc.push_back(s.scores[i]);
      lb.push_back(s.labels[i]);
    }
    return auc_value(sc, lb);
  };
}

}  // namespace

TEST_SUITE("metrics") {
  TEST_CASE("regression metric examples") {
    const std::vector<double> t = {1, 2, 3};
    const auto same = regression_metrics(t, t);
    CHECK(same.mae == 0.0);
    CHECK(*same.r2 == 1.0);
    const std::vector<double> flat = {2, 2, 2};
    const auto m = regression_metrics(flat, t);
    CHECK(m.mae == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
    CHECK(*m.r2 == doctest::Approx(0.0));
    CHECK_FALSE(regression_metrics(t, flat).r2.has_value());
    CHECK_THROWS_AS(regression_metrics({}, {}), Error);
    const std::vector<double> bad = {3, 1, 2};
    CHECK(*regression_metrics(bad, t).r2 < 0.0);
  }

  TEST_CASE("MAE never exceeds RMSE") {
    Rng rng(3);
    for (int k = 0; k < 50; ++k) {
      std::vector<double> p, t;
      for (int i = 0; i < 20; ++i) {
        p.push_back(rng.normal());
        t.push_back(rng.normal() * 3);
      }
      const auto m = regression_metrics(p, t);
      CHECK(m.mae <= m.rmse + 1e-15);
    }
  }

  TEST_CASE("AUC examples") {
    CHECK(roc_auc(std::vector<double>{0.9, 0.8, 0.1, 0.2}, std::vector<int>{1, 1, 0, 0}).auc == 1.0);
    CHECK(roc_auc(std::vector<double>{0.5, 0.5, 0.5, 0.5}, std::vector<int>{1, 0, 1, 0}).auc == 0.5);
    CHECK(roc_auc(std::vector<double>{0.8, 0.3, 0.6, 0.1}, std::vector<int>{1, 1, 0, 0}).auc == doctest::Approx(0.75));
    try {
      roc_auc(std::vector<double>{0.1, 0.2}, std::vector<int>{1, 1});
      FAIL("expected single_class");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::single_class);
    }
    CHECK_FALSE(auc_value(std::vector<double>{0.1, 0.2}, std::vector<int>{0, 0}).has_value());
  }

  TEST_CASE("ROC curve shape") {
    Rng rng(5);
    auto s = shifted_sample(100, 1.0, rng);
    for (auto& v : s.scores) v = std::round(v * 4) / 4;  // ties
    const auto r = roc_auc(s.scores, s.labels);
    const auto& pts = r.curve.points;
    REQUIRE(pts.size() >= 2);
    CHECK(pts.front().sensitivity == 1.0);
    CHECK(pts.front().specificity == 0.0);
    CHECK(pts.back().sensitivity == 0.0);
    CHECK(pts.back().specificity == 1.0);
    CHECK(std::isinf(pts.back().threshold));
    for (std::size_t i = 1; i < pts.size(); ++i) {
      CHECK(pts[i].threshold > pts[i - 1].threshold);
      CHECK(pts[i].sensitivity <= pts[i - 1].sensitivity);
      CHECK(pts[i].specificity >= pts[i - 1].specificity);
    }
    CHECK(r.curve.positives + r.curve.negatives == 100);
  }

  TEST_CASE("trapezoid AUC equals pair counting, with symmetry and monotone invariance") {
    Rng rng(11);
    for (int inst = 0; inst < 200; ++inst) {
      const std::size_t n = 2 + rng.below(199);
      std::vector<double> scores(n);
      std::vector<int> labels(n);
      for (std::size_t i = 0; i < n; ++i) {
        labels[i] = rng.bernoulli(0.4) ? 1 : 0;
        scores[i] = std::round(rng.normal() * 5) / 5;  // ties on a coarse grid
      }
      labels[0] = 0;
      labels[1] = 1;
      const double auc = roc_auc(scores, labels).auc;
      CHECK(std::abs(auc - oracle::pair_count_auc(scores, labels)) <= 1e-10);
      CHECK(*auc_value(scores, labels) == auc);
      std::vector<double> neg(n), mono(n);
      for (std::size_t i = 0; i < n; ++i) {
        neg[i] = -scores[i];
        mono[i] = std::exp(3 * scores[i]) + 1;
      }
      CHECK(roc_auc(neg, labels).auc + auc == 1.0);
      CHECK(roc_auc(mono, labels).auc == auc);
    }
  }

  TEST_CASE("sensitivity at specificity") {
    Rng rng(2);
    auto perfect = shifted_sample(60, 100.0, rng);
    const auto curve = roc_auc(perfect.scores, perfect.labels).curve;
    for (double spec : kOperatingSpecificities) CHECK(sensitivity_at_specificity(curve, spec) == 1.0);

    RocCurve hand;
    hand.points = {{0.0, 1.0, 0.0, 0, 0}, {0.3, 0.9, 0.75, 0, 0}, {0.5, 0.6, 0.85, 0, 0}, {INFINITY, 0.0, 1.0, 0, 0}};
    CHECK(sensitivity_at_specificity(hand, 0.80) == 0.6);
    CHECK(sensitivity_at_specificity(hand, 0.70) == 0.9);
    RocCurve broken;
    broken.points = {{0.0, 1.0, 0.0, 0, 0}};
    CHECK_THROWS_AS(sensitivity_at_specificity(broken, 0.9), Error);

    const auto chance = shifted_sample(30000, 0.0, rng);
    const auto cc = roc_auc(chance.scores, chance.labels).curve;
    double prev = 2.0;
    for (double spec : {0.5, 0.7, 0.8, 0.9, 0.95}) {
      const double s = sensitivity_at_specificity(cc, spec);
      CHECK(std::abs(s - (1 - spec)) <= 0.05);
      CHECK(s <= prev);
      prev = s;
    }
  }

  TEST_CASE("nearest-rank percentile indices") {
    CHECK(nearest_rank_index(0.025, 2000) == 49);
    CHECK(nearest_rank_index(0.975, 2000) == 1949);
    CHECK(nearest_rank_index(0.0, 10) == 0);
    CHECK(nearest_rank_index(1.0, 10) == 9);
  }

  TEST_CASE("bootstrap: constant data, determinism, redraw accounting") {
    BootstrapOptions opt;
    opt.samples = 500;
    opt.seed = 9;
    const auto constant = bootstrap_ci("c", 10, [](std::span<const std::size_t>) { return std::optional<double>(0.7); }, opt);
    CHECK(*constant.point == 0.7);
    CHECK(*constant.ci_lo == 0.7);
    CHECK(*constant.ci_hi == 0.7);
    CHECK(constant.bootstrap_samples == 500);

    Rng rng(1);
    const auto s = shifted_sample(40, 1.0, rng);
    const auto a = bootstrap_ci("auc", 40, auc_statistic(s), opt);
    opt.jobs = 3;
    const auto b = bootstrap_ci("auc", 40, auc_statistic(s), opt);
    CHECK(*a.ci_lo == *b.ci_lo);
    CHECK(*a.ci_hi == *b.ci_hi);
    CHECK(*a.ci_lo <= *a.point);
    CHECK(*a.point <= *a.ci_hi);

    // Rare positives force redraws; too many undefined draws flag the report.
    Sample rare;
    for (int i = 0; i < 30; ++i) {
      rare.labels.push_back(i == 0);
      rare.scores.push_back(i);
    }
    const auto r = bootstrap_ci("auc", 30, auc_statistic(rare), opt);
    CHECK(r.redrawn > 0);
    CHECK(r.unreliable);
  }

  TEST_CASE("bootstrap CI contains the point and shrinks with n") {
    Rng rng(21);
    BootstrapOptions opt;
    opt.samples = 400;
    std::vector<double> w1, w2;
    for (int k = 0; k < 30; ++k) {
      opt.seed = k;
      const auto s1 = shifted_sample(150, 1.0, rng);
      const auto s2 = shifted_sample(300, 1.0, rng);
      const auto r1 = bootstrap_ci("auc", 150, auc_statistic(s1), opt);
      const auto r2 = bootstrap_ci("auc", 300, auc_statistic(s2), opt);
      CHECK(*r1.ci_lo <= *r1.point);
      CHECK(*r1.point <= *r1.ci_hi);
      w1.push_back(*r1.ci_hi - *r1.ci_lo);
      w2.push_back(*r2.ci_hi - *r2.ci_lo);
    }
    std::sort(w1.begin(), w1.end());
    std::sort(w2.begin(), w2.end());
    const double ratio = w1[15] / w2[15];
    CHECK(ratio >= 1.2);
    CHECK(ratio <= 1.7);
  }

  TEST_CASE("pearson examples") {
    const std::vector<double> x = {1, 2, 3};
    CHECK(*pearson_r(x, x) == doctest::Approx(1.0));
    const std::vector<double> affine = {3, 1, -1};
    CHECK(*pearson_r(x, affine) == doctest::Approx(-1.0));
    const std::vector<double> y = {1, 3, 2};
    CHECK(*pearson_r(x, y) == doctest::Approx(0.5));
    const std::vector<double> flat = {2, 2, 2};
    CHECK_FALSE(pearson_r(x, flat).has_value());
    CHECK_THROWS_AS(pearson_r(std::vector<double>{1, 2}, std::vector<double>{1, 2}), Error);
  }

  TEST_CASE("agreement conversion reproduces the published table") {
    CHECK(round2(gaussian_mae(0.18)) == 0.14);
    CHECK(round2(gaussian_mae(0.64)) == 0.51);
    CHECK(round1(gaussian_mae(1.4)) == 1.1);
    CHECK(gaussian_mae(0.18) == doctest::Approx(0.18 * std::sqrt(2 / std::numbers::pi)).epsilon(1e-15));

    const std::vector<double> t = {10, 11, 12, 13};
    const auto zero = agreement_stats(t, t);
    CHECK(zero.mean_diff == 0.0);
    CHECK(zero.sd_diff == 0.0);
    CHECK(zero.loa_halfwidth == 0.0);
    CHECK(zero.empirical_mae == 0.0);
    CHECK(zero.empirical_loa95 == 0.0);

    const std::vector<double> p = {11, 11, 11, 14};
    const auto a = agreement_stats(p, t);
    CHECK(a.mean_diff == doctest::Approx(0.25));
    CHECK(a.loa_halfwidth == doctest::Approx(1.96 * a.sd_diff));
    CHECK(a.gaussian_mae_estimate == doctest::Approx(gaussian_mae(a.sd_diff)));
    CHECK(a.empirical_mae == doctest::Approx(0.75));
  }

  TEST_CASE("residual visit correlation") {
    std::vector<VisitPairResidual> same;
    Rng rng(4);
    for (int i = 0; i < 20; ++i) {
      const double r = rng.normal();
      same.push_back({"P" + std::to_string(i), 12, 12 - r, 13, 13 - r});
    }
    BootstrapOptions opt;
    opt.samples = 200;
    const auto rc = residual_visit_correlation(same, opt);
    CHECK(*rc.r == doctest::Approx(1.0));
    CHECK(rc.report.metric == "residual_visit_r");
    CHECK_THROWS_AS(residual_visit_correlation(std::span(same).first(2), opt), Error);
  }

  TEST_CASE("report JSON and evaluation of a predictions table") {
    MetricReport r{"auc", "combined", "anemia", "anemia", 0.8, 0.7, 0.9, 10, 100, 2, false};
    nlohmann::json j = r;
    const auto back = j.get<MetricReport>();
    CHECK(back.point == r.point);
    CHECK(back.redrawn == 2);

    cohort::Cohort c;
    std::ostringstream pred;
    pred << "patient_id,family,task,target,value\n";
    for (int i = 0; i < 30; ++i) {
      auto p = fixture::patient("P" + std::to_string(i), cohort::Sex::female, 50);
      const double hb = 10.0 + 0.2 * i;
      p.visits = {fixture::visit(0, hb)};
      c.push_back(p);
      pred << p.patient_id << ",combined,anemia,anemia," << (i < 10 ? 0.9 - 0.01 * i : 0.1 + 0.001 * i) << "\n";
      pred << p.patient_id << ",combined,hb,hb," << hb + (i % 2 ? 0.5 : -0.5) << "\n";
    }
    std::istringstream in(pred.str());
    const auto table = csv::Table::parse(in, "pred.csv");
    BootstrapOptions opt;
    opt.samples = 200;
    const auto ev = evaluate_predictions(table, c, nullptr, opt);
    auto find = [&](const std::string& metric, const std::string& task) -> const MetricReport& {
      for (const auto& rep : ev.reports) {
        if (rep.metric == metric && rep.task == task) return rep;
      }
      FAIL("missing report " << metric);
      return ev.reports.front();
    };
    CHECK(*find("auc", "anemia").point == 1.0);
    CHECK(*find("mae", "hb").point == doctest::Approx(0.5));
    CHECK(*find("sd_diff", "hb").point > 0.0);
    REQUIRE(ev.rocs.size() == 1);

    std::ostringstream roc;
    write_roc_csv(roc, ev.rocs[0].curve);
    CHECK(roc.str().rfind("threshold,sensitivity,specificity\n", 0) == 0);

    std::ostringstream table2;
    write_sensitivity_table(table2, ev.reports);
    CHECK(table2.str().find("combined") != std::string::npos);
  }
}
