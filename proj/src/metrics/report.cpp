#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <ostream>

#include "fundascreen/error.hpp"
#include "fundascreen/metrics.hpp"
#include "fundascreen/rng.hpp"

namespace fundascreen::metrics {

using nlohmann::json;

namespace {

json optional_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

std::optional<double> optional_from(const json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  return j.at(key).get<double>();
}

std::string fmt(const std::optional<double>& v) { return v ? csv::format_double(*v) : std::string(); }

bool is_classification_target(const std::string& t) { return t == "anemia" || t == "moderate" || t == "approximate"; }

std::optional<double> cbc_value(const cohort::Visit& v, const std::string& target) {
  if (target == "hb") return v.hb;
  if (target == "hct") return v.hct;
  if (target == "rbc") return v.rbc;
  for (const auto& c : v.extra_cbc) {
    if (c.name == target) return c.value;
  }
  return std::nullopt;
}

int anemia_label(const cohort::PatientRecord& p, double hb, const std::string& target) {
  const auto l = cohort::classify_anemia(hb, p.sex);
  if (target == "anemia") return l.anemia;
  if (target == "moderate") return l.moderate;
  return l.approximate;
}

struct Group {
  std::string family, task, target;
  std::vector<double> values;
  std::vector<double> truth;
  std::vector<int> labels;
};

MetricReport point_report(const std::string& metric, double value, std::size_t n) {
  MetricReport r;
  r.metric = metric;
  r.point = value;
  r.n = n;
  return r;
}

}  // namespace

void to_json(json& j, const MetricReport& r) {
  j = json{{"metric", r.metric},
           {"family", r.family},
           {"task", r.task},
           {"target", r.target},
           {"point", optional_json(r.point)},
           {"ci_lo", optional_json(r.ci_lo)},
           {"ci_hi", optional_json(r.ci_hi)},
           {"n", r.n},
           {"bootstrap_samples", r.bootstrap_samples},
           {"redrawn", r.redrawn},
           {"unreliable", r.unreliable}};
}

void from_json(const json& j, MetricReport& r) {
  r.metric = j.at("metric").get<std::string>();
  r.family = j.value("family", "");
  r.task = j.value("task", "");
  r.target = j.value("target", "");
  r.point = optional_from(j, "point");
  r.ci_lo = optional_from(j, "ci_lo");
  r.ci_hi = optional_from(j, "ci_hi");
  r.n = j.value("n", std::size_t{0});
  r.bootstrap_samples = j.value("bootstrap_samples", 0);
  r.redrawn = j.value("redrawn", 0);
  r.unreliable = j.value("unreliable", false);
}

std::string sensitivity_metric_name(double spec) {
  return "sens_at_spec_" + std::to_string(static_cast<int>(std::lround(spec * 100)));
}

Evaluation evaluate_predictions(const csv::Table& predictions, const cohort::Cohort& cohort, const csv::Table* pairs,
                                const BootstrapOptions& options) {
  predictions.require_header({"patient_id", "family", "task", "target", "value"});
  std::map<std::string, const cohort::PatientRecord*> by_id;
  for (const auto& p : cohort) by_id[p.patient_id] = &p;

  std::vector<Group> groups;
  std::map<std::string, std::size_t> group_index;
  for (const auto& row : predictions.rows()) {
    const auto& f = row.fields;
    const auto it = by_id.find(f[0]);
    if (it == by_id.end()) {
      fail(ErrorCode::missing_input, predictions.source() + ":" + std::to_string(row.line) + ": patient " + f[0] +
                                         " is not in the dataset");
    }
    const std::string key = f[1] + "/" + f[2] + "/" + f[3];
    auto [gi, inserted] = group_index.try_emplace(key, groups.size());
    if (inserted) groups.push_back({f[1], f[2], f[3], {}, {}, {}});
    Group& g = groups[gi->second];
    const double value = predictions.number(row, 4);
    const cohort::PatientRecord& p = *it->second;
    const bool cls = is_classification_target(g.target);
    std::optional<double> truth;
    for (const auto& v : p.visits) {
      if (!v.eligible()) continue;
      truth = cls ? v.hb : cbc_value(v, g.target);
      if (truth) break;
    }
    if (!truth) {
      fail(ErrorCode::missing_input, predictions.source() + ":" + std::to_string(row.line) + ": patient " + f[0] +
                                         " has no eligible visit with " + g.target);
    }
    g.values.push_back(value);
    if (cls) {
      g.labels.push_back(anemia_label(p, *truth, g.target));
    } else {
      g.truth.push_back(*truth);
    }
  }

  Evaluation ev;
  for (const auto& g : groups) {
    BootstrapOptions bo = options;
    bo.seed = derive_seed(options.seed, g.family + "/" + g.task + "/" + g.target);
    std::vector<MetricReport> reps;
    const std::size_t n = g.values.size();
    if (is_classification_target(g.target)) {
      auto roc = roc_auc(g.values, g.labels);
      const auto resample = [&](std::span<const std::size_t> units, std::vector<double>& s, std::vector<int>& l) {
        s.clear();
        l.clear();
        for (std::size_t u : units) {
          s.push_back(g.values[u]);
          l.push_back(g.labels[u]);
        }
        const bool both = std::count(l.begin(), l.end(), 1) > 0 && std::count(l.begin(), l.end(), 0) > 0;
        return both;
      };
      reps.push_back(bootstrap_ci("auc", n, [&](std::span<const std::size_t> units) -> std::optional<double> {
        std::vector<double> s;
        std::vector<int> l;
        if (!resample(units, s, l)) return std::nullopt;
        return auc_value(s, l);
      }, bo));
      for (double spec : kOperatingSpecificities) {
        reps.push_back(bootstrap_ci(sensitivity_metric_name(spec), n,
                                    [&](std::span<const std::size_t> units) -> std::optional<double> {
                                      std::vector<double> s;
                                      std::vector<int> l;
                                      if (!resample(units, s, l)) return std::nullopt;
                                      return sensitivity_at_specificity(roc_auc(s, l).curve, spec);
                                    },
                                    bo));
      }
      ev.rocs.push_back({g.family, g.task, g.target, std::move(roc.curve)});
    } else {
      const auto subset = [&](std::span<const std::size_t> units, std::vector<double>& pr, std::vector<double>& tr) {
        pr.clear();
        tr.clear();
        for (std::size_t u : units) {
          pr.push_back(g.values[u]);
          tr.push_back(g.truth[u]);
        }
      };
      reps.push_back(bootstrap_ci("mae", n, [&](std::span<const std::size_t> units) -> std::optional<double> {
        std::vector<double> pr, tr;
        subset(units, pr, tr);
        return regression_metrics(pr, tr).mae;
      }, bo));
      reps.push_back(bootstrap_ci("r2", n, [&](std::span<const std::size_t> units) -> std::optional<double> {
        std::vector<double> pr, tr;
        subset(units, pr, tr);
        return regression_metrics(pr, tr).r2;
      }, bo));
      const auto a = agreement_stats(g.values, g.truth);
      reps.push_back(point_report("mean_diff", a.mean_diff, n));
      reps.push_back(point_report("sd_diff", a.sd_diff, n));
      reps.push_back(point_report("loa_halfwidth", a.loa_halfwidth, n));
      reps.push_back(point_report("loa_empirical95", a.empirical_loa95, n));
      reps.push_back(point_report("gaussian_mae", a.gaussian_mae_estimate, n));
      reps.push_back(point_report("empirical_mae", a.empirical_mae, n));
    }
    for (auto& r : reps) {
      r.family = g.family;
      r.task = g.task;
      r.target = g.target;
      ev.reports.push_back(std::move(r));
    }
  }

  if (pairs != nullptr) {
    pairs->require_header({"patient_id", "family", "task", "target", "visit_index", "truth", "value"});
    struct PairKey {
      std::string family, task, target;
      std::vector<VisitPairResidual> residuals;
      std::map<std::string, std::vector<std::pair<long long, std::pair<double, double>>>> visits;
    };
    std::vector<PairKey> keys;
    std::map<std::string, std::size_t> key_index;
    for (const auto& row : pairs->rows()) {
      const auto& f = row.fields;
      const std::string key = f[1] + "/" + f[2] + "/" + f[3];
      auto [ki, inserted] = key_index.try_emplace(key, keys.size());
      if (inserted) keys.push_back({f[1], f[2], f[3], {}, {}});
      keys[ki->second].visits[f[0]].push_back({pairs->integer(row, 4), {pairs->number(row, 5), pairs->number(row, 6)}});
    }
    for (auto& k : keys) {
      for (auto& [pid, v] : k.visits) {
        if (v.size() != 2) {
          fail(ErrorCode::parse, pairs->source() + ": patient " + pid + " needs exactly two visit rows per target");
        }
        std::sort(v.begin(), v.end());
        k.residuals.push_back({pid, v[0].second.first, v[0].second.second, v[1].second.first, v[1].second.second});
      }
      if (k.residuals.size() < 3) continue;
      BootstrapOptions bo = options;
      bo.seed = derive_seed(options.seed, k.family + "/" + k.task + "/" + k.target + "/pairs");
      auto rc = residual_visit_correlation(k.residuals, bo);
      rc.report.family = k.family;
      rc.report.task = k.task;
      rc.report.target = k.target;
      ev.reports.push_back(std::move(rc.report));
    }
  }
  return ev;
}

void write_reports(std::ostream& out, const std::vector<MetricReport>& reports) {
  out << json(reports).dump(2) << '\n';
}

std::vector<MetricReport> read_reports(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::missing_input, "cannot open " + path);
  try {
    return json::parse(in).get<std::vector<MetricReport>>();
  } catch (const json::exception& e) {
    fail(ErrorCode::parse, path + ": " + e.what());
  }
}

void write_roc_csv(std::ostream& out, const RocCurve& curve) {
  out << "threshold,sensitivity,specificity\n";
  for (const auto& p : curve.points) {
    out << (std::isinf(p.threshold) ? std::string("inf") : csv::format_double(p.threshold)) << ','
        << csv::format_double(p.sensitivity) << ',' << csv::format_double(p.specificity) << '\n';
  }
}

namespace {

int family_rank(const std::string& f) {
  if (f == "metadata_only") return 0;
  if (f == "fundus_only") return 1;
  if (f == "combined") return 2;
  return 3;
}

// Reports indexed by (task, family, target) in table order.
struct Row {
  std::string task, family, target;
  std::map<std::string, const MetricReport*> metrics;
};

std::vector<Row> table_rows(const std::vector<MetricReport>& reports, bool per_target) {
  std::vector<Row> rows;
  for (const auto& r : reports) {
    const std::string target = per_target ? r.target : std::string();
    auto it = std::find_if(rows.begin(), rows.end(), [&](const Row& row) {
      return row.task == r.task && row.family == r.family && row.target == target;
    });
    if (it == rows.end()) {
      rows.push_back({r.task, r.family, target, {}});
      it = rows.end() - 1;
    }
    it->metrics[r.metric] = &r;
  }
  std::stable_sort(rows.begin(), rows.end(), [](const Row& a, const Row& b) {
    if (a.task != b.task) return a.task < b.task;
    if (family_rank(a.family) != family_rank(b.family)) return family_rank(a.family) < family_rank(b.family);
    return a.target < b.target;
  });
  return rows;
}

void write_with_ci(std::ostream& out, const Row& row, const std::string& metric) {
  const auto it = row.metrics.find(metric);
  if (it == row.metrics.end()) {
    out << ",,,";
    return;
  }
  out << ',' << fmt(it->second->point) << ',' << fmt(it->second->ci_lo) << ',' << fmt(it->second->ci_hi);
}

void write_point(std::ostream& out, const Row& row, const std::string& metric) {
  const auto it = row.metrics.find(metric);
  out << ',' << (it == row.metrics.end() ? std::string() : fmt(it->second->point));
}

}  // namespace

void write_sensitivity_table(std::ostream& out, const std::vector<MetricReport>& reports) {
  out << "task,family";
  for (double spec : kOperatingSpecificities) {
    const auto name = sensitivity_metric_name(spec);
    out << ',' << name << ',' << name << "_lo," << name << "_hi";
  }
  out << '\n';
  for (const auto& row : table_rows(reports, false)) {
    if (!row.metrics.count("auc")) continue;
    out << row.task << ',' << row.family;
    for (double spec : kOperatingSpecificities) write_with_ci(out, row, sensitivity_metric_name(spec));
    out << '\n';
  }
}

void write_auc_table(std::ostream& out, const std::vector<MetricReport>& reports) {
  out << "task,family,auc,auc_lo,auc_hi\n";
  for (const auto& row : table_rows(reports, false)) {
    if (!row.metrics.count("auc")) continue;
    out << row.task << ',' << row.family;
    write_with_ci(out, row, "auc");
    out << '\n';
  }
}

void write_agreement_table(std::ostream& out, const std::vector<MetricReport>& reports) {
  out << "task,family,target,sd_diff,loa_halfwidth,loa_empirical95,gaussian_mae,empirical_mae\n";
  for (const auto& row : table_rows(reports, true)) {
    if (!row.metrics.count("sd_diff")) continue;
    out << row.task << ',' << row.family << ',' << row.target;
    for (const char* m : {"sd_diff", "loa_halfwidth", "loa_empirical95", "gaussian_mae", "empirical_mae"}) {
      write_point(out, row, m);
    }
    out << '\n';
  }
}

void write_regression_table(std::ostream& out, const std::vector<MetricReport>& reports) {
  out << "task,family,target,mae,mae_lo,mae_hi,r2,r2_lo,r2_hi,residual_visit_r,residual_visit_r_lo,residual_visit_r_hi\n";
  for (const auto& row : table_rows(reports, true)) {
    if (!row.metrics.count("mae")) continue;
    out << row.task << ',' << row.family << ',' << row.target;
    write_with_ci(out, row, "mae");
    write_with_ci(out, row, "r2");
    write_with_ci(out, row, "residual_visit_r");
    out << '\n';
  }
}

}  // namespace fundascreen::metrics
