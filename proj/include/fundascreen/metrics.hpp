#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "fundascreen/cohort.hpp"
#include "fundascreen/csv.hpp"

namespace fundascreen::metrics {

struct RegressionMetrics {
  double mae = 0.0;
  double rmse = 0.0;
  std::optional<double> r2;  // undefined for zero-variance truth
};

RegressionMetrics regression_metrics(std::span<const double> pred, std::span<const double> truth);

struct RocPoint {
  double threshold = 0.0;  // predict positive iff score >= threshold
  double sensitivity = 0.0;
  double specificity = 0.0;
  long long true_positives = 0;
  long long true_negatives = 0;
};

// Points in ascending threshold order: the lowest score first
// (sensitivity 1, specificity 0) and +infinity last (0, 1).
struct RocCurve {
  std::vector<RocPoint> points;
  long long positives = 0;
  long long negatives = 0;
};

struct RocResult {
  RocCurve curve;
  double auc = 0.0;
};

// Labels are 0/1. Rejects single-class input with ErrorCode::single_class.
RocResult roc_auc(std::span<const double> scores, std::span<const int> labels);
// Same value as roc_auc(...).auc without building the curve; nullopt when
// a class is missing.
std::optional<double> auc_value(std::span<const double> scores, std::span<const int> labels);

// Highest sensitivity among operating points with specificity >= spec.
double sensitivity_at_specificity(const RocCurve& curve, double spec);

struct MetricReport {
  std::string metric;
  std::string family;
  std::string task;
  std::string target;
  std::optional<double> point;
  std::optional<double> ci_lo;
  std::optional<double> ci_hi;
  std::size_t n = 0;
  int bootstrap_samples = 0;  // resamples that produced a value
  int redrawn = 0;            // resamples discarded as undefined and redrawn
  bool unreliable = false;
};

void to_json(nlohmann::json& j, const MetricReport& r);
void from_json(const nlohmann::json& j, MetricReport& r);

struct BootstrapOptions {
  int samples = 2000;
  std::uint64_t seed = 0;
  unsigned jobs = 1;
  int max_redraws = 100;  // per resample
};

// Statistic over a multiset of resampling units (indices, with repeats).
using Statistic = std::function<std::optional<double>(std::span<const std::size_t>)>;

// Nearest-rank index (0-based) of percentile p among n sorted values.
std::size_t nearest_rank_index(double p, std::size_t n);

// Percentile bootstrap over `units` resampling units. Resample b draws from
// its own stream derive_seed(seed, "bootstrap/<b>"); undefined resamples are
// redrawn from the same stream and counted, and the report is flagged
// unreliable if more than 10% of all draws were undefined.
MetricReport bootstrap_ci(const std::string& metric, std::size_t units, const Statistic& statistic,
                          const BootstrapOptions& options);

// Undefined (nullopt) when either variance is zero; throws for n < 3.
std::optional<double> pearson_r(std::span<const double> x, std::span<const double> y);

struct AgreementStats {
  double mean_diff = 0.0;
  double sd_diff = 0.0;
  double loa_halfwidth = 0.0;        // 1.96 * sd_diff
  double gaussian_mae_estimate = 0.0;  // sd_diff * sqrt(2 / pi)
  double empirical_mae = 0.0;
  double empirical_loa95 = 0.0;      // nearest-rank 95th percentile of |pred - truth|
};

AgreementStats agreement_stats(std::span<const double> pred, std::span<const double> truth);
double gaussian_mae(double sd_diff);

struct VisitPairResidual {
  std::string patient_id;
  double truth1 = 0.0, pred1 = 0.0;
  double truth2 = 0.0, pred2 = 0.0;
};

struct ResidualCorrelation {
  std::optional<double> r;
  MetricReport report;  // point = r, with bootstrap CI over patients
};

ResidualCorrelation residual_visit_correlation(std::span<const VisitPairResidual> pairs,
                                               const BootstrapOptions& options);

// --- prediction files ------------------------------------------------------

struct NamedRoc {
  std::string family, task, target;
  RocCurve curve;
};

struct Evaluation {
  std::vector<MetricReport> reports;
  std::vector<NamedRoc> rocs;
};

inline const std::vector<double> kOperatingSpecificities = {0.70, 0.80, 0.90};

// Scores a predictions CSV against the cohort's first eligible visits, one
// report group per (family, task, target). Pair rows, if given, add the
// residual correlation across visits.
Evaluation evaluate_predictions(const csv::Table& predictions, const cohort::Cohort& cohort,
                                const csv::Table* pairs, const BootstrapOptions& options);

void write_reports(std::ostream& out, const std::vector<MetricReport>& reports);
std::vector<MetricReport> read_reports(const std::string& path);
void write_roc_csv(std::ostream& out, const RocCurve& curve);

// Consolidated tables over many reports, one row per (task, family).
void write_sensitivity_table(std::ostream& out, const std::vector<MetricReport>& reports);
void write_auc_table(std::ostream& out, const std::vector<MetricReport>& reports);
void write_agreement_table(std::ostream& out, const std::vector<MetricReport>& reports);
void write_regression_table(std::ostream& out, const std::vector<MetricReport>& reports);

std::string sensitivity_metric_name(double spec);

}  // namespace fundascreen::metrics
