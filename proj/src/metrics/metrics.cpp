#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>

#include "fundascreen/error.hpp"
#include "fundascreen/metrics.hpp"

namespace fundascreen::metrics {

namespace {

void check_paired(std::size_t a, std::size_t b, const char* what) {
  if (a != b) fail(ErrorCode::shape_mismatch, std::string(what) + ": length mismatch");
  if (a == 0) fail(ErrorCode::invalid_argument, std::string(what) + ": empty input");
}

double mean(std::span<const double> v) { return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size()); }

// Distinct scores ascending, with per-score positive and negative counts.
struct ScoreGroup {
  double score;
  long long pos = 0, neg = 0;
};

std::vector<ScoreGroup> group_scores(std::span<const double> scores, std::span<const int> labels) {
  check_paired(scores.size(), labels.size(), "roc_auc");
  std::vector<std::size_t> idx(scores.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  for (double s : scores) {
    if (std::isnan(s)) fail(ErrorCode::invalid_argument, "roc_auc: NaN score");
  }
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  std::vector<ScoreGroup> groups;
  for (std::size_t i : idx) {
    if (labels[i] != 0 && labels[i] != 1) fail(ErrorCode::invalid_argument, "roc_auc: labels must be 0 or 1");
    if (groups.empty() || groups.back().score != scores[i]) groups.push_back({scores[i]});
    (labels[i] == 1 ? groups.back().pos : groups.back().neg) += 1;
  }
  return groups;
}

// Trapezoid area under the ROC in units of (1/2) x pair; exact in integers.
long long twice_pair_area(const std::vector<ScoreGroup>& groups) {
  long long area = 0;
  long long neg_below = 0;
  for (const auto& g : groups) {
    // Each tie group is one trapezoid: width g.neg, heights tp before/after.
    area += 2 * g.pos * neg_below + g.pos * g.neg;
    neg_below += g.neg;
  }
  return area;
}

}  // namespace

RegressionMetrics regression_metrics(std::span<const double> pred, std::span<const double> truth) {
  check_paired(pred.size(), truth.size(), "regression_metrics");
  RegressionMetrics m;
  const double mt = mean(truth);
  double abs_sum = 0.0, ss_res = 0.0, ss_tot = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double r = pred[i] - truth[i];
    abs_sum += std::abs(r);
    ss_res += r * r;
    ss_tot += (truth[i] - mt) * (truth[i] - mt);
  }
  const auto n = static_cast<double>(pred.size());
  m.mae = abs_sum / n;
  m.rmse = std::sqrt(ss_res / n);
  if (ss_tot > 0.0) m.r2 = 1.0 - ss_res / ss_tot;
  return m;
}

std::optional<double> auc_value(std::span<const double> scores, std::span<const int> labels) {
  const auto groups = group_scores(scores, labels);
  long long p = 0, n = 0;
  for (const auto& g : groups) {
    p += g.pos;
    n += g.neg;
  }
  if (p == 0 || n == 0) return std::nullopt;
  return static_cast<double>(twice_pair_area(groups)) / (2.0 * static_cast<double>(p) * static_cast<double>(n));
}

RocResult roc_auc(std::span<const double> scores, std::span<const int> labels) {
  const auto groups = group_scores(scores, labels);
  RocResult res;
  RocCurve& c = res.curve;
  for (const auto& g : groups) {
    c.positives += g.pos;
    c.negatives += g.neg;
  }
  if (c.positives == 0 || c.negatives == 0) {
    fail(ErrorCode::single_class, "roc_auc needs both classes (" + std::to_string(c.positives) + " positive, " +
                                      std::to_string(c.negatives) + " negative)");
  }
  long long tp = c.positives, tn = 0;
  const auto P = static_cast<double>(c.positives);
  const auto N = static_cast<double>(c.negatives);
  for (const auto& g : groups) {
    c.points.push_back({g.score, static_cast<double>(tp) / P, static_cast<double>(tn) / N, tp, tn});
    tp -= g.pos;
    tn += g.neg;
  }
  c.points.push_back({std::numeric_limits<double>::infinity(), 0.0, 1.0, 0, c.negatives});
  res.auc = static_cast<double>(twice_pair_area(groups)) / (2.0 * P * N);
  return res;
}

double sensitivity_at_specificity(const RocCurve& curve, double spec) {
  std::optional<double> best;
  for (const auto& p : curve.points) {
    if (p.specificity >= spec - 1e-12 && (!best || p.sensitivity > *best)) best = p.sensitivity;
  }
  if (!best) fail(ErrorCode::invalid_argument, "no operating point reaches specificity " + std::to_string(spec));
  return *best;
}

std::optional<double> pearson_r(std::span<const double> x, std::span<const double> y) {
  check_paired(x.size(), y.size(), "pearson_r");
  if (x.size() < 3) fail(ErrorCode::invalid_argument, "pearson_r needs at least 3 pairs");
  const double mx = mean(x), my = mean(y);
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (!(sxx > 0.0) || !(syy > 0.0)) return std::nullopt;
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

double gaussian_mae(double sd_diff) { return sd_diff * std::sqrt(2.0 / std::numbers::pi); }

AgreementStats agreement_stats(std::span<const double> pred, std::span<const double> truth) {
  check_paired(pred.size(), truth.size(), "agreement_stats");
  std::vector<double> diff(pred.size()), absdiff(pred.size());
  for (std::size_t i = 0; i < pred.size(); ++i) {
    diff[i] = pred[i] - truth[i];
    absdiff[i] = std::abs(diff[i]);
  }
  AgreementStats s;
  s.mean_diff = mean(diff);
  if (diff.size() > 1) {
    double ss = 0.0;
    for (double d : diff) ss += (d - s.mean_diff) * (d - s.mean_diff);
    s.sd_diff = std::sqrt(ss / static_cast<double>(diff.size() - 1));
  }
  s.loa_halfwidth = 1.96 * s.sd_diff;
  s.gaussian_mae_estimate = gaussian_mae(s.sd_diff);
  s.empirical_mae = mean(absdiff);
  std::sort(absdiff.begin(), absdiff.end());
  s.empirical_loa95 = absdiff[nearest_rank_index(0.95, absdiff.size())];
  return s;
}

ResidualCorrelation residual_visit_correlation(std::span<const VisitPairResidual> pairs,
                                               const BootstrapOptions& options) {
  if (pairs.size() < 3) fail(ErrorCode::invalid_argument, "residual correlation needs at least 3 visit pairs");
  const auto stat = [&](std::span<const std::size_t> units) -> std::optional<double> {
    std::vector<double> a, b;
    a.reserve(units.size());
    b.reserve(units.size());
    for (std::size_t u : units) {
      a.push_back(pairs[u].truth1 - pairs[u].pred1);
      b.push_back(pairs[u].truth2 - pairs[u].pred2);
    }
    return pearson_r(a, b);
  };
  ResidualCorrelation rc;
  rc.report = bootstrap_ci("residual_visit_r", pairs.size(), stat, options);
  rc.r = rc.report.point;
  return rc;
}

}  // namespace fundascreen::metrics
