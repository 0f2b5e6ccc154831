#include <algorithm>
#include <cmath>
#include <numeric>

#include "fundascreen/error.hpp"
#include "fundascreen/metrics.hpp"
#include "fundascreen/parallel.hpp"
#include "fundascreen/rng.hpp"

namespace fundascreen::metrics {

std::size_t nearest_rank_index(double p, std::size_t n) {
  if (n == 0) fail(ErrorCode::invalid_argument, "percentile of an empty sample");
  // The small offset keeps products such as 0.975 * 2000 from rounding up.
  const double rank = std::ceil(p * static_cast<double>(n) - 1e-9);
  return static_cast<std::size_t>(std::clamp(rank, 1.0, static_cast<double>(n))) - 1;
}

MetricReport bootstrap_ci(const std::string& metric, std::size_t units, const Statistic& statistic,
                          const BootstrapOptions& options) {
  if (units == 0) fail(ErrorCode::invalid_argument, "bootstrap needs at least one unit");
  if (options.samples < 1) fail(ErrorCode::config, "bootstrap needs at least one sample");
  MetricReport report;
  report.metric = metric;
  report.n = units;

  std::vector<std::size_t> all(units);
  std::iota(all.begin(), all.end(), std::size_t{0});
  report.point = statistic(all);
  if (!report.point) {
    report.unreliable = true;
    return report;
  }

  const auto samples = static_cast<std::size_t>(options.samples);
  std::vector<std::optional<double>> values(samples);
  std::vector<int> undefined(samples, 0);
  parallel_for(samples, options.jobs, [&](std::size_t b) {
    Rng rng(derive_seed(options.seed, "bootstrap/" + std::to_string(b)));
    std::vector<std::size_t> draw(units);
    for (int attempt = 0; attempt <= options.max_redraws; ++attempt) {
      for (auto& d : draw) d = static_cast<std::size_t>(rng.below(units));
      values[b] = statistic(draw);
      if (values[b]) return;
      ++undefined[b];
    }
  });

  std::vector<double> defined;
  defined.reserve(samples);
  for (const auto& v : values) {
    if (v) defined.push_back(*v);
  }
  report.redrawn = std::accumulate(undefined.begin(), undefined.end(), 0);
  report.bootstrap_samples = static_cast<int>(defined.size());
  const double draws = static_cast<double>(samples) + report.redrawn;
  report.unreliable = report.redrawn > 0.1 * draws || defined.empty();
  if (defined.empty()) return report;
  std::sort(defined.begin(), defined.end());
  report.ci_lo = defined[nearest_rank_index(0.025, defined.size())];
  report.ci_hi = defined[nearest_rank_index(0.975, defined.size())];
  return report;
}

}  // namespace fundascreen::metrics
