#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "reltransport/datamodel.hpp"
#include "reltransport/estimators.hpp"

namespace reltransport {

struct BootstrapOptions {
  std::size_t replicates = 500;
  double level = 0.95;
  std::uint64_t seed = 1;
  unsigned threads = 1;
  /// Replicates that fail to fit are dropped; more than this fraction
  /// failing is an inference error.
  double max_failure_fraction = 0.2;
  bool keep_draws = true;
};

struct Interval {
  static constexpr std::string_view method = "percentile bootstrap";

  double lower = 0.0;
  double upper = 0.0;
  double level = 0.95;
  std::size_t replicates = 0;
  std::size_t failed = 0;
  std::uint64_t seed = 0;
  /// Successful replicate estimates in replicate order (empty unless kept).
  std::vector<double> draws;
};

/// Row indices of bootstrap replicate `replicate`: n1 trial rows then n0
/// target rows, each drawn with replacement within its stratum. Depends only
/// on (seed, replicate).
std::vector<std::size_t> resample_indices(const AnalysisDataset& ds, std::uint64_t seed,
                                          std::size_t replicate);

/// Linear-interpolation sample quantile (Hyndman-Fan type 7) of sorted data.
double sample_quantile(std::span<const double> sorted, double p);

/// Percentile interval for an arbitrary statistic recomputed on stratified
/// resamples. A replicate whose statistic throws `Error` counts as failed.
Interval bootstrap_interval(const AnalysisDataset& ds,
                            const std::function<double(const AnalysisDataset&)>& statistic,
                            const BootstrapOptions& options);

struct BootstrapResult {
  Estimate estimate;
  Interval interval;
};

/// Point estimate on the original data plus its percentile interval, with
/// every internal nuisance refit per replicate.
BootstrapResult bootstrap_ci(const AnalysisDataset& ds, const Pipeline& pipeline,
                             const BootstrapOptions& options);

nlohmann::json to_json(const Interval& interval);

}  // namespace reltransport
