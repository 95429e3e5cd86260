#include "reltransport/bootstrap.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <mutex>
#include <optional>
#include <random>
#include <thread>

#include "reltransport/error.hpp"

namespace reltransport {

namespace {

constexpr const char* kModule = "estimators";

std::mt19937_64 replicate_engine(std::uint64_t seed, std::size_t replicate) {
  const auto r = static_cast<std::uint64_t>(replicate);
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(r), static_cast<std::uint32_t>(r >> 32)};
  return std::mt19937_64(seq);
}

}  // namespace

std::vector<std::size_t> resample_indices(const AnalysisDataset& ds, std::uint64_t seed,
                                          std::size_t replicate) {
  auto engine = replicate_engine(seed, replicate);
  std::vector<std::size_t> out;
  out.reserve(ds.size());
  for (auto stratum : {ds.trial_rows(), ds.target_rows()}) {
    std::uniform_int_distribution<std::size_t> pick(0, stratum.size() - 1);
    for (std::size_t k = 0; k < stratum.size(); ++k) out.push_back(stratum[pick(engine)]);
  }
  return out;
}

double sample_quantile(std::span<const double> sorted, double p) {
  if (sorted.empty()) throw Error(ErrorCode::invalid_argument, kModule, "quantile of no data");
  const double h = (static_cast<double>(sorted.size()) - 1.0) * p;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = h - static_cast<double>(lo);
  if (frac == 0.0) return sorted[lo];
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

Interval bootstrap_interval(const AnalysisDataset& ds,
                            const std::function<double(const AnalysisDataset&)>& statistic,
                            const BootstrapOptions& options) {
  if (options.replicates == 0)
    throw Error(ErrorCode::invalid_argument, kModule, "bootstrap needs at least one replicate");
  if (!(options.level > 0.0 && options.level < 1.0))
    throw Error(ErrorCode::invalid_argument, kModule, "confidence level must lie in (0,1)");

  const std::size_t B = options.replicates;
  std::vector<std::optional<double>> results(B);
  std::atomic<std::size_t> next{0};
  std::exception_ptr fatal;
  std::mutex fatal_mutex;

  auto worker = [&] {
    for (std::size_t r = next++; r < B; r = next++) {
      try {
        const auto indices = resample_indices(ds, options.seed, r);
        const double value = statistic(ds.select(indices));
        if (std::isfinite(value)) results[r] = value;
      } catch (const Error&) {
        // counted as a failed replicate
      } catch (...) {
        std::lock_guard lock(fatal_mutex);
        if (!fatal) fatal = std::current_exception();
      }
    }
  };

  const unsigned threads = std::max(1u, std::min<unsigned>(options.threads, static_cast<unsigned>(B)));
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    pool.reserve(threads);
    for (unsigned t = 0; t < threads; ++t) pool.emplace_back(worker);
  }
  if (fatal) std::rethrow_exception(fatal);

  Interval interval;
  interval.level = options.level;
  interval.replicates = B;
  interval.seed = options.seed;
  std::vector<double> draws;
  draws.reserve(B);
  for (const auto& r : results)
    if (r) draws.push_back(*r);
  interval.failed = B - draws.size();
  if (static_cast<double>(interval.failed) > options.max_failure_fraction * static_cast<double>(B) ||
      draws.empty())
    throw Error(ErrorCode::inference_failed, kModule,
                std::to_string(interval.failed) + " of " + std::to_string(B) +
                    " bootstrap replicates failed");

  std::vector<double> sorted = draws;
  std::sort(sorted.begin(), sorted.end());
  const double alpha = 1.0 - options.level;
  interval.lower = sample_quantile(sorted, alpha / 2.0);
  interval.upper = sample_quantile(sorted, 1.0 - alpha / 2.0);
  if (options.keep_draws) interval.draws = std::move(draws);
  return interval;
}

BootstrapResult bootstrap_ci(const AnalysisDataset& ds, const Pipeline& pipeline,
                             const BootstrapOptions& options) {
  if (options.replicates == 0)
    throw Error(ErrorCode::invalid_argument, kModule, "bootstrap needs at least one replicate");
  BootstrapResult result{run_pipeline(ds, pipeline), {}};
  result.interval = bootstrap_interval(
      ds, [&pipeline](const AnalysisDataset& sample) { return run_pipeline(sample, pipeline).value; },
      options);
  return result;
}

nlohmann::json to_json(const Interval& interval) {
  nlohmann::json j{{"ci_lower", interval.lower},
                   {"ci_upper", interval.upper},
                   {"level", interval.level},
                   {"B", interval.replicates},
                   {"failed_replicates", interval.failed},
                   {"seed", interval.seed},
                   {"method", std::string(Interval::method)}};
  return j;
}

}  // namespace reltransport
