#pragma once

#include <cstddef>
#include <string_view>

#include <json.hpp>

#include "reltransport/datamodel.hpp"
#include "reltransport/nuisance.hpp"

namespace reltransport {

enum class Estimand { mean_ratio, ate };

/// phi/chi/psi estimate the mean ratio; beta/gamma/delta are the matching
/// average-treatment-effect estimators.
enum class EstimatorName { phi, chi, psi, beta, gamma, delta };

std::string_view to_string(Estimand estimand);
std::string_view to_string(EstimatorName name);
Estimand parse_estimand(std::string_view text);

/// The estimator name for a functional family and estimand, e.g.
/// (chi, ate) -> gamma.
EstimatorName estimator_name(EstimatorKind kind, Estimand estimand);

struct Estimate {
  Estimand estimand = Estimand::mean_ratio;
  EstimatorName estimator = EstimatorName::phi;
  double value = 0.0;
  /// Per-target-row averages of the two standardized sums. Ratio
  /// estimators report numerator / denominator, ATE estimators
  /// numerator - denominator.
  double numerator = 0.0;
  double denominator = 0.0;
  std::size_t n0 = 0;
  std::size_t n1 = 0;
  bool external_nuisance = false;
};

/// sum over target rows of r(X) g(X), over sum of target Y.
Estimate estimate_phi(const AnalysisDataset& ds, const NuisanceSet& nuisances);
/// sum over target rows of r(X) h(X), over sum of h(X).
Estimate estimate_chi(const AnalysisDataset& ds, const NuisanceSet& nuisances);
/// sum over target rows of r(X) b(X), over sum of m(X, W).
Estimate estimate_psi(const AnalysisDataset& ds, const NuisanceSet& nuisances);

/// Difference of the same per-row averaged sums the matching ratio
/// estimator uses (beta <-> phi, gamma <-> chi, delta <-> psi).
Estimate estimate_ate(const AnalysisDataset& ds, const NuisanceSet& nuisances,
                      EstimatorKind variant);

/// A full re-estimation recipe: validate, fit nuisances, estimate.
struct Pipeline {
  EstimatorKind estimator = EstimatorKind::phi;
  Estimand estimand = Estimand::mean_ratio;
  NuisanceRecipe recipe;
};

Estimate run_pipeline(const AnalysisDataset& ds, const Pipeline& pipeline);

nlohmann::json to_json(const Estimate& estimate);

}  // namespace reltransport
