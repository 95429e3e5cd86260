#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "reltransport/datamodel.hpp"
#include "reltransport/diagnostics.hpp"

namespace reltransport::sim {

/// One level of W within a covariate cell of the target population.
struct WLevel {
  std::vector<double> w;
  double prob = 0.0;             // Pr[W = w | X = x, S = 0]
  double target_baseline = 0.0;  // E[Y0 | X = x, W = w, S = 0]
};

/// One point of the finite covariate grid.
struct CovariateCell {
  std::vector<double> x;
  double trial_mass = 0.0;
  double target_mass = 0.0;
  double trial_baseline = 0.0;   // E[Y0 | X = x, S = 1]
  double target_baseline = 0.0;  // E[Y0 | X = x, S = 0]; implied by `w` when present
  double effect = 1.0;           // ratio rho(x), or additive effect for difference scenarios
  std::vector<WLevel> w;
};

enum class TreatmentPolicy { all_control, logistic_in_x, logistic_in_x_w };
enum class OutcomeFamily { bernoulli, poisson, gaussian };

/// How `CovariateCell::effect` maps control means to treated means.
/// `ratio` keeps the conditional mean ratio shared across S; `difference`
/// keeps the conditional mean difference shared instead.
enum class EffectScale { ratio, difference };

struct TargetTreatment {
  TreatmentPolicy policy = TreatmentPolicy::all_control;
  double intercept = 0.0;
  std::vector<double> x_coef;
  std::vector<double> w_coef;
};

struct ScenarioSpec {
  std::vector<std::string> x_names;
  std::vector<std::string> w_names;
  std::vector<CovariateCell> cells;
  TargetTreatment treatment;
  double trial_assignment_prob = 0.5;
  OutcomeFamily outcome = OutcomeFamily::bernoulli;
  double sigma = 1.0;
  EffectScale scale = EffectScale::ratio;

  /// Throws `Error(scenario_invalid)` when an identifiability constraint or
  /// a range restriction fails.
  void validate() const;

  /// E[Y0 | X = x, S = 0] for a cell, marginalizing W.
  double target_control_mean(const CovariateCell& cell) const;
  /// Treated mean from a control mean under the scenario's effect scale.
  double treated_mean(const CovariateCell& cell, double control_mean) const;

  static ScenarioSpec from_json(const nlohmann::json& doc);
  nlohmann::json to_json() const;
};

/// Draws n1 trial and n0 target rows; fully determined by `seed`.
AnalysisDataset generate(const ScenarioSpec& scenario, std::size_t n1, std::size_t n0,
                         std::uint64_t seed);

struct TrueValues {
  double mean_y1_s0 = 0.0;
  double mean_y0_s0 = 0.0;
  double mean_ratio = 0.0;
  double ate = 0.0;
  enum class Method { closed_form, monte_carlo } method = Method::closed_form;
  std::size_t mc_draws = 0;
  std::uint64_t mc_seed = 0;
  /// Monte Carlo standard errors for (mean_y1_s0, mean_y0_s0, mean_ratio, ate).
  std::optional<std::array<double, 4>> standard_errors;
};

TrueValues true_estimands(const ScenarioSpec& scenario);

/// Averages simulated potential outcomes over `draws` target units drawn in
/// fixed-size batches with per-batch seeds; `threads` does not change the
/// result. Rejects draws < 1000.
TrueValues true_estimands_monte_carlo(const ScenarioSpec& scenario, std::size_t draws,
                                      std::uint64_t seed, unsigned threads = 1);

nlohmann::json to_json(const TrueValues& truth);

/// Per-cell conditional potential-outcome means (e11, e10, e01, e00) for
/// the compatibility checker.
std::vector<StratumMeans<double>> stratum_means(const ScenarioSpec& scenario);

}  // namespace reltransport::sim
