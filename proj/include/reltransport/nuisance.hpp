#pragma once

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "reltransport/datamodel.hpp"
#include "reltransport/glm.hpp"

namespace reltransport {

using glm::FittedModel;
using glm::ModelSpec;

enum class RatioMethod { arm_specific, log_link_interaction };

std::string_view to_string(RatioMethod method);
RatioMethod parse_ratio_method(std::string_view text);

/// Reserved term names for the treatment column in the interaction model.
inline constexpr std::string_view kTreatmentTerm = "A";

/// Fitted means of `model` on the given dataset rows, resolving the model's
/// covariate names against the dataset columns.
Eigen::VectorXd predict_rows(const FittedModel& model, const AnalysisDataset& ds,
                             std::span<const std::size_t> rows);

/// Fits `spec` on the listed rows with the given responses (one per row).
FittedModel fit_on_rows(const AnalysisDataset& ds, const ModelSpec& spec,
                        std::span<const std::size_t> rows, const Eigen::VectorXd& response);

/// Conditional mean ratio E[Y|X,S=1,A=1] / E[Y|X,S=1,A=0] estimated in the
/// trial.
class RatioModel {
 public:
  static constexpr double kDefaultFloor = 1e-12;

  /// Ratio of two arm-specific outcome models over the same X terms.
  static RatioModel arm_specific(FittedModel treated, FittedModel control,
                                 double floor = kDefaultFloor);

  /// One log-link model over (X, A, A:X); the ratio is exp of the A block.
  static RatioModel log_link_interaction(FittedModel joint, std::vector<std::string> x_terms,
                                         double floor = kDefaultFloor);

  RatioMethod method() const noexcept { return method_; }
  double floor() const noexcept { return floor_; }
  const std::vector<std::string>& x_terms() const noexcept { return x_terms_; }
  const FittedModel& treated() const { return *treated_; }
  const FittedModel& control() const { return *control_; }
  const FittedModel& joint() const { return *joint_; }

  /// Arm means E[Y|X,S=1,A=a] at the rows. For the interaction model these
  /// come from the joint fit with A set to a.
  Eigen::VectorXd arm_means(const AnalysisDataset& ds, std::span<const std::size_t> rows,
                            int arm) const;

  /// r(x) at each row. Throws `Error(ratio_evaluation)` naming the x value
  /// when the control-arm mean falls below the floor.
  Eigen::VectorXd evaluate(const AnalysisDataset& ds, std::span<const std::size_t> rows) const;

  /// r(x) at raw term values ordered as `x_terms()`.
  double evaluate(std::span<const double> x_terms) const;

 private:
  RatioModel() = default;
  double check_denominator(double mean, std::span<const double> x) const;

  RatioMethod method_ = RatioMethod::arm_specific;
  std::optional<FittedModel> treated_;
  std::optional<FittedModel> control_;
  std::optional<FittedModel> joint_;
  std::vector<std::string> x_terms_;
  double floor_ = kDefaultFloor;
};

struct NuisanceSet {
  RatioModel ratio;
  std::optional<FittedModel> g;  // E[Y | X, S=0]
  std::optional<FittedModel> h;  // E[Y | X, S=0, A=0]
  std::optional<FittedModel> m;  // E[Y | X, W, S=0, A=0]
  std::optional<FittedModel> b;  // E[ m(X, W) | X, S=0 ]

  bool any_external() const noexcept;
};

RatioModel fit_ratio(const AnalysisDataset& ds, const ModelSpec& spec, RatioMethod method,
                     double floor = RatioModel::kDefaultFloor);

FittedModel fit_g(const AnalysisDataset& ds, const ModelSpec& spec);
FittedModel fit_h(const AnalysisDataset& ds, const ModelSpec& spec);
FittedModel fit_m(const AnalysisDataset& ds, const ModelSpec& spec_with_w);

/// Regresses m(X_i, W_i), evaluated on every target row regardless of
/// treatment, on X by least squares. Returns `m` unchanged when the dataset
/// has no W columns.
FittedModel fit_iterated(const AnalysisDataset& ds, const FittedModel& m,
                         const ModelSpec& step3_spec);

/// Parses an external model document (JSON text).
FittedModel import_external_model(std::string_view doc);
std::string export_model(const FittedModel& model);

/// Everything needed to refit the nuisances of one estimator on any
/// resample of a dataset.
struct NuisanceRecipe {
  RatioMethod ratio_method = RatioMethod::arm_specific;
  ModelSpec ratio_spec;    // arm outcome models (or the joint log-link model) on X
  ModelSpec outcome_spec;  // g and h on X
  ModelSpec m_spec;        // m on (X, W)
  ModelSpec step3_spec;    // least-squares b on X
  double ratio_floor = RatioModel::kDefaultFloor;
  std::optional<FittedModel> external_g;
  std::optional<FittedModel> external_h;
  std::optional<FittedModel> external_m;
};

/// Default recipe for an outcome kind: bernoulli/logit, poisson/log or
/// gaussian/identity with an intercept, on all X columns (m adds W).
NuisanceRecipe default_recipe(const AnalysisDataset& ds);

/// Fits only the nuisances `estimator` needs; external models are used as
/// given.
NuisanceSet fit_nuisances(const AnalysisDataset& ds, const NuisanceRecipe& recipe,
                          EstimatorKind estimator);

}  // namespace reltransport
