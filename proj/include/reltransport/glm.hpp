#pragma once

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>
#include <json.hpp>

namespace reltransport::glm {

enum class Family { gaussian, bernoulli, poisson };
enum class Link { identity, logit, log };

std::string_view to_string(Family family);
std::string_view to_string(Link link);
Family parse_family(std::string_view text);
Link parse_link(std::string_view text);

/// Name used for the intercept coefficient in model documents.
inline constexpr std::string_view kInterceptName = "(intercept)";

struct ModelSpec {
  Family family = Family::gaussian;
  Link link = Link::identity;
  std::vector<std::string> covariate_names;
  bool include_intercept = true;
  int max_iter = 100;
  double tol = 1e-8;

  /// Throws on disallowed family/link pairs, duplicate names or bad limits.
  void validate() const;
  std::size_t width() const noexcept {
    return covariate_names.size() + (include_intercept ? 1 : 0);
  }
};

/// Canonical link for the family: identity, logit, log.
Link canonical_link(Family family);

/// Design data without the intercept column. An empty weight vector means
/// unit weights.
struct GlmData {
  Eigen::MatrixXd covariates;
  Eigen::VectorXd response;
  Eigen::VectorXd weights;
};

struct FittedModel {
  ModelSpec spec;
  Eigen::VectorXd coefficients;  // intercept first when present
  bool converged = false;
  int iterations = 0;
  std::optional<std::size_t> n_obs;  // absent for imported models
  bool external = false;

  std::vector<std::string> coefficient_names() const;

  /// `covariates` are the term values in `spec.covariate_names` order.
  double linear_predictor(std::span<const double> covariates) const;
  double predict_mean(std::span<const double> covariates) const;

  /// Means for every row of a covariate matrix (no intercept column).
  Eigen::VectorXd predict_means(const Eigen::MatrixXd& covariates) const;
};

/// Fits by iteratively reweighted least squares with step-halving.
///
/// Throws `Error(singular_design)` for a rank-deficient design and
/// `NonConvergenceError` when the iteration limit or step-halving budget is
/// exhausted. The boundary variant is used when fitted means run into the
/// edge of the family's range (separation, degenerate outcomes, log-binomial
/// means reaching 1).
FittedModel fit_glm(const ModelSpec& spec, const GlmData& data);

/// Weighted log-likelihood at `beta`. Gaussian uses unit dispersion.
double log_likelihood(const ModelSpec& spec, const GlmData& data,
                      const Eigen::VectorXd& beta);

/// Gradient of `log_likelihood` with respect to `beta`.
Eigen::VectorXd score(const ModelSpec& spec, const GlmData& data,
                      const Eigen::VectorXd& beta);

double inverse_link(Link link, double eta);

/// Model document: family, link, intercept flag and the ordered
/// (name, value) coefficient list.
nlohmann::json model_document(const FittedModel& model);

/// Parses a model document. The result is flagged external.
FittedModel model_from_document(const nlohmann::json& doc);

}  // namespace reltransport::glm
