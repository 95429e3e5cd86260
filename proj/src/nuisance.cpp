#include "reltransport/nuisance.hpp"

#include <sstream>

#include "reltransport/error.hpp"

namespace reltransport {

namespace {

constexpr const char* kModule = "nuisance";

[[noreturn]] void fail(ErrorCode code, const std::string& message) {
  throw Error(code, kModule, message);
}

std::string describe_x(std::span<const double> x, const std::vector<std::string>& names) {
  std::ostringstream out;
  out << '(';
  for (std::size_t j = 0; j < x.size(); ++j) {
    if (j) out << ", ";
    if (j < names.size()) out << names[j] << '=';
    out << format_number(x[j]);
  }
  out << ')';
  return out.str();
}

Eigen::VectorXd responses(const AnalysisDataset& ds, std::span<const std::size_t> rows) {
  Eigen::VectorXd y(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t k = 0; k < rows.size(); ++k) y[static_cast<Eigen::Index>(k)] = ds.y(rows[k]);
  return y;
}

std::vector<std::string> joint_names(const std::vector<std::string>& x_terms) {
  std::vector<std::string> names = x_terms;
  names.emplace_back(kTreatmentTerm);
  for (const auto& t : x_terms) names.push_back(std::string(kTreatmentTerm) + ":" + t);
  return names;
}

}  // namespace

std::string_view to_string(RatioMethod method) {
  return method == RatioMethod::arm_specific ? "arm-specific" : "log-link";
}

RatioMethod parse_ratio_method(std::string_view text) {
  if (text == "arm-specific" || text == "arm_specific") return RatioMethod::arm_specific;
  if (text == "log-link" || text == "log_link_interaction") return RatioMethod::log_link_interaction;
  fail(ErrorCode::invalid_argument, "unknown ratio method '" + std::string(text) + "'");
}

Eigen::VectorXd predict_rows(const FittedModel& model, const AnalysisDataset& ds,
                             std::span<const std::size_t> rows) {
  TermSet terms(ds, model.spec.covariate_names);
  return model.predict_means(terms.matrix(ds, rows));
}

FittedModel fit_on_rows(const AnalysisDataset& ds, const ModelSpec& spec,
                        std::span<const std::size_t> rows, const Eigen::VectorXd& response) {
  if (rows.empty()) fail(ErrorCode::empty_stratum, "no rows to fit");
  TermSet terms(ds, spec.covariate_names);
  glm::GlmData data{terms.matrix(ds, rows), response, {}};
  return glm::fit_glm(spec, data);
}

RatioModel RatioModel::arm_specific(FittedModel treated, FittedModel control, double floor) {
  if (treated.spec.covariate_names != control.spec.covariate_names)
    fail(ErrorCode::invalid_argument, "arm models must use the same covariate terms");
  RatioModel r;
  r.method_ = RatioMethod::arm_specific;
  r.x_terms_ = treated.spec.covariate_names;
  r.treated_ = std::move(treated);
  r.control_ = std::move(control);
  r.floor_ = floor;
  return r;
}

RatioModel RatioModel::log_link_interaction(FittedModel joint, std::vector<std::string> x_terms,
                                            double floor) {
  if (joint.spec.link != glm::Link::log)
    fail(ErrorCode::invalid_argument, "interaction ratio model needs a log link");
  if (joint.spec.covariate_names != joint_names(x_terms))
    fail(ErrorCode::invalid_argument, "interaction model terms must be (X, A, A:X)");
  RatioModel r;
  r.method_ = RatioMethod::log_link_interaction;
  r.joint_ = std::move(joint);
  r.x_terms_ = std::move(x_terms);
  r.floor_ = floor;
  return r;
}

double RatioModel::check_denominator(double mean, std::span<const double> x) const {
  if (!(mean >= floor_))
    fail(ErrorCode::ratio_evaluation, "control-arm mean " + format_number(mean) +
                                          " below floor " + format_number(floor_) + " at x=" +
                                          describe_x(x, x_terms_));
  return mean;
}

Eigen::VectorXd RatioModel::arm_means(const AnalysisDataset& ds,
                                      std::span<const std::size_t> rows, int arm) const {
  if (method_ == RatioMethod::arm_specific)
    return predict_rows(arm == 1 ? *treated_ : *control_, ds, rows);
  TermSet terms(ds, x_terms_);
  const Eigen::MatrixXd xt = terms.matrix(ds, rows);
  const auto p = xt.cols();
  const auto& beta = joint_->coefficients;
  const Eigen::Index off = joint_->spec.include_intercept ? 1 : 0;
  Eigen::VectorXd eta = xt * beta.segment(off, p);
  if (off) eta.array() += beta[0];
  if (arm == 1) {
    eta += xt * beta.segment(off + p + 1, p);
    eta.array() += beta[off + p];
  }
  return eta.array().exp().matrix();
}

Eigen::VectorXd RatioModel::evaluate(const AnalysisDataset& ds,
                                     std::span<const std::size_t> rows) const {
  const Eigen::VectorXd control = arm_means(ds, rows, 0);
  Eigen::VectorXd out(control.size());
  Eigen::MatrixXd xt;
  for (Eigen::Index k = 0; k < control.size(); ++k) {
    if (!(control[k] >= floor_)) {
      xt = TermSet(ds, x_terms_).matrix(ds, rows.subspan(static_cast<std::size_t>(k), 1));
      check_denominator(control[k], std::span<const double>(xt.data(), static_cast<std::size_t>(xt.size())));
    }
  }
  if (method_ == RatioMethod::arm_specific) {
    const Eigen::VectorXd treated = arm_means(ds, rows, 1);
    out = treated.cwiseQuotient(control);
    return out;
  }
  TermSet terms(ds, x_terms_);
  const Eigen::MatrixXd x = terms.matrix(ds, rows);
  const auto p = x.cols();
  const Eigen::Index off = joint_->spec.include_intercept ? 1 : 0;
  const auto& beta = joint_->coefficients;
  Eigen::VectorXd log_r = x * beta.segment(off + p + 1, p);
  log_r.array() += beta[off + p];
  return log_r.array().exp().matrix();
}

double RatioModel::evaluate(std::span<const double> x) const {
  if (x.size() != x_terms_.size())
    fail(ErrorCode::dimension_mismatch, "ratio evaluation expects " +
                                            std::to_string(x_terms_.size()) + " terms");
  if (method_ == RatioMethod::arm_specific) {
    const double den = check_denominator(control_->predict_mean(x), x);
    return treated_->predict_mean(x) / den;
  }
  const auto p = static_cast<Eigen::Index>(x.size());
  const Eigen::Index off = joint_->spec.include_intercept ? 1 : 0;
  const auto& beta = joint_->coefficients;
  double eta0 = off ? beta[0] : 0.0;
  double log_r = beta[off + p];
  for (Eigen::Index j = 0; j < p; ++j) {
    eta0 += beta[off + j] * x[static_cast<std::size_t>(j)];
    log_r += beta[off + p + 1 + j] * x[static_cast<std::size_t>(j)];
  }
  check_denominator(std::exp(eta0), x);
  return std::exp(log_r);
}

bool NuisanceSet::any_external() const noexcept {
  for (const auto* model : {&g, &h, &m, &b})
    if (*model && (*model)->external) return true;
  return false;
}

RatioModel fit_ratio(const AnalysisDataset& ds, const ModelSpec& spec, RatioMethod method,
                     double floor) {
  const auto treated = ds.rows_where(1, 1);
  const auto control = ds.rows_where(1, 0);
  if (treated.empty()) fail(ErrorCode::empty_stratum, "empty trial arm a=1");
  if (control.empty()) fail(ErrorCode::empty_stratum, "empty trial arm a=0");

  if (method == RatioMethod::arm_specific) {
    return RatioModel::arm_specific(fit_on_rows(ds, spec, treated, responses(ds, treated)),
                                    fit_on_rows(ds, spec, control, responses(ds, control)), floor);
  }

  if (spec.link != glm::Link::log)
    fail(ErrorCode::invalid_argument, "log-link ratio method requires a log link");
  const auto trial = ds.trial_rows();
  TermSet terms(ds, spec.covariate_names);
  if (terms.uses_w()) fail(ErrorCode::invalid_argument, "ratio model terms must use X only");
  const Eigen::MatrixXd xt = terms.matrix(ds, trial);
  const auto n = xt.rows();
  const auto p = xt.cols();
  Eigen::MatrixXd design(n, 2 * p + 1);
  design.leftCols(p) = xt;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double a = ds.a(trial[static_cast<std::size_t>(i)]);
    design(i, p) = a;
    design.row(i).tail(p) = a * xt.row(i);
  }
  ModelSpec joint_spec = spec;
  joint_spec.covariate_names = joint_names(spec.covariate_names);
  glm::GlmData data{std::move(design), responses(ds, trial), {}};
  return RatioModel::log_link_interaction(glm::fit_glm(joint_spec, data), spec.covariate_names,
                                          floor);
}

FittedModel fit_g(const AnalysisDataset& ds, const ModelSpec& spec) {
  const auto rows = ds.target_rows();
  return fit_on_rows(ds, spec, rows, responses(ds, rows));
}

FittedModel fit_h(const AnalysisDataset& ds, const ModelSpec& spec) {
  const auto rows = ds.rows_where(0, 0);
  if (rows.empty()) fail(ErrorCode::empty_stratum, "no target rows with a=0");
  return fit_on_rows(ds, spec, rows, responses(ds, rows));
}

FittedModel fit_m(const AnalysisDataset& ds, const ModelSpec& spec_with_w) {
  return fit_h(ds, spec_with_w);
}

FittedModel fit_iterated(const AnalysisDataset& ds, const FittedModel& m,
                         const ModelSpec& step3_spec) {
  if (ds.w_names().empty()) return m;
  if (step3_spec.family != glm::Family::gaussian || step3_spec.link != glm::Link::identity)
    fail(ErrorCode::invalid_argument, "the iterated regression is least squares (gaussian/identity)");
  TermSet terms(ds, step3_spec.covariate_names);
  if (terms.uses_w()) fail(ErrorCode::invalid_argument, "the iterated regression must use X only");
  const auto rows = ds.target_rows();
  const Eigen::VectorXd pseudo = predict_rows(m, ds, rows);
  return fit_on_rows(ds, step3_spec, rows, pseudo);
}

FittedModel import_external_model(std::string_view doc) {
  nlohmann::json parsed;
  try {
    parsed = nlohmann::json::parse(doc);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::model_document, kModule,
                std::string("malformed model document: ") + e.what());
  }
  return glm::model_from_document(parsed);
}

std::string export_model(const FittedModel& model) {
  return glm::model_document(model).dump(2) + "\n";
}

NuisanceRecipe default_recipe(const AnalysisDataset& ds) {
  ModelSpec base;
  switch (ds.outcome_kind()) {
    case OutcomeKind::binary: base.family = glm::Family::bernoulli; break;
    case OutcomeKind::count: base.family = glm::Family::poisson; break;
    case OutcomeKind::continuous: base.family = glm::Family::gaussian; break;
  }
  base.link = glm::canonical_link(base.family);
  base.covariate_names = ds.x_names();

  NuisanceRecipe recipe;
  recipe.ratio_spec = base;
  recipe.outcome_spec = base;
  recipe.m_spec = base;
  recipe.m_spec.covariate_names.insert(recipe.m_spec.covariate_names.end(), ds.w_names().begin(),
                                       ds.w_names().end());
  recipe.step3_spec = base;
  recipe.step3_spec.family = glm::Family::gaussian;
  recipe.step3_spec.link = glm::Link::identity;
  return recipe;
}

NuisanceSet fit_nuisances(const AnalysisDataset& ds, const NuisanceRecipe& recipe,
                          EstimatorKind estimator) {
  NuisanceSet set{fit_ratio(ds, recipe.ratio_spec, recipe.ratio_method, recipe.ratio_floor),
                  std::nullopt, std::nullopt, std::nullopt, std::nullopt};
  switch (estimator) {
    case EstimatorKind::phi:
      set.g = recipe.external_g ? *recipe.external_g : fit_g(ds, recipe.outcome_spec);
      break;
    case EstimatorKind::chi:
      set.h = recipe.external_h ? *recipe.external_h : fit_h(ds, recipe.outcome_spec);
      break;
    case EstimatorKind::psi:
      set.m = recipe.external_m ? *recipe.external_m : fit_m(ds, recipe.m_spec);
      set.b = fit_iterated(ds, *set.m, recipe.step3_spec);
      break;
  }
  return set;
}

}  // namespace reltransport
