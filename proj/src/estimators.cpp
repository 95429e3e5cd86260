#include "reltransport/estimators.hpp"

#include <cmath>

#include "reltransport/error.hpp"

namespace reltransport {

namespace {

constexpr const char* kModule = "estimators";

[[noreturn]] void fail(ErrorCode code, const std::string& message) {
  throw Error(code, kModule, message);
}

const FittedModel& need(const std::optional<FittedModel>& model, const char* what) {
  if (!model) fail(ErrorCode::invalid_argument, std::string("nuisance set lacks ") + what);
  return *model;
}

// Neumaier-compensated sum of a[i] * b[i] (b == nullptr means b[i] = 1), so
// that a constant factor comes out of the sum to within a couple of ulp.
double compensated_dot(const Eigen::VectorXd& a, const Eigen::VectorXd* b) {
  double sum = 0.0, carry = 0.0;
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    const double v = b ? a[i] * (*b)[i] : a[i];
    const double t = sum + v;
    carry += std::abs(sum) >= std::abs(v) ? (sum - t) + v : (v - t) + sum;
    sum = t;
  }
  return sum + carry;
}

// The two per-target-row averaged sums behind each functional.
struct Sums {
  double numerator = 0.0;
  double denominator = 0.0;
};

Sums standardized_sums(const AnalysisDataset& ds, const NuisanceSet& nuisances,
                       EstimatorKind kind) {
  const auto rows = ds.target_rows();
  ValidationReport report = validate_dataset(ds, kind);
  require_valid(report);

  const Eigen::VectorXd r = nuisances.ratio.evaluate(ds, rows);
  Eigen::VectorXd standardized;  // multiplies r
  double den_sum = 0.0;
  switch (kind) {
    case EstimatorKind::phi: {
      standardized = predict_rows(need(nuisances.g, "g"), ds, rows);
      for (auto i : rows) den_sum += ds.y(i);
      break;
    }
    case EstimatorKind::chi: {
      standardized = predict_rows(need(nuisances.h, "h"), ds, rows);
      den_sum = compensated_dot(standardized, nullptr);
      break;
    }
    case EstimatorKind::psi: {
      standardized = predict_rows(need(nuisances.b, "b"), ds, rows);
      den_sum = compensated_dot(predict_rows(need(nuisances.m, "m"), ds, rows), nullptr);
      break;
    }
  }
  const double n0 = static_cast<double>(rows.size());
  return {compensated_dot(r, &standardized) / n0, den_sum / n0};
}

Estimate make(const AnalysisDataset& ds, const NuisanceSet& nuisances, EstimatorKind kind,
              Estimand estimand) {
  const Sums sums = standardized_sums(ds, nuisances, kind);
  Estimate e;
  e.estimand = estimand;
  e.estimator = estimator_name(kind, estimand);
  e.numerator = sums.numerator;
  e.denominator = sums.denominator;
  e.n0 = ds.n0();
  e.n1 = ds.n1();
  e.external_nuisance = nuisances.any_external();
  if (estimand == Estimand::mean_ratio) {
    if (sums.denominator == 0.0)
      fail(ErrorCode::zero_denominator,
           std::string("zero denominator for ") + std::string(to_string(e.estimator)));
    e.value = sums.numerator / sums.denominator;
  } else {
    e.value = sums.numerator - sums.denominator;
  }
  if (!std::isfinite(e.value)) fail(ErrorCode::zero_denominator, "non-finite estimate");
  return e;
}

}  // namespace

std::string_view to_string(Estimand estimand) {
  return estimand == Estimand::mean_ratio ? "mean_ratio" : "ate";
}

std::string_view to_string(EstimatorName name) {
  switch (name) {
    case EstimatorName::phi: return "phi";
    case EstimatorName::chi: return "chi";
    case EstimatorName::psi: return "psi";
    case EstimatorName::beta: return "beta";
    case EstimatorName::gamma: return "gamma";
    case EstimatorName::delta: return "delta";
  }
  return "phi";
}

Estimand parse_estimand(std::string_view text) {
  if (text == "ratio" || text == "mean_ratio") return Estimand::mean_ratio;
  if (text == "ate") return Estimand::ate;
  fail(ErrorCode::invalid_argument, "unknown estimand '" + std::string(text) + "'");
}

EstimatorName estimator_name(EstimatorKind kind, Estimand estimand) {
  const bool ratio = estimand == Estimand::mean_ratio;
  switch (kind) {
    case EstimatorKind::phi: return ratio ? EstimatorName::phi : EstimatorName::beta;
    case EstimatorKind::chi: return ratio ? EstimatorName::chi : EstimatorName::gamma;
    case EstimatorKind::psi: return ratio ? EstimatorName::psi : EstimatorName::delta;
  }
  return EstimatorName::phi;
}

Estimate estimate_phi(const AnalysisDataset& ds, const NuisanceSet& nuisances) {
  return make(ds, nuisances, EstimatorKind::phi, Estimand::mean_ratio);
}

Estimate estimate_chi(const AnalysisDataset& ds, const NuisanceSet& nuisances) {
  return make(ds, nuisances, EstimatorKind::chi, Estimand::mean_ratio);
}

Estimate estimate_psi(const AnalysisDataset& ds, const NuisanceSet& nuisances) {
  return make(ds, nuisances, EstimatorKind::psi, Estimand::mean_ratio);
}

Estimate estimate_ate(const AnalysisDataset& ds, const NuisanceSet& nuisances,
                      EstimatorKind variant) {
  return make(ds, nuisances, variant, Estimand::ate);
}

Estimate run_pipeline(const AnalysisDataset& ds, const Pipeline& pipeline) {
  require_valid(validate_dataset(ds, pipeline.estimator));
  const NuisanceSet nuisances = fit_nuisances(ds, pipeline.recipe, pipeline.estimator);
  return make(ds, nuisances, pipeline.estimator, pipeline.estimand);
}

nlohmann::json to_json(const Estimate& e) {
  return {{"estimand", std::string(to_string(e.estimand))},
          {"estimator", std::string(to_string(e.estimator))},
          {"point", e.value},
          {"numerator", e.numerator},
          {"denominator", e.denominator},
          {"n0", e.n0},
          {"n1", e.n1},
          {"external_nuisance", e.external_nuisance}};
}

}  // namespace reltransport
