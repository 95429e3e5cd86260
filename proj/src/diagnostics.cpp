#include "reltransport/diagnostics.hpp"

#include <algorithm>
#include <cmath>

#include "reltransport/error.hpp"

namespace reltransport {

namespace {

constexpr const char* kModule = "diagnostics";

[[noreturn]] void fail(ErrorCode code, const std::string& message) {
  throw Error(code, kModule, message);
}

Eigen::VectorXd outcomes(const AnalysisDataset& ds, std::span<const std::size_t> rows) {
  Eigen::VectorXd y(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t k = 0; k < rows.size(); ++k) y[static_cast<Eigen::Index>(k)] = ds.y(rows[k]);
  return y;
}

RestrictionModels fit_restriction_models(const AnalysisDataset& ds, const ModelSpec& spec,
                                         Restriction which) {
  const auto treated = ds.rows_where(1, 1);
  const auto control = ds.rows_where(1, 0);
  if (treated.empty() || control.empty()) fail(ErrorCode::empty_stratum, "empty trial arm");
  RestrictionModels models{fit_on_rows(ds, spec, treated, outcomes(ds, treated)),
                           fit_on_rows(ds, spec, control, outcomes(ds, control)), std::nullopt};
  if (which == Restriction::R2) models.g = fit_g(ds, spec);
  return models;
}

ProbabilitySummary summarize(std::string condition, std::string quantity,
                             const AnalysisDataset& ds, const ModelSpec& spec,
                             std::span<const std::size_t> fit_rows, const Eigen::VectorXd& response,
                             std::span<const std::size_t> eval_rows, double threshold,
                             bool two_sided) {
  ProbabilitySummary out;
  out.condition = std::move(condition);
  out.quantity = std::move(quantity);
  out.evaluated_rows = eval_rows.size();

  Eigen::VectorXd p;
  const double first = response.size() ? response[0] : 0.0;
  if ((response.array() == first).all()) {
    out.degenerate = true;
    out.note = "degenerate stratum: response constant at " + format_number(first) +
               "; logistic fit skipped (boundary)";
    p = Eigen::VectorXd::Constant(static_cast<Eigen::Index>(eval_rows.size()), first);
  } else {
    const FittedModel model = fit_on_rows(ds, spec, fit_rows, response);
    p = predict_rows(model, ds, eval_rows);
  }

  std::vector<double> sorted(p.data(), p.data() + p.size());
  std::sort(sorted.begin(), sorted.end());
  out.min = sorted.front();
  out.p01 = sample_quantile(sorted, 0.01);
  out.median = sample_quantile(sorted, 0.5);
  for (std::size_t k = 0; k < eval_rows.size(); ++k) {
    const double v = p[static_cast<Eigen::Index>(k)];
    if (v < threshold || (two_sided && 1.0 - v < threshold)) out.flagged_rows.push_back(eval_rows[k]);
  }
  return out;
}

nlohmann::json to_json(const ProbabilitySummary& s) {
  return {{"condition", s.condition},   {"quantity", s.quantity},
          {"min", s.min},               {"p01", s.p01},
          {"median", s.median},         {"evaluated_rows", s.evaluated_rows},
          {"flagged_rows", s.flagged_rows}, {"degenerate", s.degenerate},
          {"note", s.note}};
}

}  // namespace

std::string_view to_string(Restriction which) { return which == Restriction::R1 ? "R1" : "R2"; }

Restriction parse_restriction(std::string_view text) {
  if (text == "R1" || text == "r1") return Restriction::R1;
  if (text == "R2" || text == "r2") return Restriction::R2;
  fail(ErrorCode::invalid_argument, "unknown restriction '" + std::string(text) + "'");
}

double restriction_statistic(const AnalysisDataset& ds, const RestrictionModels& models,
                             Restriction which) {
  const auto rows = ds.target_rows();
  const Eigen::VectorXd control = predict_rows(models.control, ds, rows);
  Eigen::VectorXd other;
  if (which == Restriction::R1) {
    other = predict_rows(models.treated, ds, rows);
    return (other - control).sum() / static_cast<double>(rows.size());
  }
  if (!models.g) fail(ErrorCode::invalid_argument, "R2 needs a target outcome model g");
  other = predict_rows(*models.g, ds, rows);
  return (control - other).sum() / static_cast<double>(rows.size());
}

DiagnosticResult check_restriction(const AnalysisDataset& ds, const ModelSpec& outcome_spec,
                                   Restriction which,
                                   const std::optional<BootstrapOptions>& bootstrap) {
  DiagnosticResult result;
  result.restriction = which;
  auto statistic = [&outcome_spec, which](const AnalysisDataset& sample) {
    return restriction_statistic(sample, fit_restriction_models(sample, outcome_spec, which),
                                 which);
  };
  result.statistic = statistic(ds);
  if (bootstrap) result.interval = bootstrap_interval(ds, statistic, *bootstrap);
  const std::string what =
      which == Restriction::R1
          ? "trial arm means equal given X (R1)"
          : "trial control-arm mean equals target mean given X (R2)";
  if (!result.interval) {
    result.interpretation = "no interval computed; statistic 0 is consistent with " + what;
  } else if (result.interval->lower > 0.0 || result.interval->upper < 0.0) {
    result.interpretation = "interval excludes 0: evidence against " + what;
  } else {
    result.interpretation = "interval includes 0: no evidence against " + what;
  }
  return result;
}

nlohmann::json to_json(const DiagnosticResult& r) {
  nlohmann::json j{{"restriction", std::string(to_string(r.restriction))},
                   {"statistic", r.statistic},
                   {"interpretation", r.interpretation}};
  j["interval"] = r.interval ? to_json(*r.interval) : nlohmann::json(nullptr);
  return j;
}

PositivityReport positivity_report(const AnalysisDataset& ds, const ModelSpec& selection_spec,
                                   const ModelSpec& treatment_spec,
                                   const ModelSpec& control_spec, double threshold) {
  if (!(threshold >= 0.0 && threshold <= 1.0))
    fail(ErrorCode::invalid_argument, "threshold must lie in [0,1]");
  for (const auto* spec : {&selection_spec, &treatment_spec, &control_spec})
    if (spec->family != glm::Family::bernoulli)
      fail(ErrorCode::invalid_argument, "positivity models must be bernoulli");

  PositivityReport report;
  report.threshold = threshold;

  std::vector<std::size_t> all(ds.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  Eigen::VectorXd s(static_cast<Eigen::Index>(ds.size()));
  for (std::size_t i = 0; i < ds.size(); ++i) s[static_cast<Eigen::Index>(i)] = ds.s(i);
  report.participation = summarize("A6", "Pr[S=1|X]", ds, selection_spec, all, s,
                                   ds.target_rows(), threshold, false);

  const auto trial = ds.trial_rows();
  Eigen::VectorXd a(static_cast<Eigen::Index>(trial.size()));
  for (std::size_t k = 0; k < trial.size(); ++k) a[static_cast<Eigen::Index>(k)] = ds.a(trial[k]);
  report.trial_treatment = summarize("A3", "Pr[A=1|X,S=1]", ds, treatment_spec, trial, a, trial,
                                     threshold, true);

  const auto target = ds.target_rows();
  Eigen::VectorXd control(static_cast<Eigen::Index>(target.size()));
  for (std::size_t k = 0; k < target.size(); ++k)
    control[static_cast<Eigen::Index>(k)] = 1.0 - ds.a(target[k]);
  report.target_control = summarize("B2/C2", "Pr[A=0|X,W,S=0]", ds, control_spec, target,
                                    control, target, threshold, false);
  return report;
}

nlohmann::json to_json(const PositivityReport& report) {
  return {{"threshold", report.threshold},
          {"participation", to_json(report.participation)},
          {"trial_treatment", to_json(report.trial_treatment)},
          {"target_control", to_json(report.target_control)}};
}

CompatReport compat_check(std::span<const StratumMeans<double>> strata, double tol) {
  if (!(tol >= 0.0)) fail(ErrorCode::invalid_argument, "tolerance must be nonnegative");
  for (std::size_t k = 0; k < strata.size(); ++k)
    if (strata[k].e10 == 0.0 || strata[k].e00 == 0.0)
      fail(ErrorCode::invalid_argument, "zero control mean in stratum " + std::to_string(k));
  return compat_check<double>(strata, tol);
}

CompatReport compat_check_exact(std::span<const StratumMeans<Rational>> strata) {
  for (std::size_t k = 0; k < strata.size(); ++k)
    if (strata[k].e10 == 0 || strata[k].e00 == 0)
      fail(ErrorCode::invalid_argument, "zero control mean in stratum " + std::to_string(k));
  return compat_check<Rational>(strata, Rational(0));
}

nlohmann::json to_json(const CompatReport& report) {
  auto strata = nlohmann::json::array();
  for (const auto& f : report.strata)
    strata.push_back({{"holds_A4", f.holds_A4},
                      {"holds_A4star", f.holds_A4star},
                      {"holds_I1", f.holds_I1},
                      {"holds_I2", f.holds_I2}});
  return {{"strata", std::move(strata)}, {"theorem_satisfied", report.theorem_satisfied}};
}

}  // namespace reltransport
