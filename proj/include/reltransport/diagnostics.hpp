#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <boost/multiprecision/cpp_int.hpp>
#include <json.hpp>

#include "reltransport/bootstrap.hpp"
#include "reltransport/datamodel.hpp"
#include "reltransport/nuisance.hpp"

namespace reltransport {

// ---------------------------------------------------------------------------
// Observed-data restrictions
// ---------------------------------------------------------------------------

/// R1: trial arm means coincide given X. R2: the trial control-arm mean
/// equals the target mean given X.
enum class Restriction { R1, R2 };

std::string_view to_string(Restriction which);
Restriction parse_restriction(std::string_view text);

struct RestrictionModels {
  FittedModel treated;          // E[Y | X, S=1, A=1]
  FittedModel control;          // E[Y | X, S=1, A=0]
  std::optional<FittedModel> g; // E[Y | X, S=0], needed for R2
};

struct DiagnosticResult {
  Restriction restriction = Restriction::R1;
  double statistic = 0.0;
  std::optional<Interval> interval;
  std::string interpretation;
};

/// Target-standardized mean discrepancy: the average over target rows of
/// treated(x) - control(x) for R1, or control(x) - g(x) for R2.
double restriction_statistic(const AnalysisDataset& ds, const RestrictionModels& models,
                             Restriction which);

/// Fits the arm models (and g for R2) with `outcome_spec`, computes the
/// statistic and, when `bootstrap` is given, its percentile interval.
DiagnosticResult check_restriction(const AnalysisDataset& ds, const ModelSpec& outcome_spec,
                                   Restriction which,
                                   const std::optional<BootstrapOptions>& bootstrap);

nlohmann::json to_json(const DiagnosticResult& result);

// ---------------------------------------------------------------------------
// Positivity
// ---------------------------------------------------------------------------

struct ProbabilitySummary {
  std::string condition;       // "A6", "A3", "B2/C2"
  std::string quantity;        // e.g. "Pr[S=1|X]"
  double min = 0.0;
  double p01 = 0.0;
  double median = 0.0;
  std::size_t evaluated_rows = 0;
  std::vector<std::size_t> flagged_rows;
  bool degenerate = false;     // constant response; probability reported exactly
  std::string note;
};

struct PositivityReport {
  double threshold = 0.05;
  ProbabilitySummary participation;   // Pr[S=1|X] over target rows
  ProbabilitySummary trial_treatment; // Pr[A=1|X,S=1] over trial rows
  ProbabilitySummary target_control;  // Pr[A=0|X,(W),S=0] over target rows
};

/// Fits the three logistic models and summarizes them. Rows are flagged
/// when the reported probability is below `threshold`; for trial treatment
/// assignment either arm's probability below the threshold flags the row.
PositivityReport positivity_report(const AnalysisDataset& ds, const ModelSpec& selection_spec,
                                   const ModelSpec& treatment_spec,
                                   const ModelSpec& control_spec, double threshold = 0.05);

nlohmann::json to_json(const PositivityReport& report);

// ---------------------------------------------------------------------------
// Relative vs difference transportability
// ---------------------------------------------------------------------------

using Rational = boost::multiprecision::cpp_rational;

/// Conditional potential-outcome means within one covariate stratum:
/// e11 = E[Y1|x,S=1], e10 = E[Y0|x,S=1], e01 = E[Y1|x,S=0], e00 = E[Y0|x,S=0].
template <class T>
struct StratumMeans {
  T e11{};
  T e10{};
  T e01{};
  T e00{};
};

struct StratumFlags {
  bool holds_A4 = false;      // ratio transportability
  bool holds_A4star = false;  // difference transportability
  bool holds_I1 = false;      // no conditional effect in either population
  bool holds_I2 = false;      // both potential-outcome means agree across S
};

struct CompatReport {
  std::vector<StratumFlags> strata;
  /// Every stratum meeting both transportability conditions also meets I1
  /// or I2.
  bool theorem_satisfied = true;
};

namespace detail {
template <class T>
T abs_value(const T& v) {
  return v < T(0) ? T(-v) : v;
}
}  // namespace detail

/// Evaluates the four conditions per stratum with absolute tolerance `tol`.
/// With an exact number type and tol = 0 the check is exact.
template <class T>
CompatReport compat_check(std::span<const StratumMeans<T>> strata, const T& tol) {
  CompatReport report;
  report.strata.reserve(strata.size());
  for (const auto& s : strata) {
    if (s.e10 == T(0) || s.e00 == T(0))
      throw std::domain_error("compat_check: zero control mean");
    auto close = [&](const T& a, const T& b) { return detail::abs_value(T(a - b)) <= tol; };
    StratumFlags f;
    f.holds_A4 = close(T(s.e11 / s.e10), T(s.e01 / s.e00));
    f.holds_A4star = close(T(s.e11 - s.e10), T(s.e01 - s.e00));
    f.holds_I1 = close(s.e11, s.e10) && close(s.e01, s.e00);
    f.holds_I2 = close(s.e11, s.e01) && close(s.e10, s.e00);
    if (f.holds_A4 && f.holds_A4star && !(f.holds_I1 || f.holds_I2))
      report.theorem_satisfied = false;
    report.strata.push_back(f);
  }
  return report;
}

/// Floating-point entry point; zero control means raise `Error`.
CompatReport compat_check(std::span<const StratumMeans<double>> strata, double tol);

/// Exact rational path (tolerance zero).
CompatReport compat_check_exact(std::span<const StratumMeans<Rational>> strata);

nlohmann::json to_json(const CompatReport& report);

}  // namespace reltransport
