#pragma once

// Shared fixtures for the unit and acceptance tests: small dataset
// builders, fixed scenarios with hand-derived truths, and a brute-force
// stratified-standardization oracle that never touches the GLM engine.

#include <cmath>
#include <map>
#include <optional>
#include <stdexcept>
#include <vector>

#include "reltransport/datamodel.hpp"
#include "reltransport/estimators.hpp"
#include "reltransport/glm.hpp"
#include "reltransport/nuisance.hpp"
#include "reltransport/simulate.hpp"

namespace testing_support {

using namespace reltransport;

inline ObservationRow obs(int s, int a, double y, std::vector<double> x,
                          std::optional<std::vector<double>> w = std::nullopt) {
  ObservationRow r;
  r.s = s;
  r.a = a;
  r.y = y;
  r.x = std::move(x);
  r.w = std::move(w);
  return r;
}

/// `count` copies of a row pattern, the first `ones` of them with y = 1.
inline void add_group(std::vector<ObservationRow>& rows, int s, int a, int ones, int count,
                      std::vector<double> x,
                      std::optional<std::vector<double>> w = std::nullopt) {
  for (int i = 0; i < count; ++i) rows.push_back(obs(s, a, i < ones ? 1.0 : 0.0, x, w));
}

/// Model with fixed coefficients, as if imported.
inline glm::FittedModel fixed_model(glm::Family family, glm::Link link,
                                    std::vector<std::string> names,
                                    std::vector<double> coefficients) {
  glm::FittedModel m;
  m.spec.family = family;
  m.spec.link = link;
  m.spec.covariate_names = std::move(names);
  m.coefficients = Eigen::Map<const Eigen::VectorXd>(coefficients.data(),
                                                     static_cast<Eigen::Index>(coefficients.size()));
  m.converged = true;
  m.external = true;
  return m;
}

inline glm::FittedModel constant_model(double value) {
  return fixed_model(glm::Family::gaussian, glm::Link::identity, {}, {value});
}

/// r(x) == c everywhere.
inline RatioModel constant_ratio(double c) {
  return RatioModel::arm_specific(constant_model(c), constant_model(1.0));
}

inline glm::ModelSpec spec(glm::Family family, std::vector<std::string> terms) {
  glm::ModelSpec s;
  s.family = family;
  s.link = glm::canonical_link(family);
  s.covariate_names = std::move(terms);
  return s;
}

// ---------------------------------------------------------------------------
// Stratified standardization oracle
// ---------------------------------------------------------------------------

using Key = std::vector<double>;

struct MeanAcc {
  double sum = 0.0;
  double count = 0.0;
  double mean() const {
    if (count == 0.0) throw std::runtime_error("oracle: empty stratum");
    return sum / count;
  }
};

inline Key x_key(const AnalysisDataset& ds, std::size_t i) {
  Key k(static_cast<std::size_t>(ds.x().cols()));
  for (std::size_t j = 0; j < k.size(); ++j) k[j] = ds.x()(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
  return k;
}

inline Key xw_key(const AnalysisDataset& ds, std::size_t i) {
  Key k = x_key(ds, i);
  for (Eigen::Index j = 0; j < ds.w().cols(); ++j) k.push_back(ds.w()(static_cast<Eigen::Index>(i), j));
  return k;
}

struct OracleValues {
  double numerator = 0.0;    // per target row
  double denominator = 0.0;  // per target row
  double ratio() const { return numerator / denominator; }
  double difference() const { return numerator - denominator; }
};

/// Empirical conditional ratio from trial stratum means.
inline std::map<Key, double> oracle_ratio(const AnalysisDataset& ds) {
  std::map<Key, MeanAcc> treated, control;
  for (auto i : ds.trial_rows()) {
    auto& acc = ds.a(i) == 1 ? treated[x_key(ds, i)] : control[x_key(ds, i)];
    acc.sum += ds.y(i);
    acc.count += 1;
  }
  std::map<Key, double> r;
  for (const auto& [k, acc] : treated) r[k] = acc.mean() / control.at(k).mean();
  return r;
}

inline OracleValues oracle(const AnalysisDataset& ds, EstimatorKind kind) {
  const auto r = oracle_ratio(ds);
  std::map<Key, MeanAcc> g, h, m;
  for (auto i : ds.target_rows()) {
    const Key kx = x_key(ds, i);
    g[kx].sum += ds.y(i);
    g[kx].count += 1;
    if (ds.a(i) == 0) {
      h[kx].sum += ds.y(i);
      h[kx].count += 1;
      m[xw_key(ds, i)].sum += ds.y(i);
      m[xw_key(ds, i)].count += 1;
    }
  }
  // b(x) = sum_w m(x,w) * P(w | x, S=0) using all target rows.
  std::map<Key, double> b;
  if (kind == EstimatorKind::psi) {
    std::map<Key, MeanAcc> bacc;
    for (auto i : ds.target_rows()) {
      bacc[x_key(ds, i)].sum += m.at(xw_key(ds, i)).mean();
      bacc[x_key(ds, i)].count += 1;
    }
    for (const auto& [k, acc] : bacc) b[k] = acc.mean();
  }

  OracleValues out;
  for (auto i : ds.target_rows()) {
    const Key kx = x_key(ds, i);
    switch (kind) {
      case EstimatorKind::phi:
        out.numerator += r.at(kx) * g.at(kx).mean();
        out.denominator += ds.y(i);
        break;
      case EstimatorKind::chi:
        out.numerator += r.at(kx) * h.at(kx).mean();
        out.denominator += h.at(kx).mean();
        break;
      case EstimatorKind::psi:
        out.numerator += r.at(kx) * b.at(kx);
        out.denominator += m.at(xw_key(ds, i)).mean();
        break;
    }
  }
  const double n0 = static_cast<double>(ds.n0());
  out.numerator /= n0;
  out.denominator /= n0;
  return out;
}

/// Saturated terms over binary covariates: every main effect and product.
inline std::vector<std::string> saturated_terms(const std::vector<std::string>& names) {
  std::vector<std::string> out;
  const std::size_t k = names.size();
  for (std::size_t mask = 1; mask < (std::size_t{1} << k); ++mask) {
    std::string term;
    for (std::size_t j = 0; j < k; ++j) {
      if (!(mask & (std::size_t{1} << j))) continue;
      if (!term.empty()) term += ":";
      term += names[j];
    }
    out.push_back(term);
  }
  return out;
}

/// Saturated recipe over binary X (and W): logistic for binary outcomes,
/// log-linear for counts.
inline NuisanceRecipe saturated_recipe(const AnalysisDataset& ds) {
  const glm::Family family =
      ds.outcome_kind() == OutcomeKind::count ? glm::Family::poisson : glm::Family::bernoulli;
  NuisanceRecipe r;
  const auto xt = saturated_terms(ds.x_names());
  std::vector<std::string> all = ds.x_names();
  all.insert(all.end(), ds.w_names().begin(), ds.w_names().end());
  r.ratio_spec = spec(family, xt);
  r.outcome_spec = spec(family, xt);
  r.m_spec = spec(family, saturated_terms(all));
  r.step3_spec = spec(glm::Family::gaussian, xt);
  return r;
}

// ---------------------------------------------------------------------------
// Fixed scenarios. Truths derived by hand with exact fractions.
// ---------------------------------------------------------------------------

inline sim::CovariateCell cell(double x, double trial_mass, double target_mass,
                               double trial_baseline, double target_baseline, double effect) {
  sim::CovariateCell c;
  c.x = {x};
  c.trial_mass = trial_mass;
  c.target_mass = target_mass;
  c.trial_baseline = trial_baseline;
  c.target_baseline = target_baseline;
  c.effect = effect;
  return c;
}

/// Target X ~ Bernoulli(0.5), baselines 0.1 / 0.3, ratios 2 / 1.5, no
/// treatment in the target. Truth: 0.325 / 0.2, ratio 1.625, ATE 0.125.
/// Trial baselines are set high (treated means 0.9) to keep the ratio
/// estimate tight; the estimate of phi then has a standard deviation of
/// about 0.016 at n1 = n0 = 20000.
inline sim::ScenarioSpec scenario_a5() {
  sim::ScenarioSpec sc;
  sc.x_names = {"x"};
  sc.cells = {cell(0, 0.4, 0.5, 0.45, 0.1, 2.0), cell(1, 0.6, 0.5, 0.6, 0.3, 1.5)};
  return sc;
}

/// Same target as `scenario_a5`, with trial control means equal to the
/// target ones plus a constant `shift`.
inline sim::ScenarioSpec scenario_a5_shifted(double shift) {
  sim::ScenarioSpec sc;
  sc.x_names = {"x"};
  sc.cells = {cell(0, 0.5, 0.5, 0.1 + shift, 0.1, 2.0), cell(1, 0.5, 0.5, 0.3 + shift, 0.3, 1.5)};
  return sc;
}

/// Count outcome. Target treatment probability 0.8 at x=0 and 0.1 at x=1,
/// ratios 2 / 1, target control means 5 / 10. Truth: 10 / 7.5, ratio 4/3,
/// ATE 2.5. Ignoring treatment (naive phi) converges to 28/19.
inline sim::ScenarioSpec scenario_b() {
  sim::ScenarioSpec sc;
  sc.x_names = {"x"};
  sc.cells = {cell(0, 0.5, 0.5, 10.0, 5.0, 2.0), cell(1, 0.5, 0.5, 20.0, 10.0, 1.0)};
  sc.outcome = sim::OutcomeFamily::poisson;
  sc.treatment.policy = sim::TreatmentPolicy::logistic_in_x;
  sc.treatment.intercept = std::log(4.0);
  sc.treatment.x_coef = {-std::log(36.0)};
  return sc;
}
inline constexpr double kTruthBRatio = 4.0 / 3.0;
inline constexpr double kNaivePhiLimitB = 28.0 / 19.0;

/// Count outcome; binary W confounds target treatment. Control means
/// 4, 8 (x=0) and 8, 16 (x=1) by w, Pr[W=1|x] = 0.3 / 0.6, ratios 2 / 1.5.
/// Truth: 14.8 / 9, ratio 74/45, ATE 5.8.
inline sim::ScenarioSpec scenario_c() {
  sim::ScenarioSpec sc;
  sc.x_names = {"x"};
  sc.w_names = {"w"};
  auto c0 = cell(0, 0.5, 0.5, 10.0, 0.0, 2.0);
  c0.w = {{{0.0}, 0.7, 4.0}, {{1.0}, 0.3, 8.0}};
  auto c1 = cell(1, 0.5, 0.5, 20.0, 0.0, 1.5);
  c1.w = {{{0.0}, 0.4, 8.0}, {{1.0}, 0.6, 16.0}};
  sc.cells = {c0, c1};
  sc.outcome = sim::OutcomeFamily::poisson;
  sc.treatment.policy = sim::TreatmentPolicy::logistic_in_x_w;
  sc.treatment.intercept = -1.0;
  sc.treatment.x_coef = {0.5};
  sc.treatment.w_coef = {1.5};
  return sc;
}
inline constexpr double kTruthCRatio = 14.8 / 9.0;

/// Copy of a dataset with every target row relabelled a = 0, i.e. the
/// analysis wrongly assumes nobody in the target population was treated.
inline AnalysisDataset ignore_target_treatment(const AnalysisDataset& ds) {
  auto rows = ds.rows();
  for (auto& r : rows)
    if (r.s == 0) r.a = 0;
  return AnalysisDataset(rows, ds.x_names(), ds.w_names(), ds.outcome_kind());
}

}  // namespace testing_support
