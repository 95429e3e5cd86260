#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "reltransport/error.hpp"
#include "support.hpp"

using namespace reltransport;
using namespace testing_support;

namespace {

/// Trial: x=0 arm means 0.2 / 0.1, x=1 arm means 0.6 / 0.4 (ten rows each).
void add_trial(std::vector<ObservationRow>& rows) {
  add_group(rows, 1, 1, 2, 10, {0});
  add_group(rows, 1, 0, 1, 10, {0});
  add_group(rows, 1, 1, 6, 10, {1});
  add_group(rows, 1, 0, 4, 10, {1});
}

std::vector<std::size_t> all_rows(const AnalysisDataset& ds) {
  std::vector<std::size_t> r(ds.size());
  for (std::size_t i = 0; i < r.size(); ++i) r[i] = i;
  return r;
}

/// Target with W: (x,w) control means 0.1, 0.2, 0.3, 0.4 from ten rows
/// each, plus treated rows 5 / 15 / 0 / 10 (y = 0).
AnalysisDataset psi_worked_example() {
  std::vector<ObservationRow> rows;
  add_trial(rows);
  const double cells[4][2] = {{0, 0}, {0, 1}, {1, 0}, {1, 1}};
  const int treated[4] = {5, 15, 0, 10};
  for (int k = 0; k < 4; ++k) {
    const std::vector<double> x{cells[k][0]};
    const std::vector<double> w{cells[k][1]};
    add_group(rows, 0, 0, k + 1, 10, x, w);
    add_group(rows, 0, 1, 0, treated[k], x, w);
  }
  return AnalysisDataset(rows, {"x"}, {"w"}, OutcomeKind::binary);
}

}  // namespace

TEST(Ratio, SaturatedArmSpecificMatchesStratumRatio) {
  std::vector<ObservationRow> rows;
  add_trial(rows);
  add_group(rows, 0, 0, 1, 4, {0});
  add_group(rows, 0, 0, 1, 4, {1});
  const AnalysisDataset ds(rows, {"x"}, {}, OutcomeKind::binary);
  const auto r = fit_ratio(ds, spec(glm::Family::bernoulli, {"x"}), RatioMethod::arm_specific);
  const double x0 = 0.0, x1 = 1.0;
  EXPECT_NEAR(r.evaluate(std::span<const double>(&x0, 1)), 2.0, 1e-8);
  EXPECT_NEAR(r.evaluate(std::span<const double>(&x1, 1)), 1.5, 1e-8);

  auto log_spec = spec(glm::Family::bernoulli, {"x"});
  log_spec.link = glm::Link::log;
  const auto joint = fit_ratio(ds, log_spec, RatioMethod::log_link_interaction);
  const auto a = r.evaluate(ds, ds.target_rows());
  const auto b = joint.evaluate(ds, ds.target_rows());
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    EXPECT_NEAR(a(i), b(i), 1e-8);
    EXPECT_GT(a(i), 0.0);
  }
}

TEST(Ratio, EqualArmsGiveUnitRatio) {
  std::vector<ObservationRow> rows;
  add_group(rows, 1, 1, 3, 10, {0});
  add_group(rows, 1, 0, 3, 10, {0});
  add_group(rows, 1, 1, 5, 10, {1});
  add_group(rows, 1, 0, 5, 10, {1});
  add_group(rows, 0, 0, 1, 4, {0});
  const AnalysisDataset ds(rows, {"x"}, {}, OutcomeKind::binary);
  const auto r = fit_ratio(ds, spec(glm::Family::bernoulli, {"x"}), RatioMethod::arm_specific);
  const auto v = r.evaluate(ds, all_rows(ds));
  for (Eigen::Index i = 0; i < v.size(); ++i) EXPECT_EQ(v(i), 1.0);
}

TEST(Ratio, ControlMeanBelowFloorIsError) {
  const auto r = RatioModel::arm_specific(constant_model(0.5), constant_model(0.0));
  try {
    r.evaluate(std::span<const double>{});
    FAIL() << "expected ratio evaluation error";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::ratio_evaluation);
  }
}

TEST(OutcomeModels, InterceptOnlyLogit) {
  std::vector<ObservationRow> rows;
  add_trial(rows);
  for (int i = 0; i < 4; ++i) rows.push_back(obs(0, 0, i % 2, {static_cast<double>(i)}));
  const AnalysisDataset ds(rows, {"x"}, {}, OutcomeKind::binary);
  const auto g = fit_g(ds, spec(glm::Family::bernoulli, {}));
  const auto p = predict_rows(g, ds, ds.target_rows());
  for (Eigen::Index i = 0; i < p.size(); ++i) EXPECT_NEAR(p(i), 0.5, 1e-12);
}

TEST(OutcomeModels, SaturatedGAndHAreStratumMeans) {
  std::vector<ObservationRow> rows;
  add_trial(rows);
  add_group(rows, 0, 0, 1, 4, {0});  // g(0) = 0.25
  add_group(rows, 0, 0, 2, 4, {1});  // g(1) = 0.5
  const AnalysisDataset ds(rows, {"x"}, {}, OutcomeKind::binary);
  const auto g = fit_g(ds, spec(glm::Family::bernoulli, {"x"}));
  const auto h = fit_h(ds, spec(glm::Family::bernoulli, {"x"}));
  const auto p = predict_rows(g, ds, ds.target_rows());
  EXPECT_NEAR(p(0), 0.25, 1e-8);
  EXPECT_NEAR(p(7), 0.5, 1e-8);
  // every target row is a control, so h and g are the same fit
  EXPECT_EQ(g.coefficients, h.coefficients);
}

TEST(OutcomeModels, HFitsTargetControlsOnly) {
  std::vector<ObservationRow> rows;
  add_trial(rows);
  add_group(rows, 0, 0, 1, 5, {0});   // 0.2
  add_group(rows, 0, 0, 2, 5, {1});   // 0.4
  add_group(rows, 0, 1, 5, 5, {0});   // treated, ignored by h
  const AnalysisDataset ds(rows, {"x"}, {}, OutcomeKind::binary);
  const auto h = fit_h(ds, spec(glm::Family::bernoulli, {"x"}));
  const double x0 = 0, x1 = 1;
  EXPECT_NEAR(h.predict_mean(std::span<const double>(&x0, 1)), 0.2, 1e-8);
  EXPECT_NEAR(h.predict_mean(std::span<const double>(&x1, 1)), 0.4, 1e-8);
}

TEST(OutcomeModels, AllOnesControlsFailAtBoundary) {
  std::vector<ObservationRow> rows;
  add_trial(rows);
  add_group(rows, 0, 0, 4, 4, {0});
  const AnalysisDataset ds(rows, {"x"}, {}, OutcomeKind::binary);
  try {
    fit_h(ds, spec(glm::Family::bernoulli, {}));
    FAIL() << "expected boundary non-convergence";
  } catch (const NonConvergenceError& e) {
    EXPECT_TRUE(e.boundary());
  }
}

TEST(OutcomeModels, DuplicatedCovariateIsSingular) {
  std::vector<ObservationRow> rows;
  add_group(rows, 1, 1, 2, 10, {0, 0});
  add_group(rows, 1, 0, 1, 10, {0, 0});
  add_group(rows, 0, 0, 1, 4, {0, 0});
  add_group(rows, 0, 0, 2, 4, {1, 1});
  const AnalysisDataset ds(rows, {"x", "x2"}, {}, OutcomeKind::binary);
  try {
    fit_g(ds, spec(glm::Family::bernoulli, {"x", "x2"}));
    FAIL() << "expected singular design";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::singular_design);
  }
}

TEST(OutcomeModels, SaturatedMReproducesFourStratumMeans) {
  const auto ds = psi_worked_example();
  const auto m = fit_m(ds, spec(glm::Family::bernoulli, {"x", "w", "x:w"}));
  const double expect[2][2] = {{0.1, 0.2}, {0.3, 0.4}};
  const auto p = predict_rows(m, ds, ds.target_rows());
  Eigen::Index k = 0;
  for (auto i : ds.target_rows()) {
    const auto x = static_cast<int>(ds.x()(static_cast<Eigen::Index>(i), 0));
    const auto w = static_cast<int>(ds.w()(static_cast<Eigen::Index>(i), 0));
    EXPECT_NEAR(p(k++), expect[x][w], 1e-8);
  }
}

TEST(OutcomeModels, ConstantWIsSingularWithIntercept) {
  std::vector<ObservationRow> rows;
  add_trial(rows);
  add_group(rows, 0, 0, 1, 5, {0}, std::vector<double>{1});
  add_group(rows, 0, 0, 2, 5, {1}, std::vector<double>{1});
  const AnalysisDataset ds(rows, {"x"}, {"w"}, OutcomeKind::binary);
  EXPECT_THROW(fit_m(ds, spec(glm::Family::bernoulli, {"x", "w"})), Error);
}

TEST(Iterated, NoWReturnsMUnchanged) {
  std::vector<ObservationRow> rows;
  add_trial(rows);
  add_group(rows, 0, 0, 1, 5, {0});
  add_group(rows, 0, 0, 2, 5, {1});
  const AnalysisDataset ds(rows, {"x"}, {}, OutcomeKind::binary);
  const auto h = fit_h(ds, spec(glm::Family::bernoulli, {"x"}));
  const auto m = fit_m(ds, spec(glm::Family::bernoulli, {"x"}));
  const auto b = fit_iterated(ds, m, spec(glm::Family::gaussian, {"x"}));
  const auto ph = predict_rows(h, ds, all_rows(ds));
  const auto pb = predict_rows(b, ds, all_rows(ds));
  for (Eigen::Index i = 0; i < ph.size(); ++i) EXPECT_EQ(ph(i), pb(i));
}

TEST(Iterated, SaturatedStepThreeIsEmpiricalIteratedMean) {
  const auto ds = psi_worked_example();
  const auto m = fit_m(ds, spec(glm::Family::bernoulli, {"x", "w", "x:w"}));
  const auto b = fit_iterated(ds, m, spec(glm::Family::gaussian, {"x"}));
  const double x0 = 0, x1 = 1;
  // (15 * 0.1 + 25 * 0.2) / 40 and (10 * 0.3 + 20 * 0.4) / 30
  EXPECT_NEAR(b.predict_mean(std::span<const double>(&x0, 1)), 13.0 / 80.0, 1e-8);
  EXPECT_NEAR(b.predict_mean(std::span<const double>(&x1, 1)), 11.0 / 30.0, 1e-8);
}

TEST(Iterated, StepThreePreservesTheSumOfM) {
  std::mt19937_64 rng(21);
  std::normal_distribution<double> z;
  std::vector<ObservationRow> rows;
  for (int i = 0; i < 60; ++i) rows.push_back(obs(1, i % 2, 1 + z(rng), {z(rng)}));
  for (int i = 0; i < 80; ++i)
    rows.push_back(obs(0, i % 3 == 0, 1 + z(rng), {z(rng)}, std::vector<double>{z(rng)}));
  const AnalysisDataset ds(rows, {"x"}, {"w"}, OutcomeKind::continuous);
  const auto m = fit_m(ds, spec(glm::Family::gaussian, {"x", "w", "x:w"}));
  const auto b = fit_iterated(ds, m, spec(glm::Family::gaussian, {"x"}));
  const auto pm = predict_rows(m, ds, ds.target_rows());
  const auto pb = predict_rows(b, ds, ds.target_rows());
  EXPECT_NEAR((pm - pb).sum(), 0.0, 1e-8);
}

TEST(Iterated, StepThreeMustBeLeastSquaresOnX) {
  const auto ds = psi_worked_example();
  const auto m = fit_m(ds, spec(glm::Family::bernoulli, {"x", "w", "x:w"}));
  EXPECT_THROW(fit_iterated(ds, m, spec(glm::Family::bernoulli, {"x"})), Error);
  EXPECT_THROW(fit_iterated(ds, m, spec(glm::Family::gaussian, {"x", "w"})), Error);
}

TEST(External, LogitInterceptDocumentPredictsHalf) {
  const auto m = import_external_model(
      R"doc({"family":"bernoulli","link":"logit","intercept":true,
          "coefficients":[{"name":"(intercept)","value":0}]})doc");
  EXPECT_TRUE(m.external);
  EXPECT_DOUBLE_EQ(m.predict_mean({}), 0.5);
}

TEST(External, UnknownLinkIsParseError) {
  try {
    import_external_model(
        R"doc({"family":"bernoulli","link":"cauchit","coefficients":[{"name":"(intercept)","value":0}]})doc");
    FAIL() << "expected model document error";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::model_document);
  }
}

TEST(External, ExportImportIsBitForBit) {
  const auto ds = psi_worked_example();
  const auto m = fit_m(ds, spec(glm::Family::bernoulli, {"x", "w", "x:w"}));
  const auto back = import_external_model(export_model(m));
  const auto a = predict_rows(m, ds, ds.target_rows());
  const auto b = predict_rows(back, ds, ds.target_rows());
  for (Eigen::Index i = 0; i < a.size(); ++i) EXPECT_EQ(a(i), b(i));
}

TEST(Recipe, FitsOnlyWhatTheEstimatorNeeds) {
  const auto ds = psi_worked_example();
  const auto recipe = saturated_recipe(ds);
  const auto chi = fit_nuisances(ds, recipe, EstimatorKind::chi);
  EXPECT_TRUE(chi.h.has_value());
  EXPECT_FALSE(chi.g.has_value());
  EXPECT_FALSE(chi.m.has_value());
  const auto psi = fit_nuisances(ds, recipe, EstimatorKind::psi);
  EXPECT_TRUE(psi.m.has_value());
  EXPECT_TRUE(psi.b.has_value());
  EXPECT_FALSE(psi.any_external());

  auto with_external = recipe;
  with_external.external_h = constant_model(0.3);
  EXPECT_TRUE(fit_nuisances(ds, with_external, EstimatorKind::chi).any_external());
}
