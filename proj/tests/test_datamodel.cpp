#include <gtest/gtest.h>

#include <random>
#include <sstream>

#include "reltransport/error.hpp"
#include "support.hpp"

using namespace reltransport;
using testing_support::obs;

namespace {

ColumnBindings xcols(std::vector<std::string> x, std::vector<std::string> w = {}) {
  ColumnBindings c;
  c.x = std::move(x);
  c.w = std::move(w);
  return c;
}

AnalysisDataset parse(const std::string& text, const ColumnBindings& cols,
                      OutcomeKind kind = OutcomeKind::binary) {
  std::istringstream in(text);
  return load_dataset(in, cols, kind);
}

template <class F>
Error catch_error(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e;
  }
  ADD_FAILURE() << "expected reltransport::Error";
  return Error(ErrorCode::invalid_argument, "test", "none");
}

}  // namespace

TEST(Ingest, FourRowFile) {
  const auto ds = parse("s,a,y,x\n1,1,1,0.5\n1,0,0,1.5\n0,0,1,2\n0,0,0,3\n", xcols({"x"}));
  EXPECT_EQ(ds.n1(), 2u);
  EXPECT_EQ(ds.n0(), 2u);
  EXPECT_EQ(ds.size(), 4u);
  EXPECT_DOUBLE_EQ(ds.x()(1, 0), 1.5);
  EXPECT_EQ(ds.rows_where(1, 1).size(), 1u);
}

TEST(Ingest, ColumnsInAnyOrderAndExtraColumnsIgnored) {
  const auto ds = parse("id,x,y,a,s\n7,0.5,1,1,1\n8,1,0,0,0\n", xcols({"x"}));
  EXPECT_EQ(ds.n1(), 1u);
  EXPECT_EQ(ds.a(0), 1);
  EXPECT_DOUBLE_EQ(ds.x()(1, 0), 1.0);
}

TEST(Ingest, SOutsideIndicatorRangeNamesTheRow) {
  auto e = catch_error([] { parse("s,a,y,x\n1,1,1,0\n2,0,0,1\n", xcols({"x"})); });
  EXPECT_EQ(e.code(), ErrorCode::invalid_indicator);
  EXPECT_NE(std::string(e.what()).find("s outside {0,1}"), std::string::npos) << e.what();
  EXPECT_NE(std::string(e.what()).find("3"), std::string::npos) << e.what();
}

TEST(Ingest, TargetRowMissingWCellIsParseError) {
  auto e = catch_error([] {
    parse("s,a,y,x,w\n1,1,1,0,\n0,0,0,1,1\n0,0,1,1,\n", xcols({"x"}, {"w"}));
  });
  EXPECT_EQ(e.code(), ErrorCode::parse_error);
}

TEST(Ingest, TrialWCellsAreIgnored) {
  const auto ds = parse("s,a,y,x,w\n1,1,1,0,5\n1,0,0,0,\n0,0,0,1,1\n", xcols({"x"}, {"w"}));
  EXPECT_FALSE(ds.row(0).w.has_value());
  ASSERT_TRUE(ds.row(2).w.has_value());
  EXPECT_DOUBLE_EQ((*ds.row(2).w)[0], 1.0);
}

TEST(Ingest, MissingColumnAndBadCells) {
  EXPECT_EQ(catch_error([] { parse("s,a,y\n1,1,1\n", xcols({"x"})); }).code(),
            ErrorCode::missing_column);
  EXPECT_EQ(catch_error([] { parse("s,a,y,x\n1,1,1,abc\n", xcols({"x"})); }).code(),
            ErrorCode::parse_error);
  EXPECT_EQ(catch_error([] { parse("s,a,y,x\n1,1,,0\n", xcols({"x"})); }).code(),
            ErrorCode::parse_error);
  EXPECT_EQ(catch_error([] { parse("s,a,y,x\n1,1,0.5,0\n", xcols({"x"})); }).code(),
            ErrorCode::invalid_outcome);
  EXPECT_EQ(catch_error([] { parse("s,a,y,x\n1,1,-1,0\n", xcols({"x"}), OutcomeKind::count); })
                .code(),
            ErrorCode::invalid_outcome);
}

TEST(Ingest, SplitFilesImplyS) {
  std::istringstream trial("a,y,x\n1,1,0\n0,0,1\n");
  std::istringstream target("a,y,x\n0,1,0\n");
  const auto ds = load_split(trial, target, xcols({"x"}), OutcomeKind::binary);
  EXPECT_EQ(ds.n1(), 2u);
  EXPECT_EQ(ds.n0(), 1u);
  EXPECT_EQ(ds.s(2), 0);
}

TEST(Ingest, ConstructorRejectsTrialW) {
  std::vector<ObservationRow> rows{obs(1, 1, 1, {0}, std::vector<double>{1}),
                                   obs(0, 0, 0, {0}, std::vector<double>{1})};
  EXPECT_THROW(AnalysisDataset(rows, {"x"}, {"w"}, OutcomeKind::binary), Error);
}

TEST(Ingest, RoundTripIsExact) {
  std::mt19937_64 rng(11);
  std::normal_distribution<double> z;
  std::vector<ObservationRow> rows;
  for (int i = 0; i < 200; ++i) {
    const int s = i % 3 == 0 ? 0 : 1;
    std::optional<std::vector<double>> w;
    if (s == 0) w = std::vector<double>{z(rng) * 1e-7, z(rng) * 1e9};
    rows.push_back(obs(s, i % 2, z(rng), {z(rng), 1.0 / 3.0 + i}, w));
  }
  const AnalysisDataset ds(rows, {"x1", "x2"}, {"w1", "w2"}, OutcomeKind::continuous);
  std::ostringstream out;
  write_dataset(out, ds);
  const auto back = parse(out.str(), xcols({"x1", "x2"}, {"w1", "w2"}), OutcomeKind::continuous);
  ASSERT_EQ(back.size(), ds.size());
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const auto a = ds.row(i);
    const auto b = back.row(i);
    EXPECT_EQ(a.s, b.s);
    EXPECT_EQ(a.a, b.a);
    EXPECT_EQ(a.y, b.y);
    EXPECT_EQ(a.x, b.x);
    EXPECT_EQ(a.w, b.w);
  }
}

TEST(Validate, AllTargetControlsPassPhi) {
  std::vector<ObservationRow> rows{obs(1, 1, 1, {0}), obs(1, 0, 0, {0}), obs(0, 0, 1, {0}),
                                   obs(0, 0, 0, {1})};
  const AnalysisDataset ds(rows, {"x"}, {}, OutcomeKind::binary);
  const auto report = validate_dataset(ds, EstimatorKind::phi);
  EXPECT_TRUE(report.errors.empty());
  EXPECT_EQ(report.cells[3].count, 2u);
  EXPECT_DOUBLE_EQ(report.cells[3].mean, 0.5);
}

TEST(Validate, OneTreatedTargetRowIsOneA5Error) {
  std::vector<ObservationRow> rows{obs(1, 1, 1, {0}), obs(1, 0, 0, {0}), obs(0, 0, 1, {0}),
                                   obs(0, 1, 0, {1})};
  const AnalysisDataset ds(rows, {"x"}, {}, OutcomeKind::binary);
  const auto report = validate_dataset(ds, EstimatorKind::phi);
  ASSERT_EQ(report.errors.size(), 1u);
  EXPECT_EQ(report.errors[0].code, "A5");
  EXPECT_EQ(report.errors[0].rows, std::vector<std::size_t>{3});
  EXPECT_NE(report.errors[0].message.find("A5 violated: target rows with a=1"), std::string::npos);
  EXPECT_THROW(require_valid(report), Error);
}

TEST(Validate, ChiWithoutTargetControlsIsB2Error) {
  std::vector<ObservationRow> rows{obs(1, 1, 1, {0}), obs(1, 0, 0, {0}), obs(0, 1, 1, {0})};
  const AnalysisDataset ds(rows, {"x"}, {}, OutcomeKind::binary);
  const auto report = validate_dataset(ds, EstimatorKind::chi);
  ASSERT_EQ(report.errors.size(), 1u);
  EXPECT_EQ(report.errors[0].code, "B2");
  EXPECT_EQ(validate_dataset(ds, EstimatorKind::psi).errors.at(0).code, "C2");
}

TEST(Validate, EmptyTrialArmIsError) {
  std::vector<ObservationRow> rows{obs(1, 1, 1, {0}), obs(0, 0, 1, {0})};
  const AnalysisDataset ds(rows, {"x"}, {}, OutcomeKind::binary);
  EXPECT_FALSE(validate_dataset(ds, EstimatorKind::chi).ok());
}

TEST(Validate, PureAndPhiAcceptanceImpliesNoTreatedTargets) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<ObservationRow> rows;
    std::bernoulli_distribution coin(0.5), rare(0.05);
    rows.push_back(obs(1, 1, 1, {0}));
    rows.push_back(obs(1, 0, 0, {0}));
    for (int i = 0; i < 20; ++i) rows.push_back(obs(0, rare(rng) ? 1 : 0, coin(rng), {0}));
    const AnalysisDataset ds(rows, {"x"}, {}, OutcomeKind::binary);
    const auto r1 = validate_dataset(ds, EstimatorKind::phi);
    const auto r2 = validate_dataset(ds, EstimatorKind::phi);
    EXPECT_EQ(r1.errors.size(), r2.errors.size());
    EXPECT_EQ(r1.warnings.size(), r2.warnings.size());
    if (r1.ok())
      for (auto i : ds.target_rows()) EXPECT_EQ(ds.a(i), 0);
  }
}

TEST(Terms, ProductsResolveAcrossXAndW) {
  std::vector<ObservationRow> rows{obs(1, 1, 1, {2}), obs(0, 0, 1, {3}, std::vector<double>{5})};
  const AnalysisDataset ds(rows, {"x"}, {"w"}, OutcomeKind::continuous);
  const TermSet t(ds, {"x", "x:w"});
  EXPECT_TRUE(t.uses_w());
  const std::vector<std::size_t> target{1};
  const auto m = t.matrix(ds, target);
  EXPECT_DOUBLE_EQ(m(0, 0), 3.0);
  EXPECT_DOUBLE_EQ(m(0, 1), 15.0);
  const std::vector<std::size_t> trial{0};
  EXPECT_THROW(t.matrix(ds, trial), Error);
  EXPECT_THROW(TermSet(ds, {"nope"}), Error);
}
