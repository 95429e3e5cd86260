#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

namespace reltransport {

enum class OutcomeKind { binary, count, continuous };

/// Which identifying functional an analysis targets. `phi` assumes only the
/// control treatment is used in the target population; `chi` allows
/// treatment variation with no confounding given X; `psi` additionally uses
/// target-only covariates W for confounding control.
enum class EstimatorKind { phi, chi, psi };

std::string_view to_string(OutcomeKind kind);
std::string_view to_string(EstimatorKind kind);
OutcomeKind parse_outcome_kind(std::string_view text);
EstimatorKind parse_estimator_kind(std::string_view text);

struct ObservationRow {
  std::vector<double> x;
  std::optional<std::vector<double>> w;  // target rows only
  int s = 0;                             // 1 = trial, 0 = target
  int a = 0;                             // 1 = experimental, 0 = control
  double y = 0.0;
};

/// Trial and target observations in one composite sample.
///
/// Storage is columnar. W is held for target rows only; the trial rows of
/// `w()` are NaN and never exposed through `row()`. Instances are immutable
/// once constructed, so they can be shared across bootstrap workers.
class AnalysisDataset {
 public:
  /// Validates every structural invariant and throws `Error` naming the
  /// first offending row.
  AnalysisDataset(std::span<const ObservationRow> rows,
                  std::vector<std::string> x_names,
                  std::vector<std::string> w_names, OutcomeKind outcome_kind);

  std::size_t size() const noexcept { return s_.size(); }
  std::size_t n0() const noexcept { return target_.size(); }
  std::size_t n1() const noexcept { return trial_.size(); }

  const std::vector<std::string>& x_names() const noexcept { return x_names_; }
  const std::vector<std::string>& w_names() const noexcept { return w_names_; }
  OutcomeKind outcome_kind() const noexcept { return kind_; }

  int s(std::size_t i) const { return s_[i]; }
  int a(std::size_t i) const { return a_[i]; }
  double y(std::size_t i) const { return y_[i]; }
  const Eigen::VectorXd& y() const noexcept { return y_; }
  const Eigen::MatrixXd& x() const noexcept { return x_; }
  const Eigen::MatrixXd& w() const noexcept { return w_; }

  /// Row indices with s = 1 / s = 0, in source order.
  std::span<const std::size_t> trial_rows() const noexcept { return trial_; }
  std::span<const std::size_t> target_rows() const noexcept { return target_; }

  /// Indices of rows matching (s, a).
  std::vector<std::size_t> rows_where(int s, int a) const;

  ObservationRow row(std::size_t i) const;
  std::vector<ObservationRow> rows() const;

  /// A new dataset made of the given rows (repeats allowed), in that order.
  AnalysisDataset select(std::span<const std::size_t> indices) const;

 private:
  AnalysisDataset() = default;
  void index_strata();

  std::vector<std::string> x_names_;
  std::vector<std::string> w_names_;
  OutcomeKind kind_ = OutcomeKind::continuous;
  std::vector<std::int8_t> s_;
  std::vector<std::int8_t> a_;
  Eigen::VectorXd y_;
  Eigen::MatrixXd x_;
  Eigen::MatrixXd w_;
  std::vector<std::size_t> trial_;
  std::vector<std::size_t> target_;
};

/// Column-name bindings for tabular input.
struct ColumnBindings {
  std::string s = "s";
  std::string a = "a";
  std::string y = "y";
  std::vector<std::string> x;
  std::vector<std::string> w;
};

/// Reads a composite comma-separated file with a header row. W cells on
/// trial rows are ignored.
AnalysisDataset load_dataset(std::istream& source, const ColumnBindings& columns,
                             OutcomeKind outcome_kind);

/// Reads trial and target samples from separate files; the s column is not
/// required and is implied by the file.
AnalysisDataset load_split(std::istream& trial, std::istream& target,
                           const ColumnBindings& columns,
                           OutcomeKind outcome_kind);

/// Writes `s,a,y,<x...>,<w...>` with shortest round-trip decimal formatting;
/// trial rows leave W cells empty.
void write_dataset(std::ostream& out, const AnalysisDataset& ds);

/// Shortest decimal text that parses back to exactly `value`.
std::string format_number(double value);

struct Violation {
  std::string code;  // condition label, e.g. "A5"
  std::string message;
  std::vector<std::size_t> rows;
};

struct CellSummary {
  int s = 0;
  int a = 0;
  std::size_t count = 0;
  double mean = 0.0;      // NaN when count == 0
  double variance = 0.0;  // sample variance, NaN when count < 2
};

struct ValidationReport {
  std::vector<Violation> errors;
  std::vector<Violation> warnings;
  /// Cells in the order (s,a) = (1,1), (1,0), (0,1), (0,0).
  std::array<CellSummary, 4> cells{};

  bool ok() const noexcept { return errors.empty(); }
};

/// Checks the positivity and treatment-use conditions the chosen estimator
/// depends on. Never throws for condition violations; they are recorded.
ValidationReport validate_dataset(const AnalysisDataset& ds,
                                  EstimatorKind intended_estimator);

/// Throws `Error(validation_failed)` carrying the first recorded error.
void require_valid(const ValidationReport& report);

/// A regression term: a single column name or a product `a:b` of columns
/// drawn from the dataset's X and W names.
class TermSet {
 public:
  TermSet(const AnalysisDataset& ds, std::vector<std::string> terms);

  std::size_t size() const noexcept { return names_.size(); }
  const std::vector<std::string>& names() const noexcept { return names_; }
  bool uses_w() const noexcept { return uses_w_; }

  /// Term values for the given rows, one row per index.
  Eigen::MatrixXd matrix(const AnalysisDataset& ds,
                         std::span<const std::size_t> rows) const;

 private:
  struct Factor {
    bool from_w = false;
    std::size_t column = 0;
  };
  std::vector<std::string> names_;
  std::vector<std::vector<Factor>> factors_;
  bool uses_w_ = false;
};

}  // namespace reltransport
