#include "reltransport/datamodel.hpp"

#include <charconv>
#include <cmath>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>
#include <unordered_map>

#include "reltransport/error.hpp"

namespace reltransport {

namespace {

constexpr const char* kModule = "datamodel";

[[noreturn]] void fail(ErrorCode code, const std::string& message) {
  throw Error(code, kModule, message);
}

bool is_integer(double v) { return std::floor(v) == v; }

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r'))
    s.remove_suffix(1);
  if (s.size() >= 2 && s.front() == '"' && s.back() == '"') {
    s.remove_prefix(1);
    s.remove_suffix(1);
  }
  return s;
}

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    auto pos = line.find(',', start);
    if (pos == std::string_view::npos) {
      out.push_back(trim(line.substr(start)));
      break;
    }
    out.push_back(trim(line.substr(start, pos - start)));
    start = pos + 1;
  }
  return out;
}

double parse_cell(std::string_view cell, const std::string& column,
                  std::size_t line) {
  if (cell.empty())
    fail(ErrorCode::parse_error, "missing value in column '" + column +
                                     "' at line " + std::to_string(line));
  if (cell.front() == '+') cell.remove_prefix(1);
  double value = 0.0;
  auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), value);
  if (ec != std::errc{} || ptr != cell.data() + cell.size() || !std::isfinite(value))
    fail(ErrorCode::parse_error, "non-numeric cell '" + std::string(cell) +
                                     "' in column '" + column + "' at line " +
                                     std::to_string(line));
  return value;
}

int parse_indicator(std::string_view cell, const std::string& column,
                    std::size_t line) {
  double v = parse_cell(cell, column, line);
  if (v != 0.0 && v != 1.0)
    fail(ErrorCode::invalid_indicator,
         column + " outside {0,1} at line " + std::to_string(line));
  return static_cast<int>(v);
}

struct Header {
  std::unordered_map<std::string, std::size_t> index;

  std::size_t require(const std::string& name) const {
    auto it = index.find(name);
    if (it == index.end()) fail(ErrorCode::missing_column, "missing column '" + name + "'");
    return it->second;
  }
};

Header read_header(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) fail(ErrorCode::parse_error, "input has no header row");
  // Skip a UTF-8 byte-order mark.
  if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
  Header h;
  auto fields = split_fields(line);
  for (std::size_t i = 0; i < fields.size(); ++i) h.index.emplace(std::string(fields[i]), i);
  return h;
}

// Appends rows from one stream. `fixed_s` supplies s when the stream holds a
// single stratum; otherwise the s column is read.
void read_rows(std::istream& in, const ColumnBindings& cols,
               std::optional<int> fixed_s, std::vector<ObservationRow>& rows) {
  Header header = read_header(in);
  std::optional<std::size_t> s_idx;
  if (!fixed_s) s_idx = header.require(cols.s);
  const std::size_t a_idx = header.require(cols.a);
  const std::size_t y_idx = header.require(cols.y);
  std::vector<std::size_t> x_idx, w_idx;
  for (const auto& name : cols.x) x_idx.push_back(header.require(name));
  // W columns are only required where target rows are read.
  if (!fixed_s || *fixed_s == 0)
    for (const auto& name : cols.w) w_idx.push_back(header.require(name));

  std::string line;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    auto fields = split_fields(line);
    auto cell = [&](std::size_t idx, const std::string& name) -> std::string_view {
      if (idx >= fields.size())
        fail(ErrorCode::parse_error, "missing value in column '" + name +
                                         "' at line " + std::to_string(line_no));
      return fields[idx];
    };
    ObservationRow row;
    row.s = fixed_s ? *fixed_s : parse_indicator(cell(*s_idx, cols.s), cols.s, line_no);
    row.a = parse_indicator(cell(a_idx, cols.a), cols.a, line_no);
    row.y = parse_cell(cell(y_idx, cols.y), cols.y, line_no);
    row.x.reserve(x_idx.size());
    for (std::size_t j = 0; j < x_idx.size(); ++j)
      row.x.push_back(parse_cell(cell(x_idx[j], cols.x[j]), cols.x[j], line_no));
    if (row.s == 0 && !cols.w.empty()) {
      std::vector<double> w;
      w.reserve(w_idx.size());
      for (std::size_t j = 0; j < w_idx.size(); ++j)
        w.push_back(parse_cell(cell(w_idx[j], cols.w[j]), cols.w[j], line_no));
      row.w = std::move(w);
    }
    rows.push_back(std::move(row));
  }
}

}  // namespace

std::string_view to_string(OutcomeKind kind) {
  switch (kind) {
    case OutcomeKind::binary: return "binary";
    case OutcomeKind::count: return "count";
    case OutcomeKind::continuous: return "continuous";
  }
  return "continuous";
}

std::string_view to_string(EstimatorKind kind) {
  switch (kind) {
    case EstimatorKind::phi: return "phi";
    case EstimatorKind::chi: return "chi";
    case EstimatorKind::psi: return "psi";
  }
  return "phi";
}

OutcomeKind parse_outcome_kind(std::string_view text) {
  if (text == "binary") return OutcomeKind::binary;
  if (text == "count") return OutcomeKind::count;
  if (text == "continuous") return OutcomeKind::continuous;
  throw Error(ErrorCode::invalid_argument, kModule,
              "unknown outcome kind '" + std::string(text) + "'");
}

EstimatorKind parse_estimator_kind(std::string_view text) {
  if (text == "phi") return EstimatorKind::phi;
  if (text == "chi") return EstimatorKind::chi;
  if (text == "psi") return EstimatorKind::psi;
  throw Error(ErrorCode::invalid_argument, kModule,
              "unknown estimator '" + std::string(text) + "'");
}

AnalysisDataset::AnalysisDataset(std::span<const ObservationRow> rows,
                                 std::vector<std::string> x_names,
                                 std::vector<std::string> w_names,
                                 OutcomeKind outcome_kind)
    : x_names_(std::move(x_names)), w_names_(std::move(w_names)), kind_(outcome_kind) {
  const std::size_t n = rows.size();
  const std::size_t p = x_names_.size();
  const std::size_t q = w_names_.size();
  {
    std::unordered_map<std::string, int> seen;
    for (const auto& name : x_names_)
      if (seen[name]++) fail(ErrorCode::invalid_argument, "duplicate column name '" + name + "'");
    for (const auto& name : w_names_)
      if (seen[name]++) fail(ErrorCode::invalid_argument, "duplicate column name '" + name + "'");
  }
  s_.resize(n);
  a_.resize(n);
  y_.resize(static_cast<Eigen::Index>(n));
  x_.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(p));
  w_.setConstant(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(q),
                 std::numeric_limits<double>::quiet_NaN());

  for (std::size_t i = 0; i < n; ++i) {
    const auto& r = rows[i];
    const auto at = " at row " + std::to_string(i);
    const auto ei = static_cast<Eigen::Index>(i);
    if (r.s != 0 && r.s != 1) fail(ErrorCode::invalid_indicator, "s outside {0,1}" + at);
    if (r.a != 0 && r.a != 1) fail(ErrorCode::invalid_indicator, "a outside {0,1}" + at);
    if (!std::isfinite(r.y)) fail(ErrorCode::invalid_outcome, "non-finite outcome" + at);
    if (kind_ == OutcomeKind::binary && r.y != 0.0 && r.y != 1.0)
      fail(ErrorCode::invalid_outcome, "binary outcome with y outside {0,1}" + at);
    if (kind_ == OutcomeKind::count && (r.y < 0.0 || !is_integer(r.y)))
      fail(ErrorCode::invalid_outcome, "count outcome with y not a nonnegative integer" + at);
    if (r.x.size() != p)
      fail(ErrorCode::dimension_mismatch, "x has " + std::to_string(r.x.size()) +
                                              " entries, expected " + std::to_string(p) + at);
    for (std::size_t j = 0; j < p; ++j) {
      if (!std::isfinite(r.x[j])) fail(ErrorCode::parse_error, "non-finite covariate" + at);
      x_(ei, static_cast<Eigen::Index>(j)) = r.x[j];
    }
    if (r.s == 1 && r.w)
      fail(ErrorCode::dimension_mismatch, "trial row carries W" + at);
    if (r.s == 0) {
      if (q > 0 && (!r.w || r.w->size() != q))
        fail(ErrorCode::dimension_mismatch,
             "target row w dimension differs from " + std::to_string(q) + at);
      if (q == 0 && r.w && !r.w->empty())
        fail(ErrorCode::dimension_mismatch, "target row carries undeclared W" + at);
      for (std::size_t j = 0; j < q; ++j) {
        if (!std::isfinite((*r.w)[j])) fail(ErrorCode::parse_error, "non-finite W" + at);
        w_(ei, static_cast<Eigen::Index>(j)) = (*r.w)[j];
      }
    }
    s_[i] = static_cast<std::int8_t>(r.s);
    a_[i] = static_cast<std::int8_t>(r.a);
    y_[ei] = r.y;
  }
  index_strata();
}

void AnalysisDataset::index_strata() {
  trial_.clear();
  target_.clear();
  for (std::size_t i = 0; i < s_.size(); ++i) (s_[i] ? trial_ : target_).push_back(i);
  if (trial_.empty()) fail(ErrorCode::empty_stratum, "empty trial stratum (no rows with s=1)");
  if (target_.empty()) fail(ErrorCode::empty_stratum, "empty target stratum (no rows with s=0)");
}

std::vector<std::size_t> AnalysisDataset::rows_where(int s, int a) const {
  std::vector<std::size_t> out;
  for (std::size_t i : (s ? trial_ : target_))
    if (a_[i] == a) out.push_back(i);
  return out;
}

ObservationRow AnalysisDataset::row(std::size_t i) const {
  ObservationRow r;
  const auto ei = static_cast<Eigen::Index>(i);
  r.s = s_[i];
  r.a = a_[i];
  r.y = y_[ei];
  r.x.assign(x_.cols(), 0.0);
  for (Eigen::Index j = 0; j < x_.cols(); ++j) r.x[static_cast<std::size_t>(j)] = x_(ei, j);
  if (r.s == 0 && w_.cols() > 0) {
    std::vector<double> w(static_cast<std::size_t>(w_.cols()));
    for (Eigen::Index j = 0; j < w_.cols(); ++j) w[static_cast<std::size_t>(j)] = w_(ei, j);
    r.w = std::move(w);
  }
  return r;
}

std::vector<ObservationRow> AnalysisDataset::rows() const {
  std::vector<ObservationRow> out;
  out.reserve(size());
  for (std::size_t i = 0; i < size(); ++i) out.push_back(row(i));
  return out;
}

AnalysisDataset AnalysisDataset::select(std::span<const std::size_t> indices) const {
  AnalysisDataset out;
  out.x_names_ = x_names_;
  out.w_names_ = w_names_;
  out.kind_ = kind_;
  const auto m = static_cast<Eigen::Index>(indices.size());
  out.s_.resize(indices.size());
  out.a_.resize(indices.size());
  out.y_.resize(m);
  out.x_.resize(m, x_.cols());
  out.w_.resize(m, w_.cols());
  for (Eigen::Index k = 0; k < m; ++k) {
    const std::size_t i = indices[static_cast<std::size_t>(k)];
    if (i >= size()) fail(ErrorCode::invalid_argument, "row index out of range");
    const auto ei = static_cast<Eigen::Index>(i);
    out.s_[static_cast<std::size_t>(k)] = s_[i];
    out.a_[static_cast<std::size_t>(k)] = a_[i];
    out.y_[k] = y_[ei];
    out.x_.row(k) = x_.row(ei);
    out.w_.row(k) = w_.row(ei);
  }
  out.index_strata();
  return out;
}

AnalysisDataset load_dataset(std::istream& source, const ColumnBindings& columns,
                             OutcomeKind outcome_kind) {
  std::vector<ObservationRow> rows;
  read_rows(source, columns, std::nullopt, rows);
  return AnalysisDataset(rows, columns.x, columns.w, outcome_kind);
}

AnalysisDataset load_split(std::istream& trial, std::istream& target,
                           const ColumnBindings& columns, OutcomeKind outcome_kind) {
  std::vector<ObservationRow> rows;
  read_rows(trial, columns, 1, rows);
  read_rows(target, columns, 0, rows);
  return AnalysisDataset(rows, columns.x, columns.w, outcome_kind);
}

std::string format_number(double value) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, value);
  if (ec != std::errc{}) return std::to_string(value);
  return std::string(buf, ptr);
}

void write_dataset(std::ostream& out, const AnalysisDataset& ds) {
  out << "s,a,y";
  for (const auto& name : ds.x_names()) out << ',' << name;
  for (const auto& name : ds.w_names()) out << ',' << name;
  out << '\n';
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const auto ei = static_cast<Eigen::Index>(i);
    out << ds.s(i) << ',' << ds.a(i) << ',' << format_number(ds.y(i));
    for (Eigen::Index j = 0; j < ds.x().cols(); ++j) out << ',' << format_number(ds.x()(ei, j));
    for (Eigen::Index j = 0; j < ds.w().cols(); ++j) {
      out << ',';
      if (ds.s(i) == 0) out << format_number(ds.w()(ei, j));
    }
    out << '\n';
  }
}

ValidationReport validate_dataset(const AnalysisDataset& ds, EstimatorKind intended) {
  ValidationReport report;
  const std::array<std::pair<int, int>, 4> order{{{1, 1}, {1, 0}, {0, 1}, {0, 0}}};
  std::array<std::vector<std::size_t>, 4> members;
  for (std::size_t c = 0; c < 4; ++c) {
    auto [s, a] = order[c];
    members[c] = ds.rows_where(s, a);
    auto& cell = report.cells[c];
    cell.s = s;
    cell.a = a;
    cell.count = members[c].size();
    const double nan = std::numeric_limits<double>::quiet_NaN();
    cell.mean = nan;
    cell.variance = nan;
    if (cell.count > 0) {
      double sum = 0.0;
      for (auto i : members[c]) sum += ds.y(i);
      cell.mean = sum / static_cast<double>(cell.count);
    }
    if (cell.count > 1) {
      double ss = 0.0;
      for (auto i : members[c]) ss += (ds.y(i) - cell.mean) * (ds.y(i) - cell.mean);
      cell.variance = ss / static_cast<double>(cell.count - 1);
    }
  }

  for (int arm : {1, 0}) {
    const auto& cell = report.cells[arm == 1 ? 0 : 1];
    if (cell.count == 0)
      report.errors.push_back({"A3", "A3 violated: no trial rows with a=" + std::to_string(arm), {}});
  }

  const auto& target_treated = members[2];
  const auto& target_control = members[3];
  switch (intended) {
    case EstimatorKind::phi:
      if (!target_treated.empty())
        report.errors.push_back({"A5", "A5 violated: target rows with a=1", target_treated});
      break;
    case EstimatorKind::chi:
      if (target_control.empty())
        report.errors.push_back({"B2", "B2 violated: no target rows with a=0", {}});
      if (target_treated.empty())
        report.warnings.push_back(
            {"A5", "all target rows have a=0; phi is also applicable", {}});
      break;
    case EstimatorKind::psi:
      if (target_control.empty())
        report.errors.push_back({"C2", "C2 violated: no target rows with a=0", {}});
      if (ds.w_names().empty())
        report.warnings.push_back(
            {"W", "no W columns bound; psi reduces to chi", {}});
      break;
  }
  return report;
}

void require_valid(const ValidationReport& report) {
  if (report.ok()) return;
  throw Error(ErrorCode::validation_failed, kModule, report.errors.front().message);
}

TermSet::TermSet(const AnalysisDataset& ds, std::vector<std::string> terms)
    : names_(std::move(terms)) {
  for (const auto& term : names_) {
    std::vector<Factor> factors;
    std::string_view rest = term;
    while (true) {
      auto pos = rest.find(':');
      std::string name(rest.substr(0, pos));
      Factor f;
      bool found = false;
      for (std::size_t j = 0; j < ds.x_names().size() && !found; ++j)
        if (ds.x_names()[j] == name) f = {false, j}, found = true;
      for (std::size_t j = 0; j < ds.w_names().size() && !found; ++j)
        if (ds.w_names()[j] == name) f = {true, j}, found = true;
      if (!found || name.empty())
        fail(ErrorCode::missing_column, "unknown covariate '" + name + "' in term '" + term + "'");
      uses_w_ = uses_w_ || f.from_w;
      factors.push_back(f);
      if (pos == std::string_view::npos) break;
      rest.remove_prefix(pos + 1);
    }
    factors_.push_back(std::move(factors));
  }
}

Eigen::MatrixXd TermSet::matrix(const AnalysisDataset& ds,
                                std::span<const std::size_t> rows) const {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(rows.size()),
                      static_cast<Eigen::Index>(names_.size()));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const auto i = static_cast<Eigen::Index>(rows[r]);
    if (uses_w_ && ds.s(rows[r]) == 1)
      fail(ErrorCode::dimension_mismatch,
           "W-dependent term evaluated on trial row " + std::to_string(rows[r]));
    for (std::size_t t = 0; t < factors_.size(); ++t) {
      double v = 1.0;
      for (const auto& f : factors_[t])
        v *= f.from_w ? ds.w()(i, static_cast<Eigen::Index>(f.column))
                      : ds.x()(i, static_cast<Eigen::Index>(f.column));
      out(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(t)) = v;
    }
  }
  return out;
}

}  // namespace reltransport
