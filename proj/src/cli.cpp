#include "reltransport/cli.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "reltransport/bootstrap.hpp"
#include "reltransport/diagnostics.hpp"
#include "reltransport/error.hpp"
#include "reltransport/estimators.hpp"
#include "reltransport/nuisance.hpp"
#include "reltransport/simulate.hpp"

namespace reltransport::cli {

namespace {

constexpr const char* kModule = "cli";

[[noreturn]] void fail(ErrorCode code, const std::string& message) {
  throw Error(code, kModule, message);
}

std::ifstream open_in(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::io_error, "cannot open '" + path + "'");
  return in;
}

std::string slurp(const std::string& path) {
  auto in = open_in(path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorCode::io_error, "cannot write '" + path + "'");
  out << text;
  if (!out) fail(ErrorCode::io_error, "failed writing '" + path + "'");
}

AnalysisDataset load(const RunConfig& c) {
  const OutcomeKind kind = parse_outcome_kind(c.outcome);
  if (!c.data_path.empty()) {
    if (!c.trial_path.empty() || !c.target_path.empty())
      fail(ErrorCode::invalid_argument, "use either --data or --trial/--target, not both");
    auto in = open_in(c.data_path);
    return load_dataset(in, c.columns, kind);
  }
  if (c.trial_path.empty() || c.target_path.empty())
    fail(ErrorCode::invalid_argument, "input requires --data or both --trial and --target");
  auto trial = open_in(c.trial_path);
  auto target = open_in(c.target_path);
  return load_split(trial, target, c.columns, kind);
}

glm::ModelSpec outcome_spec(const RunConfig& c, const AnalysisDataset& ds,
                            std::vector<std::string> terms) {
  glm::ModelSpec spec;
  if (!c.family.empty()) {
    spec.family = glm::parse_family(c.family);
  } else {
    switch (ds.outcome_kind()) {
      case OutcomeKind::binary: spec.family = glm::Family::bernoulli; break;
      case OutcomeKind::count: spec.family = glm::Family::poisson; break;
      case OutcomeKind::continuous: spec.family = glm::Family::gaussian; break;
    }
  }
  spec.link = c.link.empty() ? glm::canonical_link(spec.family) : glm::parse_link(c.link);
  spec.covariate_names = std::move(terms);
  return spec;
}

std::vector<std::string> x_terms(const RunConfig& c) {
  return c.terms.empty() ? c.columns.x : c.terms;
}

std::vector<std::string> m_terms(const RunConfig& c) {
  if (!c.m_terms.empty()) return c.m_terms;
  auto t = x_terms(c);
  t.insert(t.end(), c.columns.w.begin(), c.columns.w.end());
  return t;
}

Pipeline make_pipeline(const RunConfig& c, const AnalysisDataset& ds) {
  Pipeline p;
  p.estimator = parse_estimator_kind(c.estimator);
  p.estimand = parse_estimand(c.estimand);
  auto& r = p.recipe;
  r.ratio_method = parse_ratio_method(c.ratio_method);
  r.outcome_spec = outcome_spec(c, ds, x_terms(c));
  r.ratio_spec = r.outcome_spec;
  if (r.ratio_method == RatioMethod::log_link_interaction) {
    if (c.family.empty())
      r.ratio_spec.family = ds.outcome_kind() == OutcomeKind::binary ? glm::Family::bernoulli
                                                                     : glm::Family::poisson;
    r.ratio_spec.link = glm::Link::log;
  }
  r.m_spec = outcome_spec(c, ds, m_terms(c));
  r.step3_spec.family = glm::Family::gaussian;
  r.step3_spec.link = glm::Link::identity;
  r.step3_spec.covariate_names = c.step3_terms.empty() ? x_terms(c) : c.step3_terms;
  if (!c.g_model.empty()) r.external_g = import_external_model(slurp(c.g_model));
  if (!c.h_model.empty()) r.external_h = import_external_model(slurp(c.h_model));
  if (!c.m_model.empty()) r.external_m = import_external_model(slurp(c.m_model));
  return p;
}

BootstrapOptions bootstrap_options(const RunConfig& c) {
  BootstrapOptions o;
  o.replicates = c.bootstrap;
  o.level = c.level;
  o.seed = c.seed;
  o.threads = c.threads;
  o.keep_draws = false;
  return o;
}

nlohmann::json validation_json(const ValidationReport& report) {
  auto list = [](const std::vector<Violation>& v) {
    auto arr = nlohmann::json::array();
    for (const auto& e : v) arr.push_back({{"code", e.code}, {"message", e.message}, {"rows", e.rows}});
    return arr;
  };
  auto cells = nlohmann::json::array();
  for (const auto& cell : report.cells) {
    nlohmann::json j{{"s", cell.s}, {"a", cell.a}, {"count", cell.count}};
    j["mean"] = cell.count > 0 ? nlohmann::json(cell.mean) : nlohmann::json(nullptr);
    j["variance"] = cell.count > 1 ? nlohmann::json(cell.variance) : nlohmann::json(nullptr);
    cells.push_back(std::move(j));
  }
  return {{"errors", list(report.errors)}, {"warnings", list(report.warnings)}, {"cells", cells}};
}

nlohmann::json run_estimate(const RunConfig& c) {
  const AnalysisDataset ds = load(c);
  const Pipeline pipeline = make_pipeline(c, ds);
  const ValidationReport report = validate_dataset(ds, pipeline.estimator);
  require_valid(report);
  const BootstrapResult res = bootstrap_ci(ds, pipeline, bootstrap_options(c));
  nlohmann::json result = to_json(res.estimate);
  result.update(to_json(res.interval));
  return {{"result", result}, {"validation", validation_json(report)}};
}

nlohmann::json run_simulate(const RunConfig& c) {
  if (c.scenario_path.empty()) fail(ErrorCode::invalid_argument, "simulate requires --scenario");
  if (c.out_path.empty()) fail(ErrorCode::invalid_argument, "simulate requires --out for the dataset");
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(slurp(c.scenario_path));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::scenario_invalid, "simulate", std::string("malformed scenario: ") + e.what());
  }
  const auto scenario = sim::ScenarioSpec::from_json(doc);
  const AnalysisDataset ds = sim::generate(scenario, c.n1, c.n0, c.seed);
  std::ostringstream csv;
  write_dataset(csv, ds);
  write_text(c.out_path, csv.str());

  sim::TrueValues truth;
  if (c.truth_method == "closed_form") truth = sim::true_estimands(scenario);
  else if (c.truth_method == "monte_carlo")
    truth = sim::true_estimands_monte_carlo(scenario, c.mc_draws, c.seed, c.threads);
  else fail(ErrorCode::invalid_argument, "unknown truth method '" + c.truth_method + "'");

  return {{"truth", to_json(truth)},
          {"dataset", {{"path", c.out_path}, {"n1", ds.n1()}, {"n0", ds.n0()}}}};
}

nlohmann::json run_diagnose(const RunConfig& c) {
  const AnalysisDataset ds = load(c);
  const glm::ModelSpec spec = outcome_spec(c, ds, x_terms(c));
  std::optional<BootstrapOptions> boot;
  if (c.bootstrap > 0) boot = bootstrap_options(c);

  nlohmann::json diag;
  std::vector<Restriction> which;
  if (c.restriction == "both") which = {Restriction::R1, Restriction::R2};
  else which = {parse_restriction(c.restriction)};
  for (auto r : which)
    diag[std::string(to_string(r))] = to_json(check_restriction(ds, spec, r, boot));

  glm::ModelSpec logistic;
  logistic.family = glm::Family::bernoulli;
  logistic.link = glm::Link::logit;
  logistic.covariate_names = x_terms(c);
  glm::ModelSpec control = logistic;
  control.covariate_names = m_terms(c);
  diag["positivity"] = to_json(positivity_report(ds, logistic, logistic, control, c.threshold));
  return {{"diagnostics", diag}};
}

nlohmann::json run_compat(const RunConfig& c) {
  if (c.input_path.empty()) fail(ErrorCode::invalid_argument, "compat requires --input");
  auto in = open_in(c.input_path);
  std::string line;
  if (!std::getline(in, line)) fail(ErrorCode::parse_error, "compat input has no header");
  std::vector<StratumMeans<double>> strata;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::replace(line.begin(), line.end(), ',', ' ');
    std::istringstream fields(line);
    StratumMeans<double> s;
    if (!(fields >> s.e11 >> s.e10 >> s.e01 >> s.e00))
      fail(ErrorCode::parse_error, "expected e11,e10,e01,e00 at line " + std::to_string(line_no));
    strata.push_back(s);
  }
  return {{"compat", to_json(compat_check(strata, c.tol))}};
}

}  // namespace

RunConfig resolve(RunConfig c) {
  if (c.command != Command::estimate && c.command != Command::diagnose) return c;
  if (c.family.empty()) {
    switch (parse_outcome_kind(c.outcome)) {
      case OutcomeKind::binary: c.family = "bernoulli"; break;
      case OutcomeKind::count: c.family = "poisson"; break;
      case OutcomeKind::continuous: c.family = "gaussian"; break;
    }
  }
  if (c.link.empty()) c.link = std::string(glm::to_string(glm::canonical_link(glm::parse_family(c.family))));
  if (c.terms.empty()) c.terms = c.columns.x;
  if (c.m_terms.empty()) {
    c.m_terms = c.terms;
    c.m_terms.insert(c.m_terms.end(), c.columns.w.begin(), c.columns.w.end());
  }
  if (c.step3_terms.empty()) c.step3_terms = c.terms;
  return c;
}

std::string to_string(Command command) {
  switch (command) {
    case Command::estimate: return "estimate";
    case Command::simulate: return "simulate";
    case Command::diagnose: return "diagnose";
    case Command::compat: return "compat";
  }
  return "estimate";
}

nlohmann::json to_json(const RunConfig& c) {
  nlohmann::json j{{"command", to_string(c.command)}, {"seed", c.seed}, {"out", c.out_path}};
  auto data = [&] {
    return nlohmann::json{{"data", c.data_path},
                          {"trial", c.trial_path},
                          {"target", c.target_path},
                          {"s_col", c.columns.s},
                          {"a_col", c.columns.a},
                          {"y_col", c.columns.y},
                          {"x_cols", c.columns.x},
                          {"w_cols", c.columns.w},
                          {"outcome", c.outcome}};
  };
  auto models = [&] {
    return nlohmann::json{{"family", c.family},         {"link", c.link},
                          {"terms", c.terms},           {"m_terms", c.m_terms},
                          {"step3_terms", c.step3_terms}};
  };
  auto boot = [&] {
    return nlohmann::json{{"B", c.bootstrap}, {"level", c.level}, {"threads", c.threads}};
  };
  switch (c.command) {
    case Command::estimate:
      j["input"] = data();
      j["models"] = models();
      j["estimator"] = c.estimator;
      j["estimand"] = c.estimand;
      j["ratio_method"] = c.ratio_method;
      j["external_models"] = {{"g", c.g_model}, {"h", c.h_model}, {"m", c.m_model}};
      j["bootstrap"] = boot();
      break;
    case Command::simulate:
      j["scenario"] = c.scenario_path;
      j["n1"] = c.n1;
      j["n0"] = c.n0;
      j["truth"] = {{"path", c.truth_path}, {"method", c.truth_method}, {"mc_draws", c.mc_draws}};
      break;
    case Command::diagnose:
      j["input"] = data();
      j["models"] = models();
      j["restriction"] = c.restriction;
      j["threshold"] = c.threshold;
      j["bootstrap"] = boot();
      break;
    case Command::compat:
      j["input"] = c.input_path;
      j["tol"] = c.tol;
      break;
  }
  return j;
}

std::string render(const nlohmann::json& document) { return document.dump(2) + "\n"; }

RunResult execute(const RunConfig& requested) {
  RunResult result;
  RunConfig config = requested;
  try {
    config = resolve(requested);
  } catch (const Error&) {
    // Unparseable settings are reported by the command itself below.
  }
  result.document["config"] = to_json(config);
  try {
    nlohmann::json body;
    switch (config.command) {
      case Command::estimate: body = run_estimate(config); break;
      case Command::simulate: body = run_simulate(config); break;
      case Command::diagnose: body = run_diagnose(config); break;
      case Command::compat: body = run_compat(config); break;
    }
    result.document.update(body);
    if (config.command == Command::simulate) {
      if (!config.truth_path.empty()) write_text(config.truth_path, render(result.document));
    } else if (!config.out_path.empty()) {
      write_text(config.out_path, render(result.document));
    }
  } catch (const Error& e) {
    result.exit_code = exit_status(e.code());
    result.document["error"] = {{"code", std::string(code_name(e.code()))},
                                {"module", e.module()},
                                {"message", e.what()}};
  }
  return result;
}

}  // namespace reltransport::cli
