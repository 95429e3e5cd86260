#include "reltransport/simulate.hpp"

#include <cmath>
#include <future>
#include <random>

#include "reltransport/error.hpp"

namespace reltransport::sim {

namespace {

constexpr const char* kModule = "simulate";
constexpr std::size_t kBatchSize = std::size_t{1} << 16;

[[noreturn]] void fail(const std::string& message) {
  throw Error(ErrorCode::scenario_invalid, kModule, message);
}

double expit(double z) { return glm::inverse_link(glm::Link::logit, z); }

std::string_view to_string(TreatmentPolicy p) {
  switch (p) {
    case TreatmentPolicy::all_control: return "all_control";
    case TreatmentPolicy::logistic_in_x: return "logistic_in_x";
    case TreatmentPolicy::logistic_in_x_w: return "logistic_in_x_w";
  }
  return "all_control";
}

std::string_view to_string(OutcomeFamily f) {
  switch (f) {
    case OutcomeFamily::bernoulli: return "bernoulli";
    case OutcomeFamily::poisson: return "poisson";
    case OutcomeFamily::gaussian: return "gaussian";
  }
  return "bernoulli";
}

std::mt19937_64 engine_for(std::uint64_t seed, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)};
  return std::mt19937_64(seq);
}

double draw_outcome(const ScenarioSpec& sc, double mean, std::mt19937_64& rng) {
  switch (sc.outcome) {
    case OutcomeFamily::bernoulli: return std::bernoulli_distribution(mean)(rng) ? 1.0 : 0.0;
    case OutcomeFamily::poisson:
      return static_cast<double>(std::poisson_distribution<long long>(mean)(rng));
    case OutcomeFamily::gaussian: return std::normal_distribution<double>(mean, sc.sigma)(rng);
  }
  return mean;
}

double treatment_prob(const ScenarioSpec& sc, const CovariateCell& cell, const WLevel* level) {
  const auto& t = sc.treatment;
  if (t.policy == TreatmentPolicy::all_control) return 0.0;
  double z = t.intercept;
  for (std::size_t j = 0; j < cell.x.size(); ++j) z += t.x_coef[j] * cell.x[j];
  if (t.policy == TreatmentPolicy::logistic_in_x_w)
    for (std::size_t j = 0; j < level->w.size(); ++j) z += t.w_coef[j] * level->w[j];
  return expit(z);
}

std::discrete_distribution<std::size_t> cell_picker(const ScenarioSpec& sc, bool trial) {
  std::vector<double> mass;
  for (const auto& c : sc.cells) mass.push_back(trial ? c.trial_mass : c.target_mass);
  return {mass.begin(), mass.end()};
}

struct TargetDraw {
  std::size_t cell = 0;
  std::size_t level = 0;
};

TargetDraw draw_target_unit(const ScenarioSpec& sc,
                            std::discrete_distribution<std::size_t>& cells,
                            std::vector<std::discrete_distribution<std::size_t>>& levels,
                            std::mt19937_64& rng) {
  TargetDraw d;
  d.cell = cells(rng);
  if (!sc.w_names.empty()) d.level = levels[d.cell](rng);
  return d;
}

std::vector<std::discrete_distribution<std::size_t>> level_pickers(const ScenarioSpec& sc) {
  std::vector<std::discrete_distribution<std::size_t>> out;
  for (const auto& c : sc.cells) {
    std::vector<double> p;
    for (const auto& l : c.w) p.push_back(l.prob);
    if (p.empty()) p.push_back(1.0);
    out.emplace_back(p.begin(), p.end());
  }
  return out;
}

void check_mean(const ScenarioSpec& sc, double mean, const std::string& where) {
  if (!std::isfinite(mean) || !(mean > 0.0))
    fail("mean must be positive (" + where + ", got " + format_number(mean) + ")");
  if (sc.outcome == OutcomeFamily::bernoulli && !(mean < 1.0))
    fail("bernoulli mean must lie in (0,1) (" + where + ", got " + format_number(mean) + ")");
}

}  // namespace

double ScenarioSpec::target_control_mean(const CovariateCell& cell) const {
  if (w_names.empty()) return cell.target_baseline;
  double m = 0.0;
  for (const auto& l : cell.w) m += l.prob * l.target_baseline;
  return m;
}

double ScenarioSpec::treated_mean(const CovariateCell& cell, double control_mean) const {
  return scale == EffectScale::ratio ? cell.effect * control_mean : control_mean + cell.effect;
}

void ScenarioSpec::validate() const {
  if (cells.empty()) fail("scenario has no covariate cells");
  if (!(trial_assignment_prob > 0.0 && trial_assignment_prob < 1.0))
    fail("trial_assignment_prob must lie in (0,1) (A3)");
  if (outcome == OutcomeFamily::gaussian && !(sigma > 0.0)) fail("sigma must be positive");
  if (scale == EffectScale::ratio) {
    for (const auto& c : cells)
      if (!(c.effect > 0.0)) fail("ratio effects must be positive");
  }

  double trial_total = 0.0, target_total = 0.0;
  for (std::size_t k = 0; k < cells.size(); ++k) {
    const auto& c = cells[k];
    const std::string at = "cell " + std::to_string(k);
    if (c.x.size() != x_names.size()) fail(at + ": x dimension differs from x_names");
    if (!(c.trial_mass >= 0.0) || !(c.target_mass >= 0.0)) fail(at + ": negative mass");
    trial_total += c.trial_mass;
    target_total += c.target_mass;
    if (c.target_mass > 0.0 && !(c.trial_mass > 0.0))
      fail(at + ": target covariate level has no trial mass (A6)");

    if (c.trial_mass > 0.0) {
      check_mean(*this, c.trial_baseline, at + " trial control");
      check_mean(*this, treated_mean(c, c.trial_baseline), at + " trial treated");
    }
    if (w_names.empty()) {
      if (!c.w.empty()) fail(at + ": W levels given but w_names is empty");
      if (c.target_mass > 0.0) {
        check_mean(*this, c.target_baseline, at + " target control");
        check_mean(*this, treated_mean(c, c.target_baseline), at + " target treated");
      }
    } else if (c.target_mass > 0.0) {
      if (c.w.empty()) fail(at + ": missing W levels");
      double total = 0.0;
      for (const auto& l : c.w) {
        if (l.w.size() != w_names.size()) fail(at + ": w dimension differs from w_names");
        if (!(l.prob >= 0.0)) fail(at + ": negative W probability");
        total += l.prob;
        check_mean(*this, l.target_baseline, at + " target control");
        check_mean(*this, treated_mean(c, l.target_baseline), at + " target treated");
      }
      if (std::abs(total - 1.0) > 1e-9) fail(at + ": W probabilities do not sum to 1");
    }
  }
  if (std::abs(trial_total - 1.0) > 1e-9) fail("trial masses do not sum to 1");
  if (std::abs(target_total - 1.0) > 1e-9) fail("target masses do not sum to 1");

  switch (treatment.policy) {
    case TreatmentPolicy::all_control: break;
    case TreatmentPolicy::logistic_in_x_w:
      if (w_names.empty()) fail("logistic_in_x_w treatment needs W");
      if (treatment.w_coef.size() != w_names.size()) fail("w_coef length differs from w_names");
      [[fallthrough]];
    case TreatmentPolicy::logistic_in_x:
      if (treatment.x_coef.size() != x_names.size()) fail("x_coef length differs from x_names");
      break;
  }
}

ScenarioSpec ScenarioSpec::from_json(const nlohmann::json& doc) {
  ScenarioSpec sc;
  try {
    sc.x_names = doc.at("x_names").get<std::vector<std::string>>();
    sc.w_names = doc.value("w_names", std::vector<std::string>{});
    for (const auto& jc : doc.at("cells")) {
      CovariateCell c;
      c.x = jc.at("x").get<std::vector<double>>();
      c.trial_mass = jc.at("trial_mass").get<double>();
      c.target_mass = jc.at("target_mass").get<double>();
      c.trial_baseline = jc.value("trial_baseline", 0.0);
      c.target_baseline = jc.value("target_baseline", 0.0);
      c.effect = jc.value("effect", 1.0);
      if (jc.contains("w"))
        for (const auto& jl : jc.at("w"))
          c.w.push_back({jl.at("w").get<std::vector<double>>(), jl.at("prob").get<double>(),
                         jl.at("target_baseline").get<double>()});
      sc.cells.push_back(std::move(c));
    }
    if (doc.contains("treatment")) {
      const auto& jt = doc.at("treatment");
      const auto policy = jt.at("policy").get<std::string>();
      if (policy == "all_control") sc.treatment.policy = TreatmentPolicy::all_control;
      else if (policy == "logistic_in_x") sc.treatment.policy = TreatmentPolicy::logistic_in_x;
      else if (policy == "logistic_in_x_w") sc.treatment.policy = TreatmentPolicy::logistic_in_x_w;
      else fail("unknown treatment policy '" + policy + "'");
      sc.treatment.intercept = jt.value("intercept", 0.0);
      sc.treatment.x_coef = jt.value("x_coef", std::vector<double>{});
      sc.treatment.w_coef = jt.value("w_coef", std::vector<double>{});
    }
    sc.trial_assignment_prob = doc.value("trial_assignment_prob", 0.5);
    if (doc.contains("outcome")) {
      const auto& jo = doc.at("outcome");
      const auto family = jo.at("family").get<std::string>();
      if (family == "bernoulli") sc.outcome = OutcomeFamily::bernoulli;
      else if (family == "poisson") sc.outcome = OutcomeFamily::poisson;
      else if (family == "gaussian") sc.outcome = OutcomeFamily::gaussian;
      else fail("unknown outcome family '" + family + "'");
      sc.sigma = jo.value("sigma", 1.0);
    }
    const auto scale = doc.value("effect_scale", std::string("ratio"));
    if (scale == "ratio") sc.scale = EffectScale::ratio;
    else if (scale == "difference") sc.scale = EffectScale::difference;
    else fail("unknown effect_scale '" + scale + "'");
  } catch (const nlohmann::json::exception& e) {
    fail(std::string("malformed scenario document: ") + e.what());
  }
  sc.validate();
  return sc;
}

nlohmann::json ScenarioSpec::to_json() const {
  nlohmann::json doc;
  doc["x_names"] = x_names;
  doc["w_names"] = w_names;
  auto jcells = nlohmann::json::array();
  for (const auto& c : cells) {
    nlohmann::json jc{{"x", c.x},
                      {"trial_mass", c.trial_mass},
                      {"target_mass", c.target_mass},
                      {"trial_baseline", c.trial_baseline},
                      {"target_baseline", c.target_baseline},
                      {"effect", c.effect}};
    if (!c.w.empty()) {
      auto jw = nlohmann::json::array();
      for (const auto& l : c.w)
        jw.push_back({{"w", l.w}, {"prob", l.prob}, {"target_baseline", l.target_baseline}});
      jc["w"] = std::move(jw);
    }
    jcells.push_back(std::move(jc));
  }
  doc["cells"] = std::move(jcells);
  doc["treatment"] = {{"policy", std::string(to_string(treatment.policy))},
                      {"intercept", treatment.intercept},
                      {"x_coef", treatment.x_coef},
                      {"w_coef", treatment.w_coef}};
  doc["trial_assignment_prob"] = trial_assignment_prob;
  doc["outcome"] = {{"family", std::string(to_string(outcome))}, {"sigma", sigma}};
  doc["effect_scale"] = scale == EffectScale::ratio ? "ratio" : "difference";
  return doc;
}

AnalysisDataset generate(const ScenarioSpec& sc, std::size_t n1, std::size_t n0,
                         std::uint64_t seed) {
  sc.validate();
  if (n1 < 1 || n0 < 1) fail("n1 and n0 must be at least 1");
  std::mt19937_64 rng = engine_for(seed, 0);
  auto trial_cells = cell_picker(sc, true);
  auto target_cells = cell_picker(sc, false);
  auto levels = level_pickers(sc);
  std::bernoulli_distribution assign(sc.trial_assignment_prob);

  std::vector<ObservationRow> rows;
  rows.reserve(n1 + n0);
  for (std::size_t i = 0; i < n1; ++i) {
    const auto& cell = sc.cells[trial_cells(rng)];
    ObservationRow r;
    r.s = 1;
    r.x = cell.x;
    r.a = assign(rng) ? 1 : 0;
    const double mean = r.a ? sc.treated_mean(cell, cell.trial_baseline) : cell.trial_baseline;
    r.y = draw_outcome(sc, mean, rng);
    rows.push_back(std::move(r));
  }
  for (std::size_t i = 0; i < n0; ++i) {
    const TargetDraw d = draw_target_unit(sc, target_cells, levels, rng);
    const auto& cell = sc.cells[d.cell];
    const WLevel* level = sc.w_names.empty() ? nullptr : &cell.w[d.level];
    ObservationRow r;
    r.s = 0;
    r.x = cell.x;
    if (level) r.w = level->w;
    const double p = treatment_prob(sc, cell, level);
    r.a = (p > 0.0 && std::bernoulli_distribution(p)(rng)) ? 1 : 0;
    const double base = level ? level->target_baseline : cell.target_baseline;
    r.y = draw_outcome(sc, r.a ? sc.treated_mean(cell, base) : base, rng);
    rows.push_back(std::move(r));
  }
  OutcomeKind kind = OutcomeKind::continuous;
  if (sc.outcome == OutcomeFamily::bernoulli) kind = OutcomeKind::binary;
  if (sc.outcome == OutcomeFamily::poisson) kind = OutcomeKind::count;
  return AnalysisDataset(rows, sc.x_names, sc.w_names, kind);
}

TrueValues true_estimands(const ScenarioSpec& sc) {
  sc.validate();
  TrueValues t;
  for (const auto& c : sc.cells) {
    if (c.target_mass == 0.0) continue;
    if (sc.w_names.empty()) {
      t.mean_y0_s0 += c.target_mass * c.target_baseline;
      t.mean_y1_s0 += c.target_mass * sc.treated_mean(c, c.target_baseline);
    } else {
      for (const auto& l : c.w) {
        t.mean_y0_s0 += c.target_mass * l.prob * l.target_baseline;
        t.mean_y1_s0 += c.target_mass * l.prob * sc.treated_mean(c, l.target_baseline);
      }
    }
  }
  t.mean_ratio = t.mean_y1_s0 / t.mean_y0_s0;
  t.ate = t.mean_y1_s0 - t.mean_y0_s0;
  t.method = TrueValues::Method::closed_form;
  return t;
}

TrueValues true_estimands_monte_carlo(const ScenarioSpec& sc, std::size_t draws,
                                      std::uint64_t seed, unsigned threads) {
  sc.validate();
  if (draws < 1000)
    throw Error(ErrorCode::invalid_argument, kModule, "monte carlo oracle needs N >= 1000");

  struct Moments {
    double s1 = 0, s0 = 0, s11 = 0, s00 = 0, s10 = 0;
  };
  const std::size_t batches = (draws + kBatchSize - 1) / kBatchSize;
  auto run_batch = [&sc, draws, seed](std::size_t b) {
    auto rng = engine_for(seed, b + 1);
    auto cells = cell_picker(sc, false);
    auto levels = level_pickers(sc);
    const std::size_t begin = b * kBatchSize;
    const std::size_t end = std::min(draws, begin + kBatchSize);
    Moments m;
    for (std::size_t i = begin; i < end; ++i) {
      const TargetDraw d = draw_target_unit(sc, cells, levels, rng);
      const auto& cell = sc.cells[d.cell];
      const double base = sc.w_names.empty() ? cell.target_baseline : cell.w[d.level].target_baseline;
      const double y1 = draw_outcome(sc, sc.treated_mean(cell, base), rng);
      const double y0 = draw_outcome(sc, base, rng);
      m.s1 += y1;
      m.s0 += y0;
      m.s11 += y1 * y1;
      m.s00 += y0 * y0;
      m.s10 += y1 * y0;
    }
    return m;
  };

  std::vector<Moments> parts(batches);
  if (threads <= 1) {
    for (std::size_t b = 0; b < batches; ++b) parts[b] = run_batch(b);
  } else {
    for (std::size_t start = 0; start < batches; start += threads) {
      std::vector<std::future<Moments>> futures;
      for (std::size_t b = start; b < std::min(batches, start + threads); ++b)
        futures.push_back(std::async(std::launch::async, run_batch, b));
      for (std::size_t k = 0; k < futures.size(); ++k) parts[start + k] = futures[k].get();
    }
  }
  Moments total;
  for (const auto& m : parts) {
    total.s1 += m.s1;
    total.s0 += m.s0;
    total.s11 += m.s11;
    total.s00 += m.s00;
    total.s10 += m.s10;
  }
  const double n = static_cast<double>(draws);
  const double mu1 = total.s1 / n, mu0 = total.s0 / n;
  const double var1 = (total.s11 - n * mu1 * mu1) / (n - 1);
  const double var0 = (total.s00 - n * mu0 * mu0) / (n - 1);
  const double cov = (total.s10 - n * mu1 * mu0) / (n - 1);

  TrueValues t;
  t.method = TrueValues::Method::monte_carlo;
  t.mc_draws = draws;
  t.mc_seed = seed;
  t.mean_y1_s0 = mu1;
  t.mean_y0_s0 = mu0;
  t.mean_ratio = mu1 / mu0;
  t.ate = mu1 - mu0;
  const double ratio_var =
      (var1 / (mu0 * mu0) + mu1 * mu1 * var0 / std::pow(mu0, 4) - 2.0 * mu1 * cov / std::pow(mu0, 3)) / n;
  t.standard_errors = std::array<double, 4>{std::sqrt(var1 / n), std::sqrt(var0 / n),
                                            std::sqrt(std::max(ratio_var, 0.0)),
                                            std::sqrt(std::max(var1 + var0 - 2.0 * cov, 0.0) / n)};
  return t;
}

nlohmann::json to_json(const TrueValues& t) {
  nlohmann::json j{{"mean_y1_s0", t.mean_y1_s0},
                   {"mean_y0_s0", t.mean_y0_s0},
                   {"mean_ratio", t.mean_ratio},
                   {"ate", t.ate}};
  if (t.method == TrueValues::Method::closed_form) {
    j["method"] = "closed_form";
  } else {
    j["method"] = "monte_carlo";
    j["draws"] = t.mc_draws;
    j["seed"] = t.mc_seed;
    const auto& se = *t.standard_errors;
    j["standard_errors"] = {{"mean_y1_s0", se[0]}, {"mean_y0_s0", se[1]},
                            {"mean_ratio", se[2]}, {"ate", se[3]}};
  }
  return j;
}

std::vector<StratumMeans<double>> stratum_means(const ScenarioSpec& sc) {
  std::vector<StratumMeans<double>> out;
  for (const auto& c : sc.cells) {
    if (c.target_mass == 0.0) continue;
    const double e00 = sc.target_control_mean(c);
    double e01 = 0.0;
    if (sc.w_names.empty()) e01 = sc.treated_mean(c, c.target_baseline);
    else
      for (const auto& l : c.w) e01 += l.prob * sc.treated_mean(c, l.target_baseline);
    out.push_back({sc.treated_mean(c, c.trial_baseline), c.trial_baseline, e01, e00});
  }
  return out;
}

}  // namespace reltransport::sim
