// reltransport: estimate target-population mean ratios and treatment effects
// from a randomized trial plus a target-population sample.

#include <iostream>

#include <CLI11.hpp>

#include "reltransport/cli.hpp"

namespace {

using reltransport::cli::Command;
using reltransport::cli::RunConfig;

void add_data_flags(CLI::App* cmd, RunConfig& c) {
  cmd->add_option("--data", c.data_path, "Composite CSV with an s column");
  cmd->add_option("--trial", c.trial_path, "Trial-sample CSV (s=1 implied)");
  cmd->add_option("--target", c.target_path, "Target-sample CSV (s=0 implied)");
  cmd->add_option("--s-col", c.columns.s, "Trial indicator column")->capture_default_str();
  cmd->add_option("--a-col", c.columns.a, "Treatment column")->capture_default_str();
  cmd->add_option("--y-col", c.columns.y, "Outcome column")->capture_default_str();
  cmd->add_option("--x-cols", c.columns.x, "Covariates X (comma-separated)")
      ->delimiter(',')
      ->required();
  cmd->add_option("--w-cols", c.columns.w, "Target-only covariates W (comma-separated)")
      ->delimiter(',');
  cmd->add_option("--outcome", c.outcome, "Outcome kind")
      ->check(CLI::IsMember({"binary", "count", "continuous"}))
      ->capture_default_str();
}

void add_model_flags(CLI::App* cmd, RunConfig& c) {
  cmd->add_option("--family", c.family, "Outcome-model family (default from --outcome)")
      ->check(CLI::IsMember({"gaussian", "bernoulli", "poisson"}));
  cmd->add_option("--link", c.link, "Outcome-model link (default canonical)")
      ->check(CLI::IsMember({"identity", "logit", "log"}));
  cmd->add_option("--terms", c.terms, "X terms for r, g, h; a:b denotes a product")
      ->delimiter(',');
  cmd->add_option("--m-terms", c.m_terms, "(X, W) terms for m")->delimiter(',');
  cmd->add_option("--step3-terms", c.step3_terms, "X terms for the iterated regression b")
      ->delimiter(',');
}

void add_bootstrap_flags(CLI::App* cmd, RunConfig& c, const char* help) {
  cmd->add_option("--bootstrap", c.bootstrap, help)->capture_default_str();
  cmd->add_option("--level", c.level, "Confidence level")
      ->check(CLI::Range(0.0, 1.0))
      ->capture_default_str();
  cmd->add_option("--threads", c.threads, "Bootstrap worker threads")->capture_default_str();
}

}  // namespace

int main(int argc, char** argv) {
  RunConfig config;
  CLI::App app{"Transport relative treatment effects from a trial to a target population"};
  app.set_config("--config", "", "TOML/INI file with option values (flags override)");
  app.require_subcommand(1);

  auto* estimate = app.add_subcommand("estimate", "Estimate a mean ratio or ATE with a bootstrap interval");
  add_data_flags(estimate, config);
  add_model_flags(estimate, config);
  add_bootstrap_flags(estimate, config, "Bootstrap replicates");
  estimate->add_option("--estimator", config.estimator, "Identifying functional")
      ->check(CLI::IsMember({"phi", "chi", "psi"}))
      ->capture_default_str();
  estimate->add_option("--estimand", config.estimand, "ratio or ate")
      ->check(CLI::IsMember({"ratio", "ate"}))
      ->capture_default_str();
  estimate->add_option("--ratio-method", config.ratio_method, "Conditional ratio model")
      ->check(CLI::IsMember({"arm-specific", "log-link"}))
      ->capture_default_str();
  estimate->add_option("--g-model", config.g_model, "External model document for E[Y|X,S=0]");
  estimate->add_option("--h-model", config.h_model, "External model document for E[Y|X,S=0,A=0]");
  estimate->add_option("--m-model", config.m_model, "External model document for E[Y|X,W,S=0,A=0]");
  estimate->add_option("--seed", config.seed, "Random seed")->capture_default_str();
  estimate->add_option("--out", config.out_path, "Result document path");

  auto* simulate = app.add_subcommand("simulate", "Generate a dataset and its true estimands");
  simulate->add_option("--scenario", config.scenario_path, "Scenario document")->required();
  simulate->add_option("--n1", config.n1, "Trial sample size")->capture_default_str();
  simulate->add_option("--n0", config.n0, "Target sample size")->capture_default_str();
  simulate->add_option("--truth", config.truth_path, "Where to write the truth document");
  simulate->add_option("--truth-method", config.truth_method, "closed_form or monte_carlo")
      ->check(CLI::IsMember({"closed_form", "monte_carlo"}))
      ->capture_default_str();
  simulate->add_option("--mc-draws", config.mc_draws, "Monte Carlo draws")->capture_default_str();
  simulate->add_option("--threads", config.threads, "Monte Carlo threads")->capture_default_str();
  simulate->add_option("--seed", config.seed, "Random seed")->capture_default_str();
  simulate->add_option("--out", config.out_path, "Dataset CSV path")->required();

  auto* diagnose = app.add_subcommand("diagnose", "Observed-data restrictions and positivity");
  add_data_flags(diagnose, config);
  add_model_flags(diagnose, config);
  add_bootstrap_flags(diagnose, config, "Bootstrap replicates (0 skips intervals)");
  diagnose->add_option("--restriction", config.restriction, "R1, R2 or both")
      ->check(CLI::IsMember({"R1", "R2", "both"}))
      ->capture_default_str();
  diagnose->add_option("--threshold", config.threshold, "Positivity flag threshold")
      ->capture_default_str();
  diagnose->add_option("--seed", config.seed, "Random seed")->capture_default_str();
  diagnose->add_option("--out", config.out_path, "Result document path");

  auto* compat = app.add_subcommand("compat", "Check ratio vs difference transportability per stratum");
  compat->add_option("--input", config.input_path, "CSV with columns e11,e10,e01,e00")->required();
  compat->add_option("--tol", config.tol, "Absolute tolerance")->capture_default_str();
  compat->add_option("--out", config.out_path, "Result document path");

  CLI11_PARSE(app, argc, argv);

  if (estimate->parsed()) config.command = Command::estimate;
  if (simulate->parsed()) config.command = Command::simulate;
  if (diagnose->parsed()) config.command = Command::diagnose;
  if (compat->parsed()) config.command = Command::compat;

  const auto result = reltransport::cli::execute(config);
  const auto text = reltransport::cli::render(result.document);
  if (result.exit_code != 0) {
    std::cerr << text;
  } else if (config.out_path.empty() || config.command == Command::simulate) {
    if (config.command != Command::simulate || config.truth_path.empty()) std::cout << text;
  }
  return result.exit_code;
}
