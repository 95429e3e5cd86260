#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "reltransport/datamodel.hpp"

namespace reltransport::cli {

enum class Command { estimate, simulate, diagnose, compat };

/// Fully resolved settings for one run. Every result document echoes this
/// back so a run can be reproduced from its output.
struct RunConfig {
  Command command = Command::estimate;

  // Data input: either one composite file with an s column, or two files.
  std::string data_path;
  std::string trial_path;
  std::string target_path;
  ColumnBindings columns;
  std::string outcome = "binary";

  // Estimation.
  std::string estimator = "phi";
  std::string estimand = "ratio";
  std::string ratio_method = "arm-specific";
  std::string family;  // empty: derived from the outcome kind
  std::string link;    // empty: canonical for the family
  std::vector<std::string> terms;        // X terms for r, g, h (default: x columns)
  std::vector<std::string> m_terms;      // (X, W) terms for m (default: x then w columns)
  std::vector<std::string> step3_terms;  // X terms for b (default: terms)
  std::string g_model;
  std::string h_model;
  std::string m_model;

  // Bootstrap.
  std::size_t bootstrap = 500;
  double level = 0.95;
  std::uint64_t seed = 1;
  unsigned threads = 1;

  std::string out_path;

  // simulate
  std::string scenario_path;
  std::size_t n1 = 1000;
  std::size_t n0 = 1000;
  std::string truth_path;
  std::string truth_method = "closed_form";
  std::size_t mc_draws = 1000000;

  // diagnose
  double threshold = 0.05;
  std::string restriction = "both";

  // compat
  std::string input_path;
  double tol = 1e-9;
};

std::string to_string(Command command);
nlohmann::json to_json(const RunConfig& config);

/// Fills defaulted model settings (family, link, term lists) from the
/// outcome kind and column bindings so the echoed config is explicit.
RunConfig resolve(RunConfig config);

struct RunResult {
  int exit_code = 0;
  nlohmann::json document;
};

/// Runs one command. Never throws for library errors: failures produce a
/// nonzero exit code and a document with an `error` section naming the
/// module and condition. Writes the document to `out_path` when set
/// (simulate writes the dataset there and the truth to `truth_path`).
RunResult execute(const RunConfig& config);

/// Canonical text form of a result document.
std::string render(const nlohmann::json& document);

}  // namespace reltransport::cli
