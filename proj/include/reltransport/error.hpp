#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

#include <Eigen/Core>

namespace reltransport {

/// Machine-readable failure categories. Every error raised by the library
/// carries one of these plus the name of the module that raised it.
enum class ErrorCode {
  invalid_argument,
  io_error,
  missing_column,
  parse_error,
  invalid_indicator,
  invalid_outcome,
  empty_stratum,
  dimension_mismatch,
  validation_failed,
  singular_design,
  non_convergence,
  boundary_non_convergence,
  ratio_evaluation,
  zero_denominator,
  model_document,
  inference_failed,
  scenario_invalid,
};

std::string_view code_name(ErrorCode code);

/// Process exit status the command-line tool uses for a given code.
int exit_status(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, std::string module, const std::string& message)
      : std::runtime_error(message), code_(code), module_(std::move(module)) {}

  ErrorCode code() const noexcept { return code_; }
  const std::string& module() const noexcept { return module_; }

 private:
  ErrorCode code_;
  std::string module_;
};

/// Raised by the GLM engine when IRLS fails to reach the tolerance. Carries
/// the last accepted iterate so callers can inspect how far it got.
class NonConvergenceError : public Error {
 public:
  NonConvergenceError(bool boundary, Eigen::VectorXd last, int iterations,
                      const std::string& message)
      : Error(boundary ? ErrorCode::boundary_non_convergence
                       : ErrorCode::non_convergence,
              "glm", message),
        last_(std::move(last)),
        iterations_(iterations) {}

  bool boundary() const noexcept {
    return code() == ErrorCode::boundary_non_convergence;
  }
  const Eigen::VectorXd& last_iterate() const noexcept { return last_; }
  int iterations() const noexcept { return iterations_; }

 private:
  Eigen::VectorXd last_;
  int iterations_;
};

}  // namespace reltransport
