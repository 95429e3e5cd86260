#include "reltransport/error.hpp"

namespace reltransport {

std::string_view code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::invalid_argument: return "INVALID_ARGUMENT";
    case ErrorCode::io_error: return "IO_ERROR";
    case ErrorCode::missing_column: return "MISSING_COLUMN";
    case ErrorCode::parse_error: return "PARSE_ERROR";
    case ErrorCode::invalid_indicator: return "INVALID_INDICATOR";
    case ErrorCode::invalid_outcome: return "INVALID_OUTCOME";
    case ErrorCode::empty_stratum: return "EMPTY_STRATUM";
    case ErrorCode::dimension_mismatch: return "DIMENSION_MISMATCH";
    case ErrorCode::validation_failed: return "VALIDATION_FAILED";
    case ErrorCode::singular_design: return "SINGULAR_DESIGN";
    case ErrorCode::non_convergence: return "NON_CONVERGENCE";
    case ErrorCode::boundary_non_convergence: return "BOUNDARY_NON_CONVERGENCE";
    case ErrorCode::ratio_evaluation: return "RATIO_EVALUATION";
    case ErrorCode::zero_denominator: return "ZERO_DENOMINATOR";
    case ErrorCode::model_document: return "MODEL_DOCUMENT";
    case ErrorCode::inference_failed: return "INFERENCE_FAILED";
    case ErrorCode::scenario_invalid: return "SCENARIO_INVALID";
  }
  return "UNKNOWN";
}

int exit_status(ErrorCode code) {
  switch (code) {
    case ErrorCode::invalid_argument: return 2;
    case ErrorCode::io_error: return 3;
    case ErrorCode::missing_column:
    case ErrorCode::parse_error:
    case ErrorCode::invalid_indicator:
    case ErrorCode::invalid_outcome:
    case ErrorCode::empty_stratum:
    case ErrorCode::dimension_mismatch: return 4;
    case ErrorCode::validation_failed: return 5;
    case ErrorCode::singular_design:
    case ErrorCode::non_convergence:
    case ErrorCode::boundary_non_convergence: return 6;
    case ErrorCode::ratio_evaluation:
    case ErrorCode::zero_denominator: return 7;
    case ErrorCode::model_document: return 8;
    case ErrorCode::inference_failed: return 9;
    case ErrorCode::scenario_invalid: return 10;
  }
  return 1;
}

}  // namespace reltransport
