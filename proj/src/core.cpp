#include "sflow/core.hpp"

namespace sflow {

const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::rank_deficiency: return "RankDeficiency";
    case ErrorCode::ambient_mismatch: return "AmbientMismatch";
    case ErrorCode::not_a_projection: return "NotAProjection";
    case ErrorCode::degenerate_input: return "DegenerateInput";
    case ErrorCode::surjectivity_failure: return "SurjectivityFailure";
    case ErrorCode::not_selfadjoint: return "NotSelfadjoint";
    case ErrorCode::degenerate_endpoint: return "DegenerateEndpoint";
    case ErrorCode::subdivision_limit: return "SubdivisionLimit";
    case ErrorCode::interval_mismatch: return "IntervalMismatch";
    case ErrorCode::out_of_interval: return "OutOfInterval";
    case ErrorCode::bad_cutoff: return "BadCutoff";
    case ErrorCode::precondition_violated: return "PreconditionViolated";
    case ErrorCode::quadrature_failure: return "QuadratureFailure";
    case ErrorCode::invalid_argument: return "InvalidArgument";
    case ErrorCode::internal: return "InternalError";
  }
  return "UnknownError";
}

}  // namespace sflow
