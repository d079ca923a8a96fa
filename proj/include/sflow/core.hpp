#pragma once

#include <Eigen/Core>

#include <stdexcept>
#include <string>

namespace sflow {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

/// Numerical thresholds shared by every module. Passed explicitly; there is
/// no global tolerance state.
struct ToleranceProfile {
  /// Singular value counts as zero below `rank * sigma_max`.
  double rank = 1e-10;
  /// Eigenvalue counts as zero when |lambda| < zero_band * max(1, |M|).
  double zero_band = 1e-8;
  /// Principal angle counts as zero when cos > 1 - angle.
  double angle = 1e-9;
  /// Idempotency / selfadjointness residual bound for projections.
  double projection = 1e-10;
  /// Selfadjointness residual bound for operators.
  double selfadjoint = 1e-10;
};

enum class ErrorCode {
  rank_deficiency,
  ambient_mismatch,
  not_a_projection,
  degenerate_input,
  surjectivity_failure,
  not_selfadjoint,
  degenerate_endpoint,
  subdivision_limit,
  interval_mismatch,
  out_of_interval,
  bad_cutoff,
  precondition_violated,
  quadrature_failure,
  invalid_argument,
  internal,
};

const char* to_string(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

/// Closed parameter interval [a, b].
struct Interval {
  double a = 0.0;
  double b = 1.0;

  double width() const { return b - a; }
  bool contains(double t) const { return t >= a && t <= b; }
};

}  // namespace sflow
