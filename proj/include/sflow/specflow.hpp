#pragma once

// Morse indices and spectral flow of gram-selfadjoint operator paths.
//
// In finite dimension every selfadjoint operator is Fredholm with finite Morse
// index, so the spectral flow of a path with invertible ends reduces to the
// difference of endpoint Morse indices. The driver below still scans the path
// and localizes the individual eigenvalue crossings, since those are what
// bifurcation detection needs.

#include "sflow/core.hpp"
#include "sflow/grassmann.hpp"

#include <functional>
#include <string>
#include <vector>

namespace sflow {

class SymmetricOperator {
 public:
  /// Throws not_selfadjoint when |G M - M^T G| > tol * |G| * (1 + |M|).
  SymmetricOperator(InnerProductSpace ambient, Matrix matrix, const ToleranceProfile& tol = {});

  const InnerProductSpace& ambient() const { return ambient_; }
  const Matrix& matrix() const { return matrix_; }
  Index dim() const { return matrix_.rows(); }

 private:
  InnerProductSpace ambient_;
  Matrix matrix_;
};

struct SpectralDecomposition {
  Vector eigenvalues;  // ascending
  Matrix eigenvectors; // gram-orthonormal columns; empty when not requested
  double scale = 1.0;  // max(1, |M|)
  Index negative_count = 0;
  Index zero_count = 0;
  Index positive_count = 0;
};

/// Solves M x = lambda x, equivalently (G M) x = lambda G x, through the
/// whitened symmetric matrix W^T M W^{-T}.
SpectralDecomposition decompose(const SymmetricOperator& op, const ToleranceProfile& tol = {},
                                bool vectors = true);

/// Generalized eigenproblem of a symmetric form `form` against a positive
/// definite `gram`, classified with the same zero band.
SpectralDecomposition decompose_form(const Matrix& form, const Matrix& gram,
                                     const ToleranceProfile& tol = {}, bool vectors = false);

bool in_zero_band(double lambda, double scale, const ToleranceProfile& tol);

Index morse_index(const SymmetricOperator& op, const ToleranceProfile& tol = {});
Index kernel_dimension(const SymmetricOperator& op, const ToleranceProfile& tol = {});

/// dim(E^-(S) ∩ E^+(T)) - dim(E^+(S) ∩ E^-(T)). Both operators must be
/// invertible.
long relative_morse_index(const SymmetricOperator& s, const SymmetricOperator& t,
                          const ToleranceProfile& tol = {});

struct OperatorPath {
  Interval interval;
  std::function<SymmetricOperator(double)> evaluate;
  std::string label;
};

/// Block diagonal path on the product space.
OperatorPath direct_sum(const OperatorPath& p, const OperatorPath& q);

struct ScanControl {
  /// Uniform subintervals of the initial scan.
  int grid = 32;
  /// Crossings are bisected to at most this parameter width.
  double bracket = 1e-6;
  int max_depth = 60;
  /// Bound on |d lambda / dt| used to rule out hidden double crossings inside
  /// a subinterval. <= 0 selects twice the largest slope seen on the grid.
  double lipschitz = 0.0;
  /// Number of lowest eigenvalues kept per scan sample.
  int curve_count = 6;
  /// Cross-check the result against relative_morse_index of the endpoints.
  bool check_relative_index = true;
  ToleranceProfile tol;
};

struct Crossing {
  double t = 0.0;
  /// mu(left end) - mu(right end) across the bracket; 0 for a touching pair.
  int sign = 0;
  int kernel_dim = 0;
  /// Position of the crossing eigenvalue in the ascending spectrum.
  Index index = 0;
  double eigenvalue_slope_estimate = 0.0;
  double lo = 0.0;
  double hi = 0.0;
};

struct SpectrumSample {
  double t = 0.0;
  Vector lowest;  // first curve_count eigenvalues, ascending
  Index morse = 0;
};

struct SpectralFlowResult {
  long value = 0;
  Index morse_a = 0;
  Index morse_b = 0;
  std::vector<Crossing> crossings;
  std::vector<SpectrumSample> samples;  // the initial scan grid
  int evaluations = 0;
};

/// Signed eigenvalue crossings of `path` with the orientation
/// value = mu(L_a) - mu(L_b). Throws degenerate_endpoint when L_a or L_b has a
/// kernel, subdivision_limit when bisection cannot separate a degeneracy.
SpectralFlowResult spectral_flow(const OperatorPath& path, const ScanControl& control = {});

/// Root of the k-th sorted eigenvalue inside [lo, hi], where it changes sign.
/// `spectrum` returns the sorted eigenvalues and the zero-band scale.
struct SpectrumAt {
  Vector eigenvalues;
  double scale = 1.0;
};
double refine_eigenvalue_root(const std::function<SpectrumAt(double)>& spectrum, double lo,
                              double hi, Index k, const ToleranceProfile& tol,
                              int max_iterations = 80);

}  // namespace sflow
