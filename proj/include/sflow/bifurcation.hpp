#pragma once

// Spectral-flow bifurcation detection along the constraint family
// H_t = {u : u(t) = 0}.

#include "sflow/core.hpp"
#include "sflow/grassmann.hpp"
#include "sflow/hilbert_fem.hpp"
#include "sflow/specflow.hpp"

#include <string>
#include <vector>

namespace sflow {

struct Margins {
  /// Smallest |eigenvalue| of the restriction of T to H_a and to H_b.
  double a = 0.0;
  double b = 0.0;
  bool admissible = false;
};

/// Restricts T to each subspace in a gram-orthonormal basis.
Margins admissibility_check(const SymmetricOperator& t_op, const Subspace& ha, const Subspace& hb,
                            const ToleranceProfile& tol = {});

/// Restricted form matrices on H_t in the eliminated basis of
/// constrained_basis(space, t): B_H = C^T B C, G_H = C^T G C.
struct RestrictedForm {
  Matrix basis;
  Matrix hessian;
  Matrix gram;
};
RestrictedForm restrict_form(const DiscreteSpace& space, const Matrix& hessian, double t);

/// Mesh with `elements` elements and a node at t: `left` uniform elements on
/// [0, t], the rest uniform on [t, 1].
Mesh aligned_mesh(int elements, int left, double t);

/// Root of the k-th restricted eigenvalue on the family of aligned meshes
/// with a node at the parameter itself.
struct AlignedRoot {
  double t = 0.0;
  int left_elements = 0;
  Index index = 0;
  int kernel_dim = 0;
};

/// Which piece gets an even element count (a node at its midpoint).
enum class Parity { any, even_left, even_right };

/// Searches near `guess` for a sign change of eigenvalue `k` and refines it.
/// Throws subdivision_limit when no sign change is found nearby.
AlignedRoot refine_on_aligned_mesh(int elements, int n, const ProblemData& problem, double guess,
                                   Index k, Parity parity = Parity::any,
                                   const ToleranceProfile& tol = {});

enum class ProjectionRoute { complement, direct, chi, kernel };

struct DetectControl {
  ScanControl scan;
  ProjectionRoute route = ProjectionRoute::complement;
  /// Relocalize signed crossings on node-aligned meshes.
  bool refine_aligned = true;
};

struct Candidate {
  /// Reported critical parameter (aligned refinement when available).
  double t = 0.0;
  /// Root on the fixed mesh of the path.
  double t_path = 0.0;
  double lo = 0.0;
  double hi = 0.0;
  double bracket_width = 0.0;
  int sign = 0;
  int kernel_dim = 0;
  /// Position of the crossing eigenvalue in the ascending spectrum.
  Index index = 0;
  double slope = 0.0;
  bool refined = false;
  int aligned_left_elements = 0;
};

struct HypothesisNotes {
  /// H_t has finite codimension n in every case.
  bool finite_codimension = true;
  /// A is the identity at every quadrature point, so T = I + compact.
  bool compact_perturbation = false;
  /// Coefficients come from the constant/polynomial class.
  bool analytic = false;
};

struct BifurcationReport {
  Interval interval;
  int mesh_elements = 0;
  int n = 1;
  std::string problem;
  long sfl = 0;
  Index morse_a = 0;
  Index morse_b = 0;
  Margins margins;
  std::vector<Candidate> candidates;
  long count_lower_bound = 0;
  /// The count bound relies on analyticity that could not be confirmed.
  bool count_caveat = false;
  HypothesisNotes hypotheses;
  std::vector<std::string> notes;
  std::vector<SpectrumSample> curves;
};

/// Throws degenerate_endpoint when the endpoint restrictions are singular.
BifurcationReport detect(const DiscreteSpace& space, const ProblemData& problem, Interval interval,
                         const DetectControl& control = {});

/// Checks the report invariants; throws internal on violation.
void check_report(const BifurcationReport& report);

struct KernelCondition {
  Index kernel_dimension = 0;
  /// dim(im(T|H_t) ∩ H_t^⊥) from principal angles.
  Index intersection_dimension = 0;
  bool agree = false;
};

KernelCondition kernel_condition(const DiscreteSpace& space, const SymmetricOperator& t_op, double t,
                                 const ToleranceProfile& tol = {});

struct MorseCriterion {
  Index morse_a = 0;
  Index morse_b = 0;
  bool differs = false;
};

/// Morse indices of the Hessian form restricted to H_a and H_b. Throws
/// precondition_violated unless A(x) is positive definite at every quadrature
/// point.
MorseCriterion morse_criterion(const DiscreteSpace& space, const ProblemData& problem, double a,
                               double b, const ToleranceProfile& tol = {});

/// JSON with a fixed key order; floats with 17 significant digits.
std::string report_to_json(const BifurcationReport& report);
/// Throws invalid_argument on malformed input.
BifurcationReport report_from_json(const std::string& text);

/// CSV with columns t, lambda_1..lambda_K.
std::string eigencurves_csv(const BifurcationReport& report);

}  // namespace sflow
