#pragma once

// Nontrivial critical points of J restricted to H_t near detected candidates.
//
//   J(u) = 1/2 \int <A u', u'> + \int G(x, u)
//   f_t(u) = J(P_t u) + 1/2 |P_t^⊥ u|^2

#include "sflow/bifurcation.hpp"
#include "sflow/core.hpp"
#include "sflow/hilbert_fem.hpp"

#include <optional>
#include <string>
#include <vector>

namespace sflow {

/// J by 3-point Gauss quadrature. Throws quadrature_failure on non-finite
/// potential values.
double functional_value(const DiscreteSpace& space, const ProblemData& problem, const Vector& u);
/// dJ(u)[phi_i] for every hat function (a dual vector).
Vector gradient(const DiscreteSpace& space, const ProblemData& problem, const Vector& u);
/// d^2 J(u)[phi_j, phi_i].
Matrix tangent(const DiscreteSpace& space, const ProblemData& problem, const Vector& u);

/// Gradient of J restricted to H_t, in a gram-orthonormal basis W of H_t:
/// W^T dJ(u). Its Euclidean norm is the dual norm of dJ(u) on H_t.
Vector constrained_gradient(const DiscreteSpace& space, const ProblemData& problem, double t,
                            const Vector& u);

double ft_value(const DiscreteSpace& space, const ProblemData& problem, double t, const Vector& u);
/// Dual vector of df_t(u): P^T dJ(P u) + G (I - P) u.
Vector ft_gradient(const DiscreteSpace& space, const ProblemData& problem, double t, const Vector& u);

enum class PointStatus { converged, trivial, diverged };
const char* to_string(PointStatus s);

struct GlobalCheck {
  /// |A(t) (u'(t+) - u'(t-))| from one-sided second-order differences.
  double jump = 0.0;
  double tolerance = 0.0;
  bool global = false;
};

struct BranchPoint {
  double t = 0.0;
  double delta = 0.0;
  /// Set for every attempted point.
  std::optional<DiscreteFunction> u;
  double amplitude = 0.0;
  /// Dual norm of the constrained gradient.
  double residual = 0.0;
  /// Dual norm of df_t at u (P^⊥ term included).
  double ft_residual = 0.0;
  /// Largest |dJ(u)[phi_i]| over hat functions of both pieces.
  double weak_residual = 0.0;
  /// sup |u| on the piece away from the support side.
  double off_side_sup = 0.0;
  GlobalCheck global;
  PointStatus status = PointStatus::diverged;
  int iterations = 0;
  double seed_amplitude = 0.0;
};

enum class Side { plus, minus };
const char* to_string(Side s);

struct BranchControl {
  int steps = 8;
  /// t_j = t* ± delta0 * ratio^j.
  double delta0 = 2e-5;
  double ratio = 0.5;
  int max_newton = 120;
  double residual_tol = 1e-10;
  double trivial_amplitude = 1e-10;
  double fallback_amplitude = 1e-2;
  int max_halvings = 6;
  ToleranceProfile tol;
};

struct BranchTrace {
  Side side = Side::plus;
  /// Critical parameter on the aligned mesh family.
  double critical_t = 0.0;
  /// Parameter the branch search started from.
  double candidate_t = 0.0;
  int left_elements = 0;
  /// The kernel at critical_t is carried by the piece [0, t] (else [t, 1]).
  bool supported_left = true;
  std::vector<BranchPoint> points;
  bool all_trivial = false;
  /// At least two converged nontrivial points with decreasing amplitude.
  bool verified = false;
  /// Fitted exponent of amplitude against delta over converged points.
  double exponent = 0.0;
};

/// Follows a branch towards `candidate_t` on meshes with a node at every t_j
/// and the same element count as `space`. `index` is the crossing
/// eigenvalue's position in the ascending spectrum. Newton divergence and
/// collapse to zero are reported per point.
BranchTrace find_branch(const DiscreteSpace& space, const ProblemData& problem, double candidate_t,
                        Index index, Side side, const BranchControl& control = {});

/// Jump of the flux A u' at t; requires u(t) = 0 up to interpolation.
GlobalCheck global_solution_check(const DiscreteFunction& u, const ProblemData& problem, double t);

enum class VerifyStatus { verified, all_trivial, unverified };
const char* to_string(VerifyStatus s);

struct CandidateVerification {
  Candidate candidate;
  BranchTrace plus;
  BranchTrace minus;
  VerifyStatus status = VerifyStatus::unverified;
  std::string message;
};

struct VerifyReport {
  std::vector<CandidateVerification> candidates;
  /// Every solve collapsed to zero (vacuously true without candidates).
  bool all_trivial = true;
};

/// Both sides of every candidate in `report`.
VerifyReport verify_candidates(const DiscreteSpace& space, const ProblemData& problem,
                               const BifurcationReport& report, const BranchControl& control = {});

}  // namespace sflow
