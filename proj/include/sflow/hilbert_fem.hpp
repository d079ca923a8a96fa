#pragma once

// Piecewise-linear Galerkin truncation of H^1_0([0,1], R^n) with the inner
// product <u, v> = \int <u', v'>.
//
// Degrees of freedom are node-major: component c of interior node i
// (1 <= i <= N-1) has index (i-1)*n + c.

#include "sflow/core.hpp"
#include "sflow/grassmann.hpp"
#include "sflow/specflow.hpp"

#include <array>
#include <functional>
#include <string>
#include <vector>

namespace sflow {

class Mesh {
 public:
  /// Strictly increasing nodes with nodes.front() == 0 and nodes.back() == 1.
  explicit Mesh(std::vector<double> nodes);
  static Mesh uniform(int elements);

  int elements() const { return static_cast<int>(nodes_.size()) - 1; }
  const std::vector<double>& nodes() const { return nodes_; }
  double node(int i) const { return nodes_[static_cast<std::size_t>(i)]; }
  double width(int element) const { return node(element + 1) - node(element); }
  double max_width() const;

  /// Element e with node(e) <= x < node(e+1) (the last element for x == 1).
  int locate(double x) const;
  /// Index of a node equal to x within 1e-14, or -1.
  int node_at(double x) const;

 private:
  std::vector<double> nodes_;
};

class DiscreteSpace {
 public:
  DiscreteSpace(Mesh mesh, int n);

  const Mesh& mesh() const { return mesh_; }
  int n() const { return n_; }
  Index dof_count() const { return static_cast<Index>(mesh_.elements() - 1) * n_; }
  const InnerProductSpace& inner() const { return inner_; }
  const Matrix& gram() const { return inner_.gram(); }

  /// Dof of component c at node i, or -1 for the boundary nodes.
  Index dof(int node, int component) const;

 private:
  Mesh mesh_;
  int n_;
  InnerProductSpace inner_;
};

/// Exact stiffness matrix of \int <u', v'> on hat functions.
DiscreteSpace assemble_gram(const Mesh& mesh, int n);

struct DiscreteFunction {
  DiscreteSpace space;
  Vector coords;

  /// Value at x by linear interpolation.
  Vector value(double x) const;
  /// Nodal values including the zero boundary nodes, (N+1) x n.
  Matrix nodal_values() const;
};

/// Nodal interpolant of a continuous function vanishing at 0 and 1.
DiscreteFunction interpolate(const DiscreteSpace& space,
                             const std::function<Vector(double)>& f);

/// Coefficients of the semilinear system -(A u')' + g(x, u) = 0.
struct ProblemData {
  int n = 1;
  std::function<Matrix(double)> A;
  /// dg/dxi at xi = 0.
  std::function<Matrix(double)> S;
  std::function<Vector(double, const Vector&)> g;
  /// Potential with grad_xi G = g.
  std::function<double(double, const Vector&)> potential;
  /// dg/dxi, used by Newton solves.
  std::function<Matrix(double, const Vector&)> g_jacobian;
  /// Coefficients come from the constant/polynomial preset class.
  bool analytic = false;
  std::string label;
};

/// Checks invertibility of A and the finite-difference consistency of
/// potential/g/S/g_jacobian at the space's quadrature points. Throws
/// precondition_violated.
void validate(const ProblemData& problem, const DiscreteSpace& space);

namespace presets {

/// A = I, S = 0, g = 0: the Hessian is the inner product itself.
ProblemData identity(int n = 1);
/// A = I, g(x, xi) = -c xi.
ProblemData shifted_laplacian(double c, int n = 1);
/// A = I, g(x, xi) = -c xi + xi^3 componentwise.
ProblemData cubic(double c, int n = 1);
/// A(x) = sum_k a_k x^k, S(x) = sum_k s_k x^k (n x n matrices),
/// g = S(x) xi + cubic * xi^3 componentwise.
ProblemData polynomial(std::vector<Matrix> a_coeffs, std::vector<Matrix> s_coeffs,
                       double cubic = 0.0);
/// A and S sampled at increasing x in [0, 1], linearly interpolated.
ProblemData tabulated(std::vector<double> x, std::vector<Matrix> a_samples,
                      std::vector<Matrix> s_samples, double cubic = 0.0);

}  // namespace presets

/// 3-point Gauss-Legendre rule on [0, 1].
struct GaussRule {
  std::array<double, 3> points;
  std::array<double, 3> weights;
};
const GaussRule& gauss3();

/// B_ij = \int <A phi_j', phi_i'> + \int <S phi_j, phi_i>, symmetric.
Matrix assemble_hessian(const DiscreteSpace& space, const ProblemData& problem);

/// Coordinate matrix G^{-1} B of the Riesz operator T.
SymmetricOperator riesz_operator(const DiscreteSpace& space, const Matrix& hessian);

/// Integral formula for T evaluated at the nodes:
///   Tu(x) = \int_0^x A u' - x \int_0^1 A u' - \int_0^x \int_0^s S u + x \int_0^1 \int_0^s S u.
/// Nodal interpolation is the H^1_0-orthogonal projection onto the P1 space.
DiscreteFunction explicit_T_apply(const DiscreteSpace& space, const ProblemData& problem,
                                  const DiscreteFunction& u);
/// Same formula for a smooth u given with its derivative; integrals use
/// `subdivisions` Gauss panels per element.
DiscreteFunction explicit_T_apply(const DiscreteSpace& space, const ProblemData& problem,
                                  const std::function<Vector(double)>& u,
                                  const std::function<Vector(double)>& du, int subdivisions = 4);

/// ev_t as an n x dof matrix. Throws out_of_interval unless 0 < t < 1.
Matrix evaluation_map(const DiscreteSpace& space, double t);

/// Norm of a family of functionals (rows) in the dual of (R^dof, G):
/// sqrt(lambda_max(E G^{-1} E^T)).
double dual_norm(const DiscreteSpace& space, const Matrix& functionals);

/// H_t = ker ev_t with an explicit basis of codimension n.
Subspace constrained_subspace(const DiscreteSpace& space, double t);

/// Basis of the constrained subspace in which the constraint is eliminated:
/// nodal dofs of all unconstrained nodes plus, when t lies strictly inside
/// an element with two interior nodes, one coupled column per component.
Matrix constrained_basis(const DiscreteSpace& space, double t);

using Cutoff = std::function<double(double)>;

/// C^1 piecewise-cubic cutoff: 0 at x = 0, rises to 1 on [0, lo], equals 1 on
/// [lo, hi], falls to 0 on [hi, 1].
Cutoff smoothstep_cutoff(double lo, double hi);

/// Q_t u = u - chi u(t) assembled with nodal chi, then orthogonalized.
/// Throws bad_cutoff if chi(0) or chi(1) is non-zero or chi is not 1 at the
/// nodes carrying ev_t.
Projection chi_projection(const DiscreteSpace& space, double t, const Cutoff& chi,
                          const ToleranceProfile& tol = {});

using ProjectionFamily = std::function<Projection(double)>;

/// t -> orthogonal_projection(constrained_subspace(t)).
ProjectionFamily direct_projector(const DiscreteSpace& space, const ToleranceProfile& tol = {});
/// t -> chi_projection(t, chi).
ProjectionFamily chi_projector(const DiscreteSpace& space, Cutoff chi,
                               const ToleranceProfile& tol = {});
/// t -> I - G^{-1} E^T (E G^{-1} E^T)^{-1} E with E = ev_t: the same orthogonal
/// projection built from the Riesz representers of ev_t, in O(dof^2 n).
ProjectionFamily complement_projector(const DiscreteSpace& space,
                                      const ToleranceProfile& tol = {});
/// t -> P_t from the kernel of ev_t via a right inverse.
ProjectionFamily kernel_projector(const DiscreteSpace& space, const ToleranceProfile& tol = {});

/// L_t = P_t T P_t + (I - P_t).
OperatorPath build_L_path(const DiscreteSpace& space, const SymmetricOperator& riesz,
                          ProjectionFamily projector, Interval interval);

}  // namespace sflow
