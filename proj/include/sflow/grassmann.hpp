#pragma once

// Subspaces of a finite-dimensional inner-product space, their orthogonal
// projections and the gap metric d(U, V) = |P_U - P_V|.

#include "sflow/core.hpp"

#include <functional>
#include <iosfwd>
#include <memory>
#include <vector>

namespace sflow {

/// R^dim equipped with <x, y> = x^T G y for a symmetric positive definite G.
///
/// Copies share one immutable state object. G^{1/2} and G^{-1/2} are built on
/// first use (thread-safe) since only norm computations need them.
class InnerProductSpace {
 public:
  explicit InnerProductSpace(Matrix gram);
  static InnerProductSpace euclidean(Index dim);

  Index dim() const;
  const Matrix& gram() const;
  const Matrix& sqrt_gram() const;
  const Matrix& inv_sqrt_gram() const;

  /// G^{-1} rhs.
  Matrix solve(const Matrix& rhs) const;
  /// With G = W W^T (W the Cholesky factor, or V D^{1/2} when the factorization
  /// falls back to an eigendecomposition): coordinates in which G becomes the
  /// identity. to_orthonormal(x) = W^T x, from_orthonormal(y) = W^{-T} y.
  Matrix to_orthonormal(const Matrix& x) const;
  Matrix from_orthonormal(const Matrix& y) const;
  /// W^T M W^{-T}; symmetric when M is gram-selfadjoint.
  Matrix similarity(const Matrix& m) const;
  bool used_cholesky() const;
  /// Gram-adjoint M* = G^{-1} M^T G.
  Matrix adjoint(const Matrix& m) const;
  double inner(const Vector& x, const Vector& y) const;
  double norm(const Vector& x) const;
  /// |M| = sigma_max(G^{1/2} M G^{-1/2}); basis independent.
  double operator_norm(const Matrix& m) const;
  /// Same as operator_norm for a gram-selfadjoint M (symmetric eigensolve).
  double selfadjoint_norm(const Matrix& m) const;
  /// |G M - M^T G|, the gram-selfadjointness defect.
  double selfadjoint_defect(const Matrix& m) const;

  bool same_space(const InnerProductSpace& other) const;

 private:
  struct State;
  std::shared_ptr<const State> state_;
};

/// Direct sum with block diagonal gram.
InnerProductSpace direct_sum(const InnerProductSpace& x, const InnerProductSpace& y);

/// span of the columns of `basis` (dim x k, full column rank).
class Subspace {
 public:
  /// Throws rank_deficiency unless the gram-weighted basis has full column rank.
  Subspace(InnerProductSpace ambient, Matrix basis, const ToleranceProfile& tol = {});
  /// Skips the rank check; for bases that are full rank by construction.
  static Subspace structural(InnerProductSpace ambient, Matrix basis);

  const InnerProductSpace& ambient() const { return ambient_; }
  const Matrix& basis() const { return basis_; }
  Index dim() const { return basis_.cols(); }
  Index codim() const { return ambient_.dim() - basis_.cols(); }

  /// Gram-orthonormal basis of the same span.
  Matrix orthonormal_basis() const;

 private:
  struct Unchecked {};
  Subspace(Unchecked, InnerProductSpace ambient, Matrix basis);

  InnerProductSpace ambient_;
  Matrix basis_;
};

/// Idempotent, gram-selfadjoint matrix.
class Projection {
 public:
  /// Checks both invariants against `tol.projection`.
  Projection(InnerProductSpace ambient, Matrix matrix, const ToleranceProfile& tol = {});

  const InnerProductSpace& ambient() const { return ambient_; }
  const Matrix& matrix() const { return matrix_; }
  /// trace(P), rounded.
  Index rank() const;
  /// I - P.
  Projection complement() const;

  double idempotency_residual() const;
  double selfadjoint_residual() const;

 private:
  struct Unchecked {};
  Projection(Unchecked, InnerProductSpace ambient, Matrix matrix);

  InnerProductSpace ambient_;
  Matrix matrix_;
};

/// P = B (B^T G B)^{-1} B^T G.
Projection orthogonal_projection(const Subspace& s, const ToleranceProfile& tol = {});

double gap_distance(const Projection& p, const Projection& q);
double gap_distance(const Subspace& u, const Subspace& v, const ToleranceProfile& tol = {});

/// Turns an oblique projection Q into the orthogonal projection with the same
/// image: P = Q Q* (Q Q* + (I - Q*)(I - Q))^{-1}.
Projection orthogonalize_projection(const Matrix& q, const InnerProductSpace& ambient,
                                    const ToleranceProfile& tol = {});

/// Cosines of the principal angles between span(u) and span(v), descending.
Vector principal_cosines(const Matrix& u, const Matrix& v, const InnerProductSpace& ambient);

/// dim(span(u) ∩ span(v)): count of principal angles that vanish within
/// `tol.angle`.
Index intersection_dimension(const Matrix& u, const Matrix& v, const InnerProductSpace& ambient,
                             const ToleranceProfile& tol = {});

/// G-orthonormal basis of span(m), dropping directions below the rank
/// tolerance.
Matrix orthonormalize(const Matrix& m, const InnerProductSpace& ambient,
                      const ToleranceProfile& tol = {});

/// Basis of the gram-orthogonal complement of span(m).
Matrix orthogonal_complement(const Matrix& m, const InnerProductSpace& ambient,
                             const ToleranceProfile& tol = {});

using MatrixFamily = std::function<Matrix(double)>;

struct KernelPath {
  std::vector<double> samples;
  std::vector<Projection> projections;
  /// gap_distance between consecutive samples; size samples - 1.
  std::vector<double> consecutive_gaps;
};

/// Orthogonal projections onto ker A_t for a family of surjective m x dim
/// matrices. Right inverse M_t = G^{-1} A^T (A G^{-1} A^T)^{-1}, Q_t = I - M_t A_t,
/// P_t = orthogonalize_projection(Q_t).
KernelPath kernel_path(const MatrixFamily& family, const InnerProductSpace& ambient,
                       const std::vector<double>& samples, const ToleranceProfile& tol = {});

/// Row-major CSV dump of a projection, %.17g.
void write_projection_csv(std::ostream& out, const Projection& p);

}  // namespace sflow
