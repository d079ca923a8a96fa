#include "sflow/grassmann.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <Eigen/LU>
#include <Eigen/SVD>

#include <cmath>
#include <cstdio>
#include <mutex>
#include <ostream>

namespace sflow {

struct InnerProductSpace::State {
  Matrix gram;
  bool cholesky = true;
  Eigen::LLT<Matrix> llt;
  // Fallback factor G = W W^T with W = V D^{1/2}.
  Matrix w;
  Matrix w_inv;

  mutable std::once_flag roots_once;
  mutable Matrix sqrt_gram;
  mutable Matrix inv_sqrt_gram;

  void build_roots() const {
    std::call_once(roots_once, [this] {
      Eigen::SelfAdjointEigenSolver<Matrix> eig(gram);
      const Vector d = eig.eigenvalues().cwiseMax(0.0).cwiseSqrt();
      sqrt_gram = eig.eigenvectors() * d.asDiagonal() * eig.eigenvectors().transpose();
      inv_sqrt_gram =
          eig.eigenvectors() * d.cwiseInverse().asDiagonal() * eig.eigenvectors().transpose();
    });
  }
};

InnerProductSpace::InnerProductSpace(Matrix gram) {
  if (gram.rows() != gram.cols()) {
    throw Error(ErrorCode::invalid_argument, "gram matrix must be square");
  }
  const double scale = std::max(1.0, gram.norm());
  if ((gram - gram.transpose()).norm() > 1e-12 * scale) {
    throw Error(ErrorCode::invalid_argument, "gram matrix is not symmetric");
  }
  auto state = std::make_shared<State>();
  state->gram = 0.5 * (gram + gram.transpose());
  if (state->gram.rows() > 0) {
    state->llt.compute(state->gram);
    if (state->llt.info() != Eigen::Success) {
      Eigen::SelfAdjointEigenSolver<Matrix> eig(state->gram);
      if (eig.eigenvalues().minCoeff() <= 0.0) {
        throw Error(ErrorCode::invalid_argument, "gram matrix is not positive definite");
      }
      state->cholesky = false;
      const Vector root = eig.eigenvalues().cwiseSqrt();
      state->w = eig.eigenvectors() * root.asDiagonal();
      state->w_inv = root.cwiseInverse().asDiagonal() * eig.eigenvectors().transpose();
    }
  }
  state_ = std::move(state);
}

InnerProductSpace InnerProductSpace::euclidean(Index dim) {
  return InnerProductSpace(Matrix::Identity(dim, dim));
}

Index InnerProductSpace::dim() const { return state_->gram.rows(); }
const Matrix& InnerProductSpace::gram() const { return state_->gram; }
bool InnerProductSpace::used_cholesky() const { return state_->cholesky; }

const Matrix& InnerProductSpace::sqrt_gram() const {
  state_->build_roots();
  return state_->sqrt_gram;
}

const Matrix& InnerProductSpace::inv_sqrt_gram() const {
  state_->build_roots();
  return state_->inv_sqrt_gram;
}

Matrix InnerProductSpace::solve(const Matrix& rhs) const {
  if (dim() == 0) return rhs;
  if (state_->cholesky) return state_->llt.solve(rhs);
  return state_->w_inv.transpose() * (state_->w_inv * rhs);
}

Matrix InnerProductSpace::to_orthonormal(const Matrix& x) const {
  if (dim() == 0) return x;
  if (state_->cholesky) return state_->llt.matrixU() * x;
  return state_->w.transpose() * x;
}

Matrix InnerProductSpace::from_orthonormal(const Matrix& y) const {
  if (dim() == 0) return y;
  if (state_->cholesky) return state_->llt.matrixU().solve(y);
  return state_->w_inv.transpose() * y;
}

Matrix InnerProductSpace::similarity(const Matrix& m) const {
  // W^T M W^{-T} = (W^{-1} (W^T M)^T)^T
  const Matrix left = to_orthonormal(m);
  Matrix right;
  if (dim() == 0) return left;
  if (state_->cholesky) {
    right = state_->llt.matrixL().solve(left.transpose());
  } else {
    right = state_->w_inv * left.transpose();
  }
  return right.transpose();
}

Matrix InnerProductSpace::adjoint(const Matrix& m) const {
  return solve(m.transpose() * gram());
}

double InnerProductSpace::inner(const Vector& x, const Vector& y) const {
  return x.dot(gram() * y);
}

double InnerProductSpace::norm(const Vector& x) const {
  return std::sqrt(std::max(0.0, inner(x, x)));
}

double InnerProductSpace::operator_norm(const Matrix& m) const {
  if (m.size() == 0) return 0.0;
  const Matrix rep = sqrt_gram() * m * inv_sqrt_gram();
  Eigen::BDCSVD<Matrix> svd(rep);
  return svd.singularValues()(0);
}

double InnerProductSpace::selfadjoint_norm(const Matrix& m) const {
  if (m.size() == 0) return 0.0;
  Matrix rep = sqrt_gram() * m * inv_sqrt_gram();
  rep = 0.5 * (rep + rep.transpose()).eval();
  Eigen::SelfAdjointEigenSolver<Matrix> eig(rep, Eigen::EigenvaluesOnly);
  return eig.eigenvalues().cwiseAbs().maxCoeff();
}

double InnerProductSpace::selfadjoint_defect(const Matrix& m) const {
  const Matrix gm = gram() * m;
  return (gm - gm.transpose()).norm();
}

bool InnerProductSpace::same_space(const InnerProductSpace& other) const {
  if (state_ == other.state_) return true;
  if (dim() != other.dim()) return false;
  return (gram() - other.gram()).norm() <= 1e-12 * std::max(1.0, gram().norm());
}

InnerProductSpace direct_sum(const InnerProductSpace& x, const InnerProductSpace& y) {
  Matrix g = Matrix::Zero(x.dim() + y.dim(), x.dim() + y.dim());
  g.topLeftCorner(x.dim(), x.dim()) = x.gram();
  g.bottomRightCorner(y.dim(), y.dim()) = y.gram();
  return InnerProductSpace(std::move(g));
}

// ---------------------------------------------------------------- Subspace

Subspace::Subspace(InnerProductSpace ambient, Matrix basis, const ToleranceProfile& tol)
    : ambient_(std::move(ambient)), basis_(std::move(basis)) {
  if (basis_.rows() != ambient_.dim()) {
    throw Error(ErrorCode::ambient_mismatch, "basis rows do not match ambient dimension");
  }
  if (basis_.cols() > ambient_.dim()) {
    throw Error(ErrorCode::rank_deficiency, "more basis vectors than ambient dimension");
  }
  if (basis_.cols() == 0) return;
  Eigen::BDCSVD<Matrix> svd(ambient_.to_orthonormal(basis_));
  const Vector& s = svd.singularValues();
  if (!(s(s.size() - 1) > tol.rank * s(0))) {
    throw Error(ErrorCode::rank_deficiency, "basis does not have full column rank");
  }
}

Subspace::Subspace(Unchecked, InnerProductSpace ambient, Matrix basis)
    : ambient_(std::move(ambient)), basis_(std::move(basis)) {}

Subspace Subspace::structural(InnerProductSpace ambient, Matrix basis) {
  if (basis.rows() != ambient.dim()) {
    throw Error(ErrorCode::ambient_mismatch, "basis rows do not match ambient dimension");
  }
  return Subspace(Unchecked{}, std::move(ambient), std::move(basis));
}

Matrix Subspace::orthonormal_basis() const {
  if (basis_.cols() == 0) return basis_;
  const Matrix small = basis_.transpose() * ambient_.gram() * basis_;
  Eigen::LLT<Matrix> llt(0.5 * (small + small.transpose()));
  if (llt.info() != Eigen::Success) {
    return orthonormalize(basis_, ambient_);
  }
  // B L^{-T}
  return llt.matrixL().solve(basis_.transpose()).transpose();
}

// -------------------------------------------------------------- Projection

namespace {

double idempotency_defect(const Matrix& p) { return (p * p - p).norm(); }

}  // namespace

Projection::Projection(InnerProductSpace ambient, Matrix matrix, const ToleranceProfile& tol)
    : ambient_(std::move(ambient)), matrix_(std::move(matrix)) {
  if (matrix_.rows() != ambient_.dim() || matrix_.cols() != ambient_.dim()) {
    throw Error(ErrorCode::ambient_mismatch, "projection size does not match ambient space");
  }
  const double pn = matrix_.norm();
  if (idempotency_defect(matrix_) > tol.projection * (1.0 + pn)) {
    throw Error(ErrorCode::not_a_projection, "matrix is not idempotent");
  }
  if (ambient_.selfadjoint_defect(matrix_) > tol.projection * ambient_.gram().norm() * (1.0 + pn)) {
    throw Error(ErrorCode::not_a_projection, "matrix is not gram-selfadjoint");
  }
}

Projection::Projection(Unchecked, InnerProductSpace ambient, Matrix matrix)
    : ambient_(std::move(ambient)), matrix_(std::move(matrix)) {}

Index Projection::rank() const { return static_cast<Index>(std::llround(matrix_.trace())); }

Projection Projection::complement() const {
  const Index d = ambient_.dim();
  return Projection(Unchecked{}, ambient_, Matrix::Identity(d, d) - matrix_);
}

double Projection::idempotency_residual() const { return idempotency_defect(matrix_); }

double Projection::selfadjoint_residual() const { return ambient_.selfadjoint_defect(matrix_); }

Projection orthogonal_projection(const Subspace& s, const ToleranceProfile& tol) {
  const InnerProductSpace& amb = s.ambient();
  const Index d = amb.dim();
  if (s.dim() == 0) return Projection(amb, Matrix::Zero(d, d), tol);
  const Matrix& b = s.basis();
  const Matrix gb = amb.gram() * b;
  const Matrix small = b.transpose() * gb;
  Eigen::LDLT<Matrix> ldlt(0.5 * (small + small.transpose()));
  if (ldlt.info() != Eigen::Success || !ldlt.isPositive()) {
    throw Error(ErrorCode::rank_deficiency, "B^T G B is not positive definite");
  }
  Matrix p = b * ldlt.solve(gb.transpose());
  return Projection(amb, std::move(p), tol);
}

double gap_distance(const Projection& p, const Projection& q) {
  if (!p.ambient().same_space(q.ambient())) {
    throw Error(ErrorCode::ambient_mismatch, "projections live in different spaces");
  }
  return p.ambient().selfadjoint_norm(p.matrix() - q.matrix());
}

double gap_distance(const Subspace& u, const Subspace& v, const ToleranceProfile& tol) {
  if (!u.ambient().same_space(v.ambient())) {
    throw Error(ErrorCode::ambient_mismatch, "subspaces live in different spaces");
  }
  return gap_distance(orthogonal_projection(u, tol), orthogonal_projection(v, tol));
}

Projection orthogonalize_projection(const Matrix& q, const InnerProductSpace& ambient,
                                    const ToleranceProfile& tol) {
  const Index d = ambient.dim();
  if (q.rows() != d || q.cols() != d) {
    throw Error(ErrorCode::ambient_mismatch, "projection size does not match ambient space");
  }
  if (d == 0) return Projection(ambient, q, tol);
  if (idempotency_defect(q) > tol.projection * (1.0 + q.norm())) {
    throw Error(ErrorCode::not_a_projection, "input is not idempotent");
  }
  const Matrix id = Matrix::Identity(d, d);
  const Matrix qs = ambient.adjoint(q);
  const Matrix qqs = q * qs;
  const Matrix inner = qqs + (id - qs) * (id - q);
  // P = qqs * inner^{-1}  <=>  inner^T P^T = qqs^T
  Eigen::PartialPivLU<Matrix> lu(inner.transpose());
  if (!(lu.rcond() > tol.rank)) {
    throw Error(ErrorCode::degenerate_input, "QQ* + (I-Q*)(I-Q) is numerically singular");
  }
  Matrix p = lu.solve(qqs.transpose()).transpose();
  // Remove the non-selfadjoint round-off part.
  p = 0.5 * (p + ambient.adjoint(p));
  return Projection(ambient, std::move(p), tol);
}

Matrix orthonormalize(const Matrix& m, const InnerProductSpace& ambient,
                      const ToleranceProfile& tol) {
  if (m.rows() != ambient.dim()) {
    throw Error(ErrorCode::ambient_mismatch, "vectors do not match ambient dimension");
  }
  if (m.cols() == 0) return m;
  const Matrix y = ambient.to_orthonormal(m);
  Eigen::BDCSVD<Matrix> svd(y, Eigen::ComputeThinU);
  const Vector& s = svd.singularValues();
  Index r = 0;
  while (r < s.size() && s(r) > tol.rank * s(0) && s(r) > 0.0) ++r;
  return ambient.from_orthonormal(svd.matrixU().leftCols(r));
}

Matrix orthogonal_complement(const Matrix& m, const InnerProductSpace& ambient,
                             const ToleranceProfile& tol) {
  const Index d = ambient.dim();
  if (m.rows() != d) {
    throw Error(ErrorCode::ambient_mismatch, "vectors do not match ambient dimension");
  }
  if (m.cols() == 0) return ambient.from_orthonormal(Matrix::Identity(d, d));
  const Matrix y = ambient.to_orthonormal(m);
  Eigen::BDCSVD<Matrix> svd(y, Eigen::ComputeFullU);
  const Vector& s = svd.singularValues();
  Index r = 0;
  while (r < s.size() && s(r) > tol.rank * s(0) && s(r) > 0.0) ++r;
  return ambient.from_orthonormal(svd.matrixU().rightCols(d - r));
}

Vector principal_cosines(const Matrix& u, const Matrix& v, const InnerProductSpace& ambient) {
  const Matrix qu = orthonormalize(u, ambient);
  const Matrix qv = orthonormalize(v, ambient);
  if (qu.cols() == 0 || qv.cols() == 0) return Vector(0);
  const Matrix cross = qu.transpose() * ambient.gram() * qv;
  Eigen::BDCSVD<Matrix> svd(cross);
  return svd.singularValues().cwiseMin(1.0);
}

Index intersection_dimension(const Matrix& u, const Matrix& v, const InnerProductSpace& ambient,
                             const ToleranceProfile& tol) {
  const Vector c = principal_cosines(u, v, ambient);
  Index count = 0;
  for (Index i = 0; i < c.size(); ++i) {
    if (c(i) > 1.0 - tol.angle) ++count;
  }
  return count;
}

KernelPath kernel_path(const MatrixFamily& family, const InnerProductSpace& ambient,
                       const std::vector<double>& samples, const ToleranceProfile& tol) {
  KernelPath out;
  out.samples = samples;
  out.projections.reserve(samples.size());
  const Index d = ambient.dim();
  const Matrix id = Matrix::Identity(d, d);
  for (double t : samples) {
    const Matrix a = family(t);
    if (a.cols() != d) {
      throw Error(ErrorCode::ambient_mismatch, "family(t) column count differs from ambient dim");
    }
    const Index m = a.rows();
    if (m >= d) {
      throw Error(ErrorCode::surjectivity_failure,
                  "family(t) must have fewer rows than the ambient dimension");
    }
    // A in orthonormal coordinates: A W^{-T}.
    const Matrix aw = ambient.from_orthonormal(a.transpose()).transpose();
    if (m > 0) {
      Eigen::JacobiSVD<Matrix> svd(aw);
      const Vector& s = svd.singularValues();
      if (!(s(m - 1) > tol.rank * s(0))) {
        throw Error(ErrorCode::surjectivity_failure,
                    "family(t) is not surjective at t = " + std::to_string(t));
      }
    }
    // Gram-weighted right inverse M = G^{-1} A^T (A G^{-1} A^T)^{-1}.
    const Matrix ginv_at = ambient.solve(a.transpose());
    const Matrix small = a * ginv_at;
    const Matrix right_inverse = Eigen::LDLT<Matrix>(0.5 * (small + small.transpose()))
                                     .solve(ginv_at.transpose())
                                     .transpose();
    const Matrix q = id - right_inverse * a;
    out.projections.push_back(orthogonalize_projection(q, ambient, tol));
  }
  for (std::size_t i = 1; i < out.projections.size(); ++i) {
    out.consecutive_gaps.push_back(gap_distance(out.projections[i - 1], out.projections[i]));
  }
  return out;
}

void write_projection_csv(std::ostream& out, const Projection& p) {
  const Matrix& m = p.matrix();
  char buf[32];
  for (Index i = 0; i < m.rows(); ++i) {
    for (Index j = 0; j < m.cols(); ++j) {
      std::snprintf(buf, sizeof buf, "%.17g", m(i, j));
      if (j > 0) out << ',';
      out << buf;
    }
    out << '\n';
  }
}

}  // namespace sflow
