#include "sflow/hilbert_fem.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <Eigen/LU>

#include <algorithm>
#include <cmath>
#include <sstream>

namespace sflow {

// -------------------------------------------------------------------- Mesh

Mesh::Mesh(std::vector<double> nodes) : nodes_(std::move(nodes)) {
  if (nodes_.size() < 2) throw Error(ErrorCode::invalid_argument, "mesh needs at least one element");
  if (nodes_.front() != 0.0 || nodes_.back() != 1.0) {
    throw Error(ErrorCode::invalid_argument, "mesh must start at 0 and end at 1");
  }
  for (std::size_t i = 1; i < nodes_.size(); ++i) {
    if (!(nodes_[i] > nodes_[i - 1])) {
      throw Error(ErrorCode::invalid_argument, "mesh nodes must be strictly increasing");
    }
  }
}

Mesh Mesh::uniform(int elements) {
  if (elements < 1) throw Error(ErrorCode::invalid_argument, "mesh needs at least one element");
  std::vector<double> x(static_cast<std::size_t>(elements) + 1);
  for (int i = 0; i <= elements; ++i) x[static_cast<std::size_t>(i)] = double(i) / elements;
  x.back() = 1.0;
  return Mesh(std::move(x));
}

double Mesh::max_width() const {
  double w = 0.0;
  for (int e = 0; e < elements(); ++e) w = std::max(w, width(e));
  return w;
}

int Mesh::locate(double x) const {
  if (x <= 0.0) return 0;
  if (x >= 1.0) return elements() - 1;
  auto it = std::upper_bound(nodes_.begin(), nodes_.end(), x);
  return static_cast<int>(it - nodes_.begin()) - 1;
}

int Mesh::node_at(double x) const {
  const int e = locate(x);
  for (int i : {e, e + 1}) {
    if (i >= 0 && i <= elements() && std::abs(node(i) - x) <= 1e-14) return i;
  }
  return -1;
}

// ------------------------------------------------------------------- Space

namespace {

Matrix stiffness(const Mesh& mesh, int n) {
  const int N = mesh.elements();
  const Index d = static_cast<Index>(N - 1) * n;
  Matrix g = Matrix::Zero(d, d);
  for (int e = 0; e < N; ++e) {
    const double k = 1.0 / mesh.width(e);
    for (int c = 0; c < n; ++c) {
      const Index l = e >= 1 ? static_cast<Index>(e - 1) * n + c : -1;
      const Index r = e + 1 <= N - 1 ? static_cast<Index>(e) * n + c : -1;
      if (l >= 0) g(l, l) += k;
      if (r >= 0) g(r, r) += k;
      if (l >= 0 && r >= 0) {
        g(l, r) -= k;
        g(r, l) -= k;
      }
    }
  }
  return g;
}

}  // namespace

DiscreteSpace::DiscreteSpace(Mesh mesh, int n)
    : mesh_(std::move(mesh)), n_(n), inner_(Matrix::Identity(1, 1)) {
  if (n_ < 1) throw Error(ErrorCode::invalid_argument, "system dimension must be positive");
  if (mesh_.elements() < 2) {
    throw Error(ErrorCode::invalid_argument, "need at least two elements for interior dofs");
  }
  inner_ = InnerProductSpace(stiffness(mesh_, n_));
}

Index DiscreteSpace::dof(int node, int component) const {
  if (node <= 0 || node >= mesh_.elements()) return -1;
  return static_cast<Index>(node - 1) * n_ + component;
}

DiscreteSpace assemble_gram(const Mesh& mesh, int n) { return DiscreteSpace(mesh, n); }

Matrix DiscreteFunction::nodal_values() const {
  const int N = space.mesh().elements();
  const int n = space.n();
  Matrix v = Matrix::Zero(N + 1, n);
  for (int i = 1; i < N; ++i) {
    for (int c = 0; c < n; ++c) v(i, c) = coords(space.dof(i, c));
  }
  return v;
}

Vector DiscreteFunction::value(double x) const {
  const Mesh& m = space.mesh();
  const int e = m.locate(x);
  const double s = (x - m.node(e)) / m.width(e);
  const Matrix v = nodal_values();
  return ((1.0 - s) * v.row(e) + s * v.row(e + 1)).transpose();
}

DiscreteFunction interpolate(const DiscreteSpace& space,
                             const std::function<Vector(double)>& f) {
  DiscreteFunction u{space, Vector::Zero(space.dof_count())};
  for (int i = 1; i < space.mesh().elements(); ++i) {
    const Vector fx = f(space.mesh().node(i));
    for (int c = 0; c < space.n(); ++c) u.coords(space.dof(i, c)) = fx(c);
  }
  return u;
}

// -------------------------------------------------------------- Quadrature

const GaussRule& gauss3() {
  static const GaussRule rule = [] {
    const double r = 0.5 * std::sqrt(3.0 / 5.0);
    return GaussRule{{0.5 - r, 0.5, 0.5 + r}, {5.0 / 18.0, 8.0 / 18.0, 5.0 / 18.0}};
  }();
  return rule;
}

// ----------------------------------------------------------------- Problem

namespace {

bool all_finite(const Matrix& m) { return m.allFinite(); }

double rel_error(double err, double ref) { return err / std::max(ref, 1e-6); }

}  // namespace

void validate(const ProblemData& p, const DiscreteSpace& space) {
  auto fail = [](const std::string& what) {
    throw Error(ErrorCode::precondition_violated, what);
  };
  if (!p.A || !p.S || !p.g || !p.potential || !p.g_jacobian) fail("problem data is incomplete");
  if (p.n != space.n()) fail("problem dimension differs from the space dimension");
  const int n = p.n;
  const Mesh& mesh = space.mesh();
  const GaussRule& q = gauss3();
  const int stride = std::max(1, mesh.elements() / 16);
  for (int e = 0; e < mesh.elements(); ++e) {
    for (int k = 0; k < 3; ++k) {
      const double x = mesh.node(e) + q.points[k] * mesh.width(e);
      const Matrix a = p.A(x);
      if (a.rows() != n || a.cols() != n || !all_finite(a)) fail("A(x) is malformed");
      if ((a - a.transpose()).norm() > 1e-12 * std::max(1.0, a.norm())) fail("A(x) is not symmetric");
      if (!(std::abs(a.determinant()) > 1e-12)) fail("A(x) is not invertible");
      if (e % stride != 0 || k != 1) continue;

      const Matrix s = p.S(x);
      if (s.rows() != n || s.cols() != n || !all_finite(s)) fail("S(x) is malformed");
      if ((s - s.transpose()).norm() > 1e-12 * std::max(1.0, s.norm())) fail("S(x) is not symmetric");
      const Vector zero = Vector::Zero(n);
      if (p.g(x, zero).norm() != 0.0) fail("g(x, 0) must vanish");

      // S = dg/dxi(x, 0)
      const double eps0 = 1e-6;
      Matrix fd_s(n, n);
      for (int j = 0; j < n; ++j) {
        Vector dx = Vector::Zero(n);
        dx(j) = eps0;
        fd_s.col(j) = (p.g(x, dx) - p.g(x, -dx)) / (2.0 * eps0);
      }
      if (rel_error((fd_s - s).norm(), std::max(1.0, s.norm())) > 1e-6) fail("S(x) differs from dg/dxi(x, 0)");

      for (int sample = 0; sample < 2; ++sample) {
        Vector xi(n);
        for (int c = 0; c < n; ++c) xi(c) = (sample == 0 ? 0.3 : -0.7) * (1.0 + 0.25 * c);
        const Vector gx = p.g(x, xi);
        Vector fd_g(n);
        Matrix fd_j(n, n);
        for (int j = 0; j < n; ++j) {
          const double eps = 1e-5 * std::max(1.0, std::abs(xi(j)));
          Vector dx = Vector::Zero(n);
          dx(j) = eps;
          fd_g(j) = (p.potential(x, xi + dx) - p.potential(x, xi - dx)) / (2.0 * eps);
          fd_j.col(j) = (p.g(x, xi + dx) - p.g(x, xi - dx)) / (2.0 * eps);
        }
        if (rel_error((fd_g - gx).norm(), gx.norm()) > 1e-6) fail("grad potential differs from g");
        const Matrix jac = p.g_jacobian(x, xi);
        if (rel_error((fd_j - jac).norm(), jac.norm()) > 1e-6) fail("g_jacobian differs from dg/dxi");
      }
    }
  }
}

namespace presets {

namespace {

Vector cube(const Vector& xi) { return xi.array().cube().matrix(); }

}  // namespace

ProblemData identity(int n) {
  ProblemData p;
  p.n = n;
  p.A = [n](double) { return Matrix::Identity(n, n); };
  p.S = [n](double) { return Matrix::Zero(n, n); };
  p.g = [n](double, const Vector&) { return Vector::Zero(n); };
  p.potential = [](double, const Vector&) { return 0.0; };
  p.g_jacobian = [n](double, const Vector&) { return Matrix::Zero(n, n); };
  p.analytic = true;
  p.label = "identity";
  return p;
}

ProblemData shifted_laplacian(double c, int n) {
  ProblemData p;
  p.n = n;
  p.A = [n](double) { return Matrix::Identity(n, n); };
  p.S = [n, c](double) { return Matrix(-c * Matrix::Identity(n, n)); };
  p.g = [c](double, const Vector& xi) { return Vector(-c * xi); };
  p.potential = [c](double, const Vector& xi) { return -0.5 * c * xi.squaredNorm(); };
  p.g_jacobian = [n, c](double, const Vector&) { return Matrix(-c * Matrix::Identity(n, n)); };
  p.analytic = true;
  p.label = "shifted_laplacian";
  return p;
}

ProblemData cubic(double c, int n) {
  ProblemData p = shifted_laplacian(c, n);
  p.g = [c](double, const Vector& xi) { return Vector(-c * xi + cube(xi)); };
  p.potential = [c](double, const Vector& xi) {
    return -0.5 * c * xi.squaredNorm() + 0.25 * xi.array().pow(4).sum();
  };
  p.g_jacobian = [n, c](double, const Vector& xi) {
    Matrix j = -c * Matrix::Identity(n, n);
    j.diagonal() += 3.0 * xi.array().square().matrix();
    return j;
  };
  p.label = "cubic";
  return p;
}

namespace {

ProblemData from_coefficients(int n, std::function<Matrix(double)> a, std::function<Matrix(double)> s,
                              double cubic_coeff) {
  ProblemData p;
  p.n = n;
  p.A = a;
  p.S = s;
  p.g = [s, cubic_coeff](double x, const Vector& xi) {
    return Vector(s(x) * xi + cubic_coeff * cube(xi));
  };
  p.potential = [s, cubic_coeff](double x, const Vector& xi) {
    return 0.5 * xi.dot(s(x) * xi) + 0.25 * cubic_coeff * xi.array().pow(4).sum();
  };
  p.g_jacobian = [s, cubic_coeff](double x, const Vector& xi) {
    Matrix j = s(x);
    j.diagonal() += 3.0 * cubic_coeff * xi.array().square().matrix();
    return j;
  };
  return p;
}

}  // namespace

ProblemData polynomial(std::vector<Matrix> a_coeffs, std::vector<Matrix> s_coeffs, double cubic) {
  if (a_coeffs.empty()) throw Error(ErrorCode::invalid_argument, "A needs at least one coefficient");
  const int n = static_cast<int>(a_coeffs.front().rows());
  if (s_coeffs.empty()) s_coeffs.push_back(Matrix::Zero(n, n));
  for (const auto* list : {&a_coeffs, &s_coeffs}) {
    for (const Matrix& m : *list) {
      if (m.rows() != n || m.cols() != n) {
        throw Error(ErrorCode::invalid_argument, "polynomial coefficients must be n x n");
      }
    }
  }
  auto horner = [](const std::vector<Matrix>& c) {
    return [c](double x) {
      Matrix v = c.back();
      for (std::size_t k = c.size() - 1; k-- > 0;) v = (v * x + c[k]).eval();
      return v;
    };
  };
  ProblemData p = from_coefficients(n, horner(a_coeffs), horner(s_coeffs), cubic);
  p.analytic = true;
  p.label = "polynomial";
  return p;
}

ProblemData tabulated(std::vector<double> x, std::vector<Matrix> a_samples,
                      std::vector<Matrix> s_samples, double cubic) {
  if (x.size() < 2 || a_samples.size() != x.size() || s_samples.size() != x.size()) {
    throw Error(ErrorCode::invalid_argument, "tabulated data needs matching samples (at least 2)");
  }
  if (x.front() > 0.0 || x.back() < 1.0) {
    throw Error(ErrorCode::invalid_argument, "tabulated samples must cover [0, 1]");
  }
  for (std::size_t i = 1; i < x.size(); ++i) {
    if (!(x[i] > x[i - 1])) throw Error(ErrorCode::invalid_argument, "sample points must increase");
  }
  const int n = static_cast<int>(a_samples.front().rows());
  auto lerp = [x](std::vector<Matrix> v) {
    return [x, v](double t) {
      auto it = std::upper_bound(x.begin(), x.end(), t);
      std::size_t i = static_cast<std::size_t>(std::clamp<long>(it - x.begin(), 1, long(x.size()) - 1));
      const double s = (t - x[i - 1]) / (x[i] - x[i - 1]);
      return Matrix((1.0 - s) * v[i - 1] + s * v[i]);
    };
  };
  ProblemData p = from_coefficients(n, lerp(std::move(a_samples)), lerp(std::move(s_samples)), cubic);
  p.analytic = false;
  p.label = "tabulated";
  return p;
}

}  // namespace presets

// ---------------------------------------------------------------- Assembly

Matrix assemble_hessian(const DiscreteSpace& space, const ProblemData& problem) {
  const Mesh& mesh = space.mesh();
  const int n = space.n();
  const int N = mesh.elements();
  const Index d = space.dof_count();
  const GaussRule& q = gauss3();
  Matrix b = Matrix::Zero(d, d);
  for (int e = 0; e < N; ++e) {
    const double h = mesh.width(e);
    Matrix a_int = Matrix::Zero(n, n);
    // S moments against phi_l phi_l, phi_l phi_r, phi_r phi_r.
    Matrix s_ll = Matrix::Zero(n, n), s_lr = Matrix::Zero(n, n), s_rr = Matrix::Zero(n, n);
    for (int k = 0; k < 3; ++k) {
      const double xi = q.points[k];
      const double x = mesh.node(e) + xi * h;
      const double w = q.weights[k] * h;
      const Matrix a = problem.A(x);
      const Matrix s = problem.S(x);
      if (!a.allFinite() || !s.allFinite()) {
        std::ostringstream msg;
        msg << "non-finite coefficient at x = " << x;
        throw Error(ErrorCode::quadrature_failure, msg.str());
      }
      a_int += w * a;
      s_ll += w * (1.0 - xi) * (1.0 - xi) * s;
      s_lr += w * (1.0 - xi) * xi * s;
      s_rr += w * xi * xi * s;
    }
    const double k2 = 1.0 / (h * h);
    const int nodes[2] = {e, e + 1};
    for (int p = 0; p < 2; ++p) {
      for (int r = 0; r < 2; ++r) {
        const Index row0 = space.dof(nodes[p], 0);
        const Index col0 = space.dof(nodes[r], 0);
        if (row0 < 0 || col0 < 0) continue;
        const double sign = (p == r) ? 1.0 : -1.0;
        const Matrix& sm = (p == 0 && r == 0) ? s_ll : (p == 1 && r == 1) ? s_rr : s_lr;
        b.block(row0, col0, n, n) += sign * k2 * a_int + sm;
      }
    }
  }
  return 0.5 * (b + b.transpose());
}

SymmetricOperator riesz_operator(const DiscreteSpace& space, const Matrix& hessian) {
  return SymmetricOperator(space.inner(), space.inner().solve(hessian));
}

namespace {

DiscreteFunction combine_T(const DiscreteSpace& space, const std::vector<Vector>& f1,
                           const std::vector<Vector>& m0, const std::vector<Vector>& m1) {
  // f1[i] = \int_0^{x_i} A u';  m0[i] = \int_0^{x_i} S u;  m1[i] = \int_0^{x_i} tau S u.
  const int N = space.mesh().elements();
  const int n = space.n();
  auto f2 = [&](int i) {
    const double x = space.mesh().node(i);
    return Vector(x * m0[i] - m1[i]);
  };
  const Vector f1_end = f1[N];
  const Vector f2_end = f2(N);
  DiscreteFunction out{space, Vector::Zero(space.dof_count())};
  for (int i = 1; i < N; ++i) {
    const double x = space.mesh().node(i);
    const Vector v = f1[i] - x * f1_end - f2(i) + x * f2_end;
    for (int c = 0; c < n; ++c) out.coords(space.dof(i, c)) = v(c);
  }
  return out;
}

}  // namespace

DiscreteFunction explicit_T_apply(const DiscreteSpace& space, const ProblemData& problem,
                                  const DiscreteFunction& u) {
  const Mesh& mesh = space.mesh();
  const int N = mesh.elements();
  const int n = space.n();
  const GaussRule& q = gauss3();
  const Matrix v = u.nodal_values();
  std::vector<Vector> f1(N + 1, Vector::Zero(n)), m0(N + 1, Vector::Zero(n)),
      m1(N + 1, Vector::Zero(n));
  for (int e = 0; e < N; ++e) {
    const double h = mesh.width(e);
    const Vector ul = v.row(e).transpose();
    const Vector ur = v.row(e + 1).transpose();
    const Vector du = (ur - ul) / h;
    Vector a_part = Vector::Zero(n), s0 = Vector::Zero(n), s1 = Vector::Zero(n);
    for (int k = 0; k < 3; ++k) {
      const double xi = q.points[k];
      const double x = mesh.node(e) + xi * h;
      const double w = q.weights[k] * h;
      a_part += w * (problem.A(x) * du);
      const Vector su = problem.S(x) * ((1.0 - xi) * ul + xi * ur);
      s0 += w * su;
      s1 += w * x * su;
    }
    f1[e + 1] = f1[e] + a_part;
    m0[e + 1] = m0[e] + s0;
    m1[e + 1] = m1[e] + s1;
  }
  return combine_T(space, f1, m0, m1);
}

DiscreteFunction explicit_T_apply(const DiscreteSpace& space, const ProblemData& problem,
                                  const std::function<Vector(double)>& u,
                                  const std::function<Vector(double)>& du, int subdivisions) {
  const Mesh& mesh = space.mesh();
  const int N = mesh.elements();
  const int n = space.n();
  const GaussRule& q = gauss3();
  const int panels = std::max(1, subdivisions);
  std::vector<Vector> f1(N + 1, Vector::Zero(n)), m0(N + 1, Vector::Zero(n)),
      m1(N + 1, Vector::Zero(n));
  for (int e = 0; e < N; ++e) {
    const double h = mesh.width(e) / panels;
    Vector a_part = Vector::Zero(n), s0 = Vector::Zero(n), s1 = Vector::Zero(n);
    for (int p = 0; p < panels; ++p) {
      for (int k = 0; k < 3; ++k) {
        const double x = mesh.node(e) + (p + q.points[k]) * h;
        const double w = q.weights[k] * h;
        a_part += w * (problem.A(x) * du(x));
        const Vector su = problem.S(x) * u(x);
        s0 += w * su;
        s1 += w * x * su;
      }
    }
    f1[e + 1] = f1[e] + a_part;
    m0[e + 1] = m0[e] + s0;
    m1[e + 1] = m1[e] + s1;
  }
  return combine_T(space, f1, m0, m1);
}

// ------------------------------------------------------- Evaluation / H_t

namespace {

struct Bracket {
  int left;   // node index
  int right;  // node index; == left when t is a node
  double wl;  // weight at left
  double wr;  // weight at right
};

Bracket bracket_of(const DiscreteSpace& space, double t) {
  if (!(t > 0.0 && t < 1.0)) {
    std::ostringstream msg;
    msg << "evaluation point t = " << t << " is not in (0, 1)";
    throw Error(ErrorCode::out_of_interval, msg.str());
  }
  const Mesh& mesh = space.mesh();
  const int at = mesh.node_at(t);
  if (at >= 0) return {at, at, 1.0, 0.0};
  const int e = mesh.locate(t);
  const double s = (t - mesh.node(e)) / mesh.width(e);
  return {e, e + 1, 1.0 - s, s};
}

}  // namespace

Matrix evaluation_map(const DiscreteSpace& space, double t) {
  const Bracket br = bracket_of(space, t);
  const int n = space.n();
  Matrix e = Matrix::Zero(n, space.dof_count());
  for (int c = 0; c < n; ++c) {
    const Index l = space.dof(br.left, c);
    if (l >= 0) e(c, l) += br.wl;
    if (br.right != br.left) {
      const Index r = space.dof(br.right, c);
      if (r >= 0) e(c, r) += br.wr;
    }
  }
  return e;
}

double dual_norm(const DiscreteSpace& space, const Matrix& functionals) {
  const Matrix small = functionals * space.inner().solve(functionals.transpose());
  Eigen::SelfAdjointEigenSolver<Matrix> eig(0.5 * (small + small.transpose()), Eigen::EigenvaluesOnly);
  return std::sqrt(std::max(0.0, eig.eigenvalues().maxCoeff()));
}

Matrix constrained_basis(const DiscreteSpace& space, double t) {
  const Bracket br = bracket_of(space, t);
  const int n = space.n();
  const int N = space.mesh().elements();
  const bool coupled = br.right != br.left && br.left >= 1 && br.right <= N - 1;
  // Nodes whose dofs are dropped from the nodal part of the basis.
  int drop_a = -1, drop_b = -1;
  if (br.right == br.left) {
    drop_a = br.left;
  } else if (coupled) {
    drop_a = br.left;
    drop_b = br.right;
  } else {
    // One bracketing node is on the boundary; the constraint pins the other.
    drop_a = br.left >= 1 ? br.left : br.right;
  }
  const Index d = space.dof_count();
  Matrix basis = Matrix::Zero(d, d - n);
  Index col = 0;
  for (int i = 1; i < N; ++i) {
    if (i == drop_a && coupled) {
      for (int c = 0; c < n; ++c) {
        basis(space.dof(br.left, c), col) = br.wr;
        basis(space.dof(br.right, c), col) = -br.wl;
        ++col;
      }
      continue;
    }
    if (i == drop_a || i == drop_b) continue;
    for (int c = 0; c < n; ++c) basis(space.dof(i, c), col++) = 1.0;
  }
  return basis;
}

Subspace constrained_subspace(const DiscreteSpace& space, double t) {
  return Subspace::structural(space.inner(), constrained_basis(space, t));
}

Cutoff smoothstep_cutoff(double lo, double hi) {
  if (!(lo > 0.0 && lo <= hi && hi < 1.0)) {
    throw Error(ErrorCode::bad_cutoff, "cutoff plateau must satisfy 0 < lo <= hi < 1");
  }
  return [lo, hi](double x) {
    auto step = [](double s) { return s * s * (3.0 - 2.0 * s); };
    if (x <= 0.0 || x >= 1.0) return 0.0;
    if (x < lo) return step(x / lo);
    if (x > hi) return step((1.0 - x) / (1.0 - hi));
    return 1.0;
  };
}

Projection chi_projection(const DiscreteSpace& space, double t, const Cutoff& chi,
                          const ToleranceProfile& tol) {
  if (std::abs(chi(0.0)) > 1e-14 || std::abs(chi(1.0)) > 1e-14) {
    throw Error(ErrorCode::bad_cutoff, "cutoff must vanish at 0 and 1");
  }
  const Matrix e = evaluation_map(space, t);
  const int n = space.n();
  const Index d = space.dof_count();
  Matrix x = Matrix::Zero(d, n);
  for (int i = 1; i < space.mesh().elements(); ++i) {
    const double v = chi(space.mesh().node(i));
    if (!(v >= 0.0 && v <= 1.0)) throw Error(ErrorCode::bad_cutoff, "cutoff must take values in [0, 1]");
    for (int c = 0; c < n; ++c) x(space.dof(i, c), c) = v;
  }
  if ((e * x - Matrix::Identity(n, n)).norm() > 1e-12) {
    std::ostringstream msg;
    msg << "cutoff is not 1 at the nodes carrying u(" << t << ")";
    throw Error(ErrorCode::bad_cutoff, msg.str());
  }
  const Matrix q = Matrix::Identity(d, d) - x * e;
  return orthogonalize_projection(q, space.inner(), tol);
}

ProjectionFamily direct_projector(const DiscreteSpace& space, const ToleranceProfile& tol) {
  return [space, tol](double t) {
    return orthogonal_projection(constrained_subspace(space, t), tol);
  };
}

ProjectionFamily chi_projector(const DiscreteSpace& space, Cutoff chi, const ToleranceProfile& tol) {
  return [space, chi = std::move(chi), tol](double t) { return chi_projection(space, t, chi, tol); };
}

ProjectionFamily complement_projector(const DiscreteSpace& space, const ToleranceProfile& tol) {
  return [space, tol](double t) {
    const Matrix e = evaluation_map(space, t);
    const Matrix z = space.inner().solve(e.transpose());
    const Matrix small = e * z;
    const Matrix r = z * Eigen::LDLT<Matrix>(0.5 * (small + small.transpose())).solve(e);
    const Index d = space.dof_count();
    return Projection(space.inner(), Matrix::Identity(d, d) - r, tol);
  };
}

ProjectionFamily kernel_projector(const DiscreteSpace& space, const ToleranceProfile& tol) {
  return [space, tol](double t) {
    auto family = [&space](double s) { return evaluation_map(space, s); };
    return std::move(kernel_path(family, space.inner(), {t}, tol).projections.front());
  };
}

OperatorPath build_L_path(const DiscreteSpace& space, const SymmetricOperator& riesz,
                          ProjectionFamily projector, Interval interval) {
  if (!riesz.ambient().same_space(space.inner())) {
    throw Error(ErrorCode::ambient_mismatch, "operator does not act on the discrete space");
  }
  OperatorPath path;
  path.interval = interval;
  path.label = "L_t = P_t T P_t + (I - P_t)";
  path.evaluate = [inner = space.inner(), t_op = riesz.matrix(),
                   projector = std::move(projector)](double t) {
    const Projection p = projector(t);
    const Matrix& pm = p.matrix();
    const Index d = pm.rows();
    Matrix l = pm * t_op * pm;
    l += Matrix::Identity(d, d) - pm;
    return SymmetricOperator(inner, std::move(l));
  };
  return path;
}

}  // namespace sflow
