#include "sflow/ode_verify.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <future>
#include <sstream>

namespace sflow {

const char* to_string(PointStatus s) {
  switch (s) {
    case PointStatus::converged: return "converged";
    case PointStatus::trivial: return "trivial";
    case PointStatus::diverged: return "diverged";
  }
  return "unknown";
}

const char* to_string(Side s) { return s == Side::plus ? "plus" : "minus"; }

const char* to_string(VerifyStatus s) {
  switch (s) {
    case VerifyStatus::verified: return "verified";
    case VerifyStatus::all_trivial: return "all_trivial";
    case VerifyStatus::unverified: return "unverified";
  }
  return "unknown";
}

// -------------------------------------------------------------- Functional

namespace {

/// Visits each quadrature point with the local nodal data of its element.
template <class F>
void for_each_quadrature(const DiscreteSpace& space, const Vector& u, F&& f) {
  const Mesh& mesh = space.mesh();
  const int n = space.n();
  const GaussRule& q = gauss3();
  Vector ul(n), ur(n);
  for (int e = 0; e < mesh.elements(); ++e) {
    const double h = mesh.width(e);
    for (int c = 0; c < n; ++c) {
      const Index l = space.dof(e, c);
      const Index r = space.dof(e + 1, c);
      ul(c) = l >= 0 ? u(l) : 0.0;
      ur(c) = r >= 0 ? u(r) : 0.0;
    }
    const Vector du = (ur - ul) / h;
    for (int k = 0; k < 3; ++k) {
      const double s = q.points[k];
      const double x = mesh.node(e) + s * h;
      const Vector val = (1.0 - s) * ul + s * ur;
      f(e, s, x, q.weights[k] * h, val, du);
    }
  }
}

void check_finite(double v, double x) {
  if (!std::isfinite(v)) {
    std::ostringstream msg;
    msg << "non-finite potential at x = " << x;
    throw Error(ErrorCode::quadrature_failure, msg.str());
  }
}

}  // namespace

double functional_value(const DiscreteSpace& space, const ProblemData& problem, const Vector& u) {
  double total = 0.0;
  for_each_quadrature(space, u, [&](int, double, double x, double w, const Vector& val,
                                     const Vector& du) {
    const double g = problem.potential(x, val);
    check_finite(g, x);
    total += w * (0.5 * du.dot(problem.A(x) * du) + g);
  });
  return total;
}

Vector gradient(const DiscreteSpace& space, const ProblemData& problem, const Vector& u) {
  const int n = space.n();
  Vector out = Vector::Zero(space.dof_count());
  for_each_quadrature(space, u, [&](int e, double s, double x, double w, const Vector& val,
                                     const Vector& du) {
    const double h = space.mesh().width(e);
    const Vector flux = problem.A(x) * du;
    const Vector gx = problem.g(x, val);
    for (int c = 0; c < n; ++c) {
      check_finite(gx(c), x);
      const Index l = space.dof(e, c);
      const Index r = space.dof(e + 1, c);
      if (l >= 0) out(l) += w * (-flux(c) / h + gx(c) * (1.0 - s));
      if (r >= 0) out(r) += w * (flux(c) / h + gx(c) * s);
    }
  });
  return out;
}

Matrix tangent(const DiscreteSpace& space, const ProblemData& problem, const Vector& u) {
  const int n = space.n();
  Matrix out = Matrix::Zero(space.dof_count(), space.dof_count());
  for_each_quadrature(space, u, [&](int e, double s, double x, double w, const Vector& val,
                                     const Vector&) {
    const double h = space.mesh().width(e);
    const Matrix a = problem.A(x);
    const Matrix jac = problem.g_jacobian(x, val);
    const double dphi[2] = {-1.0 / h, 1.0 / h};
    const double phi[2] = {1.0 - s, s};
    const int nodes[2] = {e, e + 1};
    for (int p = 0; p < 2; ++p) {
      for (int r = 0; r < 2; ++r) {
        const Index i0 = space.dof(nodes[p], 0);
        const Index j0 = space.dof(nodes[r], 0);
        if (i0 < 0 || j0 < 0) continue;
        out.block(i0, j0, n, n) += w * (dphi[p] * dphi[r] * a + phi[p] * phi[r] * jac);
      }
    }
  });
  return 0.5 * (out + out.transpose());
}

Vector constrained_gradient(const DiscreteSpace& space, const ProblemData& problem, double t,
                            const Vector& u) {
  const Matrix w = constrained_subspace(space, t).orthonormal_basis();
  return w.transpose() * gradient(space, problem, u);
}

namespace {

Matrix projector_matrix(const DiscreteSpace& space, double t) {
  return complement_projector(space)(t).matrix();
}

}  // namespace

double ft_value(const DiscreteSpace& space, const ProblemData& problem, double t, const Vector& u) {
  const Matrix p = projector_matrix(space, t);
  const Vector pu = p * u;
  const Vector qu = u - pu;
  return functional_value(space, problem, pu) + 0.5 * qu.dot(space.gram() * qu);
}

Vector ft_gradient(const DiscreteSpace& space, const ProblemData& problem, double t, const Vector& u) {
  const Matrix p = projector_matrix(space, t);
  const Vector pu = p * u;
  return p.transpose() * gradient(space, problem, pu) + space.gram() * (u - pu);
}

// ------------------------------------------------------------ Global check

GlobalCheck global_solution_check(const DiscreteFunction& u, const ProblemData& problem, double t) {
  const Mesh& mesh = u.space.mesh();
  GlobalCheck out;
  if (!(t > 0.0 && t < 1.0)) throw Error(ErrorCode::out_of_interval, "check point must lie in (0, 1)");
  const int at = mesh.node_at(t);
  const int e = mesh.locate(t);
  const double hl = at >= 0 ? mesh.width(std::max(at - 1, 0)) : mesh.width(e);
  const double hr = at >= 0 ? mesh.width(std::min(at, mesh.elements() - 1)) : mesh.width(e);
  const Vector u0 = u.value(t);
  Vector left, right;
  if (t - 2.0 * hl >= 0.0) {
    left = (3.0 * u0 - 4.0 * u.value(t - hl) + u.value(t - 2.0 * hl)) / (2.0 * hl);
  } else {
    left = (u0 - u.value(t - hl)) / hl;
  }
  if (t + 2.0 * hr <= 1.0) {
    right = (-3.0 * u0 + 4.0 * u.value(t + hr) - u.value(t + 2.0 * hr)) / (2.0 * hr);
  } else {
    right = (u.value(t + hr) - u0) / hr;
  }
  out.jump = (problem.A(t) * (right - left)).norm();

  const Matrix v = u.nodal_values();
  double slope = 0.0;
  for (int i = 0; i < mesh.elements(); ++i) {
    slope = std::max(slope, ((v.row(i + 1) - v.row(i)) / mesh.width(i)).cwiseAbs().maxCoeff());
  }
  const double h = mesh.max_width();
  out.tolerance = 1e-8 + 10.0 * h * h * (1.0 + slope);
  out.global = out.jump <= out.tolerance;
  return out;
}

// ----------------------------------------------------------------- Branches

namespace {

struct Solve {
  Vector coords;
  PointStatus status = PointStatus::diverged;
  double residual = 0.0;
  int iterations = 0;
};

double sup_norm(const Vector& u) { return u.size() ? u.cwiseAbs().maxCoeff() : 0.0; }

/// Newton on the eliminated coordinates u = C c. Convergence needs both a
/// small residual and a small relative step, so a slow collapse towards zero
/// is followed to the end instead of stopping at a tiny nonzero state.
Solve newton(const DiscreteSpace& space, const ProblemData& problem, const Matrix& basis,
             const Eigen::LLT<Matrix>& gram_h, Vector c, const BranchControl& control) {
  Solve out;
  const double blowup = 1e3 * (1.0 + sup_norm(basis * c));
  double residual = 0.0;
  double relative_step = 1.0;
  bool settled = false;
  for (int it = 0; it <= control.max_newton; ++it) {
    const Vector u = basis * c;
    const Vector r = basis.transpose() * gradient(space, problem, u);
    residual = std::sqrt(std::max(0.0, r.dot(gram_h.solve(r))));
    out.iterations = it;
    const double amplitude = sup_norm(u);
    if (!std::isfinite(residual) || amplitude > blowup) break;
    if (residual <= 1e-3 * control.residual_tol &&
        (relative_step <= 1e-8 || amplitude < control.trivial_amplitude)) {
      settled = true;
      break;
    }
    if (it == control.max_newton) break;
    const Matrix jac = basis.transpose() * tangent(space, problem, u) * basis;
    const Vector step = Eigen::LDLT<Matrix>(jac).solve(r);
    if (!step.allFinite()) break;
    c -= step;
    const double size = sup_norm(c);
    relative_step = size > 0.0 ? sup_norm(step) / size : 0.0;
  }
  out.coords = c;
  out.residual = residual;
  if (settled && residual <= control.residual_tol) {
    out.status = sup_norm(basis * c) < control.trivial_amplitude ? PointStatus::trivial
                                                                 : PointStatus::converged;
  } else {
    out.status = PointStatus::diverged;
  }
  return out;
}

double dual_norm_of(const DiscreteSpace& space, const Vector& g) {
  return std::sqrt(std::max(0.0, g.dot(space.inner().solve(g).col(0))));
}

}  // namespace

BranchTrace find_branch(const DiscreteSpace& space, const ProblemData& problem, double candidate_t,
                        Index index, Side side, const BranchControl& control) {
  const int elements = space.mesh().elements();
  const int n = space.n();
  const ToleranceProfile& tol = control.tol;
  BranchTrace trace;
  trace.side = side;
  trace.candidate_t = candidate_t;

  // Which piece carries the kernel.
  const AlignedRoot first =
      refine_on_aligned_mesh(elements, n, problem, candidate_t, index, Parity::any, tol);
  {
    const DiscreteSpace s0(aligned_mesh(elements, first.left_elements, first.t), n);
    const RestrictedForm f = restrict_form(s0, assemble_hessian(s0, problem), first.t);
    const SpectralDecomposition d = decompose_form(f.hessian, f.gram, tol, true);
    const Vector v = f.basis * d.eigenvectors.col(index);
    double left_mass = 0.0, right_mass = 0.0;
    for (int i = 1; i < elements; ++i) {
      for (int c = 0; c < n; ++c) {
        const double x = std::abs(v(s0.dof(i, c)));
        (i < first.left_elements ? left_mass : right_mass) += x * x;
      }
    }
    trace.supported_left = left_mass >= right_mass;
  }
  const AlignedRoot root =
      refine_on_aligned_mesh(elements, n, problem, first.t, index,
                             trace.supported_left ? Parity::even_left : Parity::even_right, tol);
  trace.critical_t = root.t;
  trace.left_elements = root.left_elements;
  if (std::abs(root.t - candidate_t) > 2.0 / elements) {
    std::ostringstream msg;
    msg << "aligned critical parameter " << root.t << " is farther than 2/N from the candidate "
        << candidate_t;
    throw Error(ErrorCode::internal, msg.str());
  }

  const double direction = side == Side::plus ? 1.0 : -1.0;
  Vector previous;
  double previous_delta = 0.0;
  for (int j = 0; j < control.steps; ++j) {
    const double delta = control.delta0 * std::pow(control.ratio, j);
    const double t = root.t + direction * delta;
    const DiscreteSpace sj(aligned_mesh(elements, root.left_elements, t), n);
    const RestrictedForm f = restrict_form(sj, assemble_hessian(sj, problem), t);
    const Eigen::LLT<Matrix> gram_h(f.gram);

    BranchPoint point;
    point.t = t;
    point.delta = delta;

    Solve solve;
    bool done = false;
    if (previous.size() > 0) {
      solve = newton(sj, problem, f.basis, gram_h, previous * std::sqrt(delta / previous_delta),
                     control);
      point.seed_amplitude = sup_norm(f.basis * previous) * std::sqrt(delta / previous_delta);
      done = solve.status != PointStatus::diverged;
    }
    if (!done) {
      const SpectralDecomposition d = decompose_form(f.hessian, f.gram, tol, true);
      const Vector phi = d.eigenvectors.col(index);
      const Vector v = f.basis * phi;
      const double lambda = d.eigenvalues(index);
      const double s = 0.25 / sup_norm(v);
      const double j1 = functional_value(sj, problem, s * v);
      const double j2 = functional_value(sj, problem, 2.0 * s * v);
      const double b = (j2 - 4.0 * j1) / (12.0 * std::pow(s, 4));
      double alpha = (lambda < 0.0 && b > 0.0) ? std::sqrt(-lambda / (4.0 * b))
                                               : control.fallback_amplitude / sup_norm(v);
      for (int k = 0; k <= control.max_halvings; ++k, alpha *= 0.5) {
        point.seed_amplitude = alpha * sup_norm(v);
        solve = newton(sj, problem, f.basis, gram_h, alpha * phi, control);
        if (solve.status != PointStatus::diverged) break;
      }
    }

    const Vector u = f.basis * solve.coords;
    point.u = DiscreteFunction{sj, u};
    point.status = solve.status;
    point.iterations = solve.iterations;
    point.residual = solve.residual;
    point.amplitude = sup_norm(u);
    point.ft_residual = dual_norm_of(sj, ft_gradient(sj, problem, t, u));
    point.weak_residual = sup_norm(f.basis.transpose() * gradient(sj, problem, u));
    double off = 0.0;
    for (int i = 1; i < elements; ++i) {
      const bool on_left = i < root.left_elements;
      if (on_left == trace.supported_left || i == root.left_elements) continue;
      for (int c = 0; c < n; ++c) off = std::max(off, std::abs(u(sj.dof(i, c))));
    }
    point.off_side_sup = off;
    point.global = global_solution_check(*point.u, problem, t);
    if (solve.status == PointStatus::converged) {
      previous = solve.coords;
      previous_delta = delta;
    } else {
      previous = Vector();
    }
    trace.points.push_back(std::move(point));
  }

  trace.all_trivial = !trace.points.empty();
  std::vector<const BranchPoint*> good;
  for (const BranchPoint& p : trace.points) {
    if (p.status != PointStatus::trivial) trace.all_trivial = false;
    if (p.status == PointStatus::converged) good.push_back(&p);
  }
  bool decreasing = good.size() >= 2;
  for (std::size_t i = 1; i < good.size(); ++i) {
    if (!(good[i]->amplitude < good[i - 1]->amplitude)) decreasing = false;
  }
  trace.verified = decreasing;
  if (good.size() >= 2) {
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (const BranchPoint* p : good) {
      const double x = std::log(p->delta);
      const double y = std::log(p->amplitude);
      sx += x;
      sy += y;
      sxx += x * x;
      sxy += x * y;
    }
    const double m = static_cast<double>(good.size());
    trace.exponent = (m * sxy - sx * sy) / (m * sxx - sx * sx);
  }
  return trace;
}

namespace {

CandidateVerification verify_one(const DiscreteSpace& space, const ProblemData& problem,
                                 const Candidate& c, const BranchControl& control) {
  CandidateVerification v;
  v.candidate = c;
  std::string errors;
  for (Side side : {Side::plus, Side::minus}) {
    BranchTrace& trace = side == Side::plus ? v.plus : v.minus;
    trace.side = side;
    try {
      trace = find_branch(space, problem, c.t, c.index, side, control);
    } catch (const Error& e) {
      errors += std::string(to_string(side)) + ": " + e.what() + "; ";
    }
  }
  if (v.plus.verified || v.minus.verified) {
    v.status = VerifyStatus::verified;
    v.message = v.plus.verified && v.minus.verified ? "two-sided branch" : "one-sided branch";
  } else if (v.plus.all_trivial && v.minus.all_trivial) {
    v.status = VerifyStatus::all_trivial;
    v.message = "every solve collapsed to zero; candidate rejected as spurious";
  } else {
    v.status = VerifyStatus::unverified;
    v.message = (c.sign % 2 != 0 ? "detected, unverified" : "unverified") +
                (errors.empty() ? std::string() : " (" + errors + ")");
  }
  return v;
}

}  // namespace

VerifyReport verify_candidates(const DiscreteSpace& space, const ProblemData& problem,
                               const BifurcationReport& report, const BranchControl& control) {
  std::vector<std::future<CandidateVerification>> jobs;
  for (const Candidate& c : report.candidates) {
    jobs.push_back(std::async(std::launch::async, verify_one, std::cref(space), std::cref(problem),
                              std::cref(c), std::cref(control)));
  }
  VerifyReport out;
  for (auto& job : jobs) {
    out.candidates.push_back(job.get());
    if (out.candidates.back().status != VerifyStatus::all_trivial) out.all_trivial = false;
  }
  return out;
}

}  // namespace sflow
