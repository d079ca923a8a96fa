#include "sflow/ode_verify.hpp"

#include "oracles/oracles.hpp"
#include "test_util.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

using namespace sflow;

namespace {

Vector random_coords(std::mt19937_64& rng, Index size, double scale) {
  std::uniform_real_distribution<double> d(-scale, scale);
  Vector v(size);
  for (Index i = 0; i < size; ++i) v(i) = d(rng);
  return v;
}

/// Converged points of a c = 50 branch, computed once.
struct C50Branch {
  DiscreteSpace space{Mesh::uniform(200), 1};
  ProblemData problem = presets::cubic(50);
  BifurcationReport report;
  BranchTrace trace;

  C50Branch() {
    report = detect(space, problem, {0.2, 0.5});
    const Candidate& c = report.candidates.at(0);
    trace = find_branch(space, problem, c.t, c.index, Side::plus);
  }
};

const C50Branch& c50_branch() {
  static const C50Branch b;
  return b;
}

}  // namespace

TEST(Functional, VanishesAtZero) {
  const DiscreteSpace s(Mesh::uniform(40), 2);
  const ProblemData p = presets::cubic(50, 2);
  const Vector zero = Vector::Zero(s.dof_count());
  EXPECT_EQ(functional_value(s, p, zero), 0.0);
  EXPECT_EQ(gradient(s, p, zero).norm(), 0.0);
}

TEST(Functional, QuadraticProblemMatchesHessianForm) {
  const DiscreteSpace s(Mesh::uniform(30), 1);
  const ProblemData p = presets::shifted_laplacian(12);
  const Matrix b = assemble_hessian(s, p);
  std::mt19937_64 rng(3);
  for (int k = 0; k < 5; ++k) {
    const Vector u = random_coords(rng, s.dof_count(), 1.0);
    EXPECT_NEAR(functional_value(s, p, u), 0.5 * u.dot(b * u), 1e-12 * (1 + u.squaredNorm()));
    EXPECT_LT((gradient(s, p, u) - b * u).norm(), 1e-11);
    EXPECT_LT((tangent(s, p, u) - b).norm(), 1e-11);
  }
}

TEST(Functional, TangentAtZeroIsHessian) {
  const DiscreteSpace s(Mesh::uniform(25), 2);
  const ProblemData p = presets::cubic(30, 2);
  const Vector zero = Vector::Zero(s.dof_count());
  EXPECT_LT((tangent(s, p, zero) - assemble_hessian(s, p)).norm(), 1e-11);
}

TEST(Functional, GradientMatchesFiniteDifferences) {
  const DiscreteSpace s(Mesh::uniform(20), 1);
  const ProblemData p = presets::cubic(50);
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 20; ++trial) {
    const Vector u = random_coords(rng, s.dof_count(), 2.0);
    const Vector dir = random_coords(rng, s.dof_count(), 1.0);
    const double eps = 1e-5;
    const double fd = (functional_value(s, p, u + eps * dir) - functional_value(s, p, u - eps * dir)) /
                      (2 * eps);
    const double exact = gradient(s, p, u).dot(dir);
    EXPECT_NEAR(fd, exact, 1e-6 * std::max(1.0, std::abs(exact))) << trial;

    const Vector gfd = (gradient(s, p, u + eps * dir) - gradient(s, p, u - eps * dir)) / (2 * eps);
    EXPECT_LT((gfd - tangent(s, p, u) * dir).norm(), 1e-6 * std::max(1.0, gfd.norm())) << trial;
  }
}

TEST(Functional, ConstrainedGradientMatchesFiniteDifferences) {
  const DiscreteSpace s(Mesh::uniform(30), 1);
  const ProblemData p = presets::cubic(50);
  std::mt19937_64 rng(23);
  std::uniform_real_distribution<double> pick(0.05, 0.95);
  for (int trial = 0; trial < 20; ++trial) {
    const double t = pick(rng);
    const Matrix w = constrained_subspace(s, t).orthonormal_basis();
    const Vector u = w * random_coords(rng, w.cols(), 1.0);
    const Vector g = constrained_gradient(s, p, t, u);
    Vector fd(w.cols());
    const double eps = 1e-5;
    for (Index i = 0; i < w.cols(); ++i) {
      fd(i) = (functional_value(s, p, u + eps * w.col(i)) - functional_value(s, p, u - eps * w.col(i))) /
              (2 * eps);
    }
    EXPECT_LT((fd - g).norm(), 1e-6 * std::max(1.0, g.norm())) << trial;
  }
}

TEST(Functional, NonFinitePotentialIsReported) {
  const DiscreteSpace s(Mesh::uniform(10), 1);
  ProblemData p = presets::cubic(5);
  p.potential = [](double, const Vector&) { return std::nan(""); };
  EXPECT_SFLOW_ERROR(functional_value(s, p, Vector::Ones(s.dof_count())),
                     ErrorCode::quadrature_failure);
}

TEST(PenalizedFunctional, AgreesWithJOnConstraintSpace) {
  const DiscreteSpace s(Mesh::uniform(50), 1);
  const ProblemData p = presets::cubic(50);
  const double t = s.mesh().node(15);
  std::mt19937_64 rng(5);
  for (int k = 0; k < 10; ++k) {
    Vector u = random_coords(rng, s.dof_count(), 1.0);
    u(s.dof(15, 0)) = 0.0;
    EXPECT_NEAR(ft_value(s, p, t, u), functional_value(s, p, u), 1e-12);
    // On H_t the gradient of f_t is the gradient of J restricted to H_t.
    const Matrix w = constrained_subspace(s, t).orthonormal_basis();
    EXPECT_LT((w.transpose() * ft_gradient(s, p, t, u) - constrained_gradient(s, p, t, u)).norm(),
              1e-11);
  }
}

TEST(PenalizedFunctional, GradientMatchesFiniteDifferences) {
  const DiscreteSpace s(Mesh::uniform(24), 1);
  const ProblemData p = presets::cubic(50);
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 10; ++trial) {
    const double t = 0.1 + 0.05 * trial + 0.013;
    const Vector u = random_coords(rng, s.dof_count(), 1.5);
    const Vector dir = random_coords(rng, s.dof_count(), 1.0);
    const double eps = 1e-5;
    const double fd = (ft_value(s, p, t, u + eps * dir) - ft_value(s, p, t, u - eps * dir)) / (2 * eps);
    const double exact = ft_gradient(s, p, t, u).dot(dir);
    EXPECT_NEAR(fd, exact, 1e-6 * std::max(1.0, std::abs(exact))) << trial;
  }
}

TEST(PenalizedFunctional, CriticalPointsLieInConstraintSpace) {
  // A critical point u of f_t has P^⊥ u = 0 and dJ(u) annihilating H_t.
  const C50Branch& b = c50_branch();
  int checked = 0;
  for (const BranchPoint& p : b.trace.points) {
    if (p.status != PointStatus::converged) continue;
    const DiscreteSpace& sp = p.u->space;
    EXPECT_LT(std::abs(p.u->value(p.t)(0)), 1e-14);
    EXPECT_LT(constrained_gradient(sp, b.problem, p.t, p.u->coords).norm(), 1e-9);
    EXPECT_LT(p.ft_residual, 1e-9);
    ++checked;
  }
  EXPECT_GE(checked, 5);
}

TEST(Branch, C50PitchforkShrinksToCandidate) {
  const C50Branch& b = c50_branch();
  const BranchTrace& tr = b.trace;
  EXPECT_TRUE(tr.verified);
  EXPECT_FALSE(tr.all_trivial);
  EXPECT_NEAR(tr.critical_t, b.report.candidates[0].t, 1e-6);
  std::vector<const BranchPoint*> good;
  for (const BranchPoint& p : tr.points) {
    if (p.status == PointStatus::converged) good.push_back(&p);
  }
  ASSERT_GE(good.size(), 5u);
  for (std::size_t i = 1; i < good.size(); ++i) {
    EXPECT_LT(good[i]->amplitude, good[i - 1]->amplitude);
    EXPECT_LT(std::abs(good[i]->t - tr.critical_t), std::abs(good[i - 1]->t - tr.critical_t));
  }
  EXPECT_LT(good.back()->amplitude, 1e-2);
  for (const BranchPoint* p : good) {
    EXPECT_LT(p->residual, 1e-10);
    EXPECT_LT(p->weak_residual, 1e-8);
    EXPECT_LT(p->off_side_sup, 1e-9);
    EXPECT_GT(p->amplitude, 1e-10);
  }
}

TEST(Branch, AmplitudeScalesLikeSquareRoot) {
  const BranchTrace& tr = c50_branch().trace;
  EXPECT_GE(tr.exponent, 0.45);
  EXPECT_LE(tr.exponent, 0.55);

  // Independent least-squares fit of log amplitude against log delta.
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  int m = 0;
  for (const BranchPoint& p : tr.points) {
    if (p.status != PointStatus::converged) continue;
    const double x = std::log(std::abs(p.t - tr.critical_t));
    const double y = std::log(p.amplitude);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
    ++m;
  }
  const double slope = (m * sxy - sx * sy) / (m * sxx - sx * sx);
  EXPECT_NEAR(slope, tr.exponent, 0.02);
}

TEST(Branch, AgreesWithShootingSolution) {
  const BranchTrace& tr = c50_branch().trace;
  int checked = 0;
  for (const BranchPoint& p : tr.points) {
    if (p.status != PointStatus::converged) continue;
    const Mesh& mesh = p.u->space.mesh();
    const Matrix v = p.u->nodal_values();
    const int k = mesh.node_at(p.t);
    ASSERT_GT(k, 0);
    // The nonzero piece of the solution is a single hump on [0, t] or [t, 1].
    const int first = tr.supported_left ? 0 : k;
    const int last = tr.supported_left ? k : mesh.elements();
    ASSERT_EQ((last - first) % 2, 0);
    const double peak = v((first + last) / 2, 0);
    const oracle::Shooting shot{50.0, 1.0, peak};
    const double quarter = shot.quarter_length();
    const double x0 = mesh.node(first);
    const double length = mesh.node(last) - x0;
    double err = 0;
    for (int i = first; i <= last; ++i) {
      const double x = (mesh.node(i) - x0) * 2 * quarter / length;
      err = std::max(err, std::abs(v(i, 0) - shot.hump(x, quarter)));
    }
    EXPECT_LT(err, 1e-6) << p.t;
    ++checked;
  }
  EXPECT_GE(checked, 5);
}

TEST(Branch, LinearProblemCollapsesToZero) {
  const DiscreteSpace s(Mesh::uniform(120), 1);
  const ProblemData p = presets::shifted_laplacian(50);
  const BifurcationReport r = detect(s, p, {0.2, 0.5});
  ASSERT_EQ(r.candidates.size(), 1u);
  BranchControl ctl;
  ctl.steps = 4;
  const BranchTrace tr = find_branch(s, p, r.candidates[0].t, r.candidates[0].index, Side::plus, ctl);
  EXPECT_TRUE(tr.all_trivial);
  EXPECT_FALSE(tr.verified);
  for (const BranchPoint& pt : tr.points) EXPECT_EQ(pt.status, PointStatus::trivial);

  const VerifyReport v = verify_candidates(s, p, r, ctl);
  ASSERT_EQ(v.candidates.size(), 1u);
  EXPECT_EQ(v.candidates[0].status, VerifyStatus::all_trivial);
  EXPECT_TRUE(v.all_trivial);
}

TEST(Branch, EmptyReportIsVacuouslyTrivial) {
  const DiscreteSpace s(Mesh::uniform(60), 1);
  const ProblemData p = presets::cubic(5);
  const BifurcationReport r = detect(s, p, {0.2, 0.5});
  ASSERT_TRUE(r.candidates.empty());
  const VerifyReport v = verify_candidates(s, p, r);
  EXPECT_TRUE(v.candidates.empty());
  EXPECT_TRUE(v.all_trivial);
}

TEST(Branch, VerifyCandidatesIsDeterministic) {
  const DiscreteSpace s(Mesh::uniform(100), 1);
  const ProblemData p = presets::cubic(50);
  const BifurcationReport r = detect(s, p, {0.1, 0.5});
  ASSERT_EQ(r.candidates.size(), 2u);
  BranchControl ctl;
  ctl.steps = 3;
  const VerifyReport a = verify_candidates(s, p, r, ctl);
  const VerifyReport b = verify_candidates(s, p, r, ctl);
  ASSERT_EQ(a.candidates.size(), 2u);
  for (std::size_t i = 0; i < 2; ++i) {
    EXPECT_EQ(a.candidates[i].status, b.candidates[i].status);
    ASSERT_EQ(a.candidates[i].plus.points.size(), b.candidates[i].plus.points.size());
    for (std::size_t j = 0; j < a.candidates[i].plus.points.size(); ++j) {
      EXPECT_EQ(a.candidates[i].plus.points[j].amplitude, b.candidates[i].plus.points[j].amplitude);
    }
  }
}

TEST(GlobalCheck, ZeroFunctionIsGlobal) {
  const DiscreteSpace s(Mesh::uniform(50), 1);
  const DiscreteFunction u{s, Vector::Zero(s.dof_count())};
  const GlobalCheck g = global_solution_check(u, presets::cubic(50), 0.3);
  EXPECT_EQ(g.jump, 0.0);
  EXPECT_TRUE(g.global);
}

TEST(GlobalCheck, OneSidedHumpHasFluxJump) {
  const double amp = 0.5;
  const oracle::Shooting shot{50.0, 1.0, amp};
  const double quarter = shot.quarter_length();
  const double t = 2 * quarter;
  const int elements = 400;
  const int left = static_cast<int>(std::lround(elements * t / 2.0)) * 2;
  const DiscreteSpace s(aligned_mesh(elements, left, t), 1);
  const DiscreteFunction u = interpolate(s, [&](double x) {
    Vector v(1);
    v(0) = x < t ? shot.hump(x, quarter) : 0.0;
    return v;
  });
  const GlobalCheck g = global_solution_check(u, presets::cubic(50), t);
  const double slope = std::abs(shot.state(quarter).second);
  EXPECT_NEAR(g.jump, slope, 1e-3 * slope);
  EXPECT_FALSE(g.global);
}

TEST(GlobalCheck, AntisymmetricTwoHumpSolutionIsGlobal) {
  const double amp = oracle::amplitude_for_length(50.0, 0.5);
  const oracle::Shooting shot{50.0, 1.0, amp};
  const double quarter = shot.quarter_length();
  ASSERT_NEAR(2 * quarter, 0.5, 1e-9);
  const DiscreteSpace s(Mesh::uniform(200), 1);
  const DiscreteFunction u = interpolate(s, [&](double x) {
    Vector v(1);
    v(0) = x <= 0.5 ? shot.hump(x * 2 * quarter / 0.5, quarter)
                    : -shot.hump((x - 0.5) * 2 * quarter / 0.5, quarter);
    return v;
  });
  const GlobalCheck g = global_solution_check(u, presets::cubic(50), 0.5);
  EXPECT_TRUE(g.global) << g.jump << " > " << g.tolerance;
  // The one-sided slopes themselves are large.
  EXPECT_GT(std::abs(shot.state(quarter).second), 1.0);
}

TEST(GlobalCheck, RejectsPointOutsideUnit) {
  const DiscreteSpace s(Mesh::uniform(10), 1);
  const DiscreteFunction u{s, Vector::Zero(s.dof_count())};
  EXPECT_SFLOW_ERROR(global_solution_check(u, presets::cubic(5), 1.0), ErrorCode::out_of_interval);
}
