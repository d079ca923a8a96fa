#include "sflow/bifurcation.hpp"

#include "oracles/oracles.hpp"
#include "test_util.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace sflow;
using oracle::pi;

namespace {

SymmetricOperator riesz(const DiscreteSpace& s, const ProblemData& p) {
  return riesz_operator(s, assemble_hessian(s, p));
}

/// Lowest P1 Dirichlet eigenvalue (consistent mass) of an interval of length
/// L split into m uniform elements.
double p1_dirichlet_eigenvalue(double length, int m) {
  const double h = length / m;
  const double th = pi / m;
  return 6.0 / (h * h) * (1 - std::cos(th)) / (2 + std::cos(th));
}

}  // namespace

TEST(Admissibility, IdentityHasUnitMargins) {
  const DiscreteSpace s(Mesh::uniform(30), 1);
  const Margins m = admissibility_check(riesz(s, presets::identity()), constrained_subspace(s, 0.2),
                                        constrained_subspace(s, 0.7));
  EXPECT_NEAR(m.a, 1.0, 1e-10);
  EXPECT_NEAR(m.b, 1.0, 1e-10);
  EXPECT_TRUE(m.admissible);
}

TEST(Admissibility, NondegenerateEndpointsForC50) {
  const DiscreteSpace s(Mesh::uniform(200), 1);
  const Margins m = admissibility_check(riesz(s, presets::shifted_laplacian(50)),
                                        constrained_subspace(s, 0.2), constrained_subspace(s, 0.5));
  EXPECT_GT(m.a, 1e-3);
  EXPECT_GT(m.b, 1e-3);
  EXPECT_TRUE(m.admissible);
}

TEST(Admissibility, ConstructedDegeneracyIsFlagged) {
  const int n_el = 200;
  const double c = p1_dirichlet_eigenvalue(0.25, 50);
  EXPECT_NEAR(c, std::pow(pi / 0.25, 2), 0.01 * c);
  const DiscreteSpace s(Mesh::uniform(n_el), 1);
  const Margins m = admissibility_check(riesz(s, presets::shifted_laplacian(c)),
                                        constrained_subspace(s, 0.25), constrained_subspace(s, 0.5));
  EXPECT_FALSE(m.admissible);
  EXPECT_LT(m.a, 1e-9);
  EXPECT_SFLOW_ERROR(detect(s, presets::shifted_laplacian(c), {0.25, 0.5}), ErrorCode::degenerate_endpoint);
}

TEST(Detect, C50SinglePitchfork) {
  const DiscreteSpace s(Mesh::uniform(200), 1);
  const BifurcationReport r = detect(s, presets::cubic(50), {0.2, 0.5});
  EXPECT_EQ(r.sfl, -1);
  EXPECT_EQ(r.morse_a, 1);
  EXPECT_EQ(r.morse_b, 2);
  ASSERT_EQ(r.candidates.size(), 1u);
  const Candidate& c = r.candidates[0];
  EXPECT_NEAR(c.t, pi / std::sqrt(50.0), 1e-6 + 2.0 / 200);
  EXPECT_NEAR(c.t_path, pi / std::sqrt(50.0), 1e-6 + 2.0 / 200);
  EXPECT_EQ(c.kernel_dim, 1);
  EXPECT_EQ(c.sign, -1);
  EXPECT_LE(c.bracket_width, 1e-6 + 1e-15);
  EXPECT_EQ(r.count_lower_bound, 1);
  EXPECT_TRUE(r.hypotheses.compact_perturbation);
  EXPECT_TRUE(r.hypotheses.analytic);
  EXPECT_FALSE(r.count_caveat);
}

TEST(Detect, AlignedRefinementLocalizesToOrderHSquared) {
  const DiscreteSpace s(Mesh::uniform(400), 1);
  const BifurcationReport r = detect(s, presets::cubic(50), {0.2, 0.5});
  ASSERT_EQ(r.candidates.size(), 1u);
  EXPECT_TRUE(r.candidates[0].refined);
  EXPECT_LE(std::abs(r.candidates[0].t - pi / std::sqrt(50.0)), 1e-4);
}

TEST(Detect, SubcriticalC5HasNoCandidates) {
  const DiscreteSpace s(Mesh::uniform(100), 1);
  for (Interval iv : {Interval{0.1, 0.9}, Interval{0.3, 0.4}}) {
    const BifurcationReport r = detect(s, presets::cubic(5), iv);
    EXPECT_EQ(r.sfl, 0);
    EXPECT_TRUE(r.candidates.empty());
    EXPECT_EQ(r.count_lower_bound, 0);
  }
}

TEST(Detect, PositiveDefiniteHessianHasZeroFlow) {
  const DiscreteSpace s(Mesh::uniform(60), 1);
  const BifurcationReport r = detect(s, presets::shifted_laplacian(-3), {0.1, 0.9});
  EXPECT_EQ(r.sfl, 0);
  EXPECT_EQ(r.morse_a, 0);
  EXPECT_EQ(r.morse_b, 0);
  EXPECT_TRUE(r.candidates.empty());
}

TEST(Detect, CancelingPairIsReported) {
  const DiscreteSpace s(Mesh::uniform(200), 1);
  const BifurcationReport r = detect(s, presets::cubic(50), {0.1, 0.5});
  EXPECT_EQ(r.sfl, 0);
  ASSERT_EQ(r.candidates.size(), 2u);
  EXPECT_NEAR(r.candidates[0].t, 1 - 2 * pi / std::sqrt(50.0), 2.0 / 200);
  EXPECT_NEAR(r.candidates[1].t, pi / std::sqrt(50.0), 2.0 / 200);
  EXPECT_EQ(r.candidates[0].sign + r.candidates[1].sign, 0);
  EXPECT_EQ(r.candidates[0].sign, 1);
  EXPECT_EQ(r.count_lower_bound, 0);
}

TEST(Detect, CandidatesMatchDirichletDegeneracies) {
  // Degeneracies of the two pieces that nearly coincide only separate once the
  // coupling through the constraint element is small, so N = 200 here.
  const int n_el = 200;
  const DiscreteSpace s(Mesh::uniform(n_el), 1);
  for (double c : {30.0, 50.0, 90.0, 160.0}) {
    const Interval iv{0.13, 0.87};
    const BifurcationReport r = detect(s, presets::shifted_laplacian(c), iv);
    const std::vector<double> expected = oracle::dirichlet_degeneracies(c, iv.a, iv.b);
    ASSERT_EQ(r.candidates.size(), expected.size()) << c;
    for (std::size_t i = 0; i < expected.size(); ++i) {
      EXPECT_NEAR(r.candidates[i].t, expected[i], r.candidates[i].bracket_width + 2.0 / n_el) << c;
      EXPECT_GE(r.candidates[i].kernel_dim, 1);
    }
    EXPECT_EQ(r.sfl, oracle::dirichlet_morse_count(c, iv.a) - oracle::dirichlet_morse_count(c, iv.b));
  }
}

TEST(Detect, NoMissedCrossingsOnFineGrid) {
  const DiscreteSpace s(Mesh::uniform(120), 1);
  const ProblemData p = presets::shifted_laplacian(120);
  const Interval iv{0.15, 0.85};
  const BifurcationReport r = detect(s, p, iv);
  const OperatorPath path = build_L_path(s, riesz(s, p), complement_projector(s), iv);
  Index prev = morse_index(path.evaluate(iv.a));
  const int fine = 200;
  for (int k = 1; k <= fine; ++k) {
    const double lo = iv.a + iv.width() * (k - 1) / fine;
    const double hi = iv.a + iv.width() * k / fine;
    const Index m = morse_index(path.evaluate(hi));
    if (m != prev) {
      bool covered = false;
      for (const Candidate& c : r.candidates) covered = covered || (c.t_path >= lo && c.t_path <= hi);
      EXPECT_TRUE(covered) << "[" << lo << ", " << hi << "]";
    }
    prev = m;
  }
}

TEST(Detect, ProjectionRoutesAgree) {
  const DiscreteSpace s(Mesh::uniform(80), 1);
  const ProblemData p = presets::cubic(50);
  const BifurcationReport base = detect(s, p, {0.2, 0.5});
  for (ProjectionRoute route : {ProjectionRoute::direct, ProjectionRoute::chi, ProjectionRoute::kernel}) {
    DetectControl dc;
    dc.route = route;
    const BifurcationReport r = detect(s, p, {0.2, 0.5}, dc);
    EXPECT_EQ(r.sfl, base.sfl);
    ASSERT_EQ(r.candidates.size(), base.candidates.size());
    EXPECT_NEAR(r.candidates[0].t_path, base.candidates[0].t_path, 1e-6);
  }
}

TEST(Detect, TabulatedInputCarriesCountCaveat) {
  const DiscreteSpace s(Mesh::uniform(100), 1);
  const Matrix one = Matrix::Identity(1, 1);
  const ProblemData p = presets::tabulated({0.0, 1.0}, {one, one}, {-50 * one, -50 * one}, 1.0);
  const BifurcationReport r = detect(s, p, {0.2, 0.5});
  EXPECT_EQ(r.sfl, -1);
  EXPECT_TRUE(r.count_caveat);
  EXPECT_FALSE(r.hypotheses.analytic);
}

TEST(Detect, RejectsIntervalOutsideUnit) {
  const DiscreteSpace s(Mesh::uniform(40), 1);
  EXPECT_SFLOW_ERROR(detect(s, presets::cubic(50), {0.5, 0.2}), ErrorCode::out_of_interval);
  EXPECT_SFLOW_ERROR(detect(s, presets::cubic(50), {0.0, 0.5}), ErrorCode::out_of_interval);
}

TEST(Detect, DeterministicReports) {
  const DiscreteSpace s(Mesh::uniform(100), 1);
  const std::string a = report_to_json(detect(s, presets::cubic(50), {0.1, 0.5}));
  const std::string b = report_to_json(detect(s, presets::cubic(50), {0.1, 0.5}));
  EXPECT_EQ(a, b);
}

TEST(KernelCondition, CandidateHasOneDimensionalIntersection) {
  const int n_el = 200;
  const DiscreteSpace s(Mesh::uniform(n_el), 1);
  const ProblemData p = presets::cubic(50);
  const BifurcationReport r = detect(s, p, {0.2, 0.5});
  ASSERT_EQ(r.candidates.size(), 1u);
  const Candidate& c = r.candidates[0];
  const DiscreteSpace aligned(aligned_mesh(n_el, c.aligned_left_elements, c.t), 1);
  const KernelCondition kc = kernel_condition(aligned, riesz(aligned, p), c.t);
  EXPECT_EQ(kc.kernel_dimension, 1);
  EXPECT_EQ(kc.intersection_dimension, 1);
  EXPECT_TRUE(kc.agree);
}

TEST(KernelCondition, FarFromCandidatesAndIdentity) {
  const DiscreteSpace s(Mesh::uniform(100), 1);
  const KernelCondition far = kernel_condition(s, riesz(s, presets::cubic(50)), 0.3);
  EXPECT_EQ(far.kernel_dimension, 0);
  EXPECT_EQ(far.intersection_dimension, 0);
  for (double t : {0.1, 0.5, 0.77}) {
    const KernelCondition id = kernel_condition(s, riesz(s, presets::identity()), t);
    EXPECT_EQ(id.kernel_dimension, 0);
    EXPECT_EQ(id.intersection_dimension, 0);
  }
}

TEST(MorseCriterion, Examples) {
  const DiscreteSpace s(Mesh::uniform(200), 1);
  const ProblemData p = presets::cubic(50);
  const MorseCriterion m = morse_criterion(s, p, 0.2, 0.5);
  EXPECT_EQ(m.morse_a, 1);
  EXPECT_EQ(m.morse_b, 2);
  EXPECT_TRUE(m.differs);
  EXPECT_FALSE(morse_criterion(s, p, 0.3, 0.3).differs);
  const MorseCriterion pair = morse_criterion(s, p, 0.1, 0.5);
  EXPECT_EQ(pair.morse_a, 2);
  EXPECT_EQ(pair.morse_b, 2);
  EXPECT_FALSE(pair.differs);
}

TEST(MorseCriterion, RequiresPositiveDefiniteA) {
  const DiscreteSpace s(Mesh::uniform(20), 1);
  const ProblemData p = presets::polynomial({Matrix::Constant(1, 1, -1.0)}, {Matrix::Zero(1, 1)});
  EXPECT_SFLOW_ERROR(morse_criterion(s, p, 0.2, 0.5), ErrorCode::precondition_violated);
}

TEST(MorseCriterion, AgreesWithSpectralFlow) {
  const DiscreteSpace s(Mesh::uniform(60), 2);
  Matrix a0(2, 2), s0(2, 2);
  a0 << 2, 0.3, 0.3, 1;
  s0 << -40, 5, 5, -25;
  const ProblemData sys = presets::polynomial({a0}, {s0}, 1.0);
  for (const ProblemData& p : {presets::cubic(50, 2), sys}) {
    for (Interval iv : {Interval{0.2, 0.5}, Interval{0.15, 0.75}, Interval{0.3, 0.9}}) {
      const BifurcationReport r = detect(s, p, iv);
      const MorseCriterion m = morse_criterion(s, p, iv.a, iv.b);
      EXPECT_EQ(r.sfl, static_cast<long>(m.morse_a) - static_cast<long>(m.morse_b));
      EXPECT_EQ(r.morse_a, m.morse_a);
      EXPECT_EQ(r.morse_b, m.morse_b);
    }
  }
}

TEST(Report, InvariantsAndCountBound) {
  const DiscreteSpace s(Mesh::uniform(100), 2);
  const BifurcationReport r = detect(s, presets::cubic(50, 2), {0.2, 0.5});
  EXPECT_EQ(r.sfl, -2);
  Index m = 0;
  for (const Candidate& c : r.candidates) m = std::max<Index>(m, c.kernel_dim);
  ASSERT_GE(m, 1);
  EXPECT_EQ(r.count_lower_bound, std::abs(r.sfl) / m);
  EXPECT_NO_THROW(check_report(r));
  BifurcationReport broken = r;
  broken.sfl += 1;
  EXPECT_SFLOW_ERROR(check_report(broken), ErrorCode::internal);
}

TEST(Report, JsonRoundTrip) {
  const DiscreteSpace s(Mesh::uniform(100), 1);
  const BifurcationReport r = detect(s, presets::cubic(50), {0.1, 0.5});
  const std::string text = report_to_json(r);
  const BifurcationReport back = report_from_json(text);
  EXPECT_EQ(report_to_json(back), text);
  ASSERT_EQ(back.candidates.size(), r.candidates.size());
  EXPECT_EQ(back.candidates[1].t, r.candidates[1].t);
  EXPECT_EQ(back.candidates[1].index, r.candidates[1].index);
}

TEST(Report, MalformedJsonIsRejected) {
  EXPECT_SFLOW_ERROR(report_from_json("{not json"), ErrorCode::invalid_argument);
  EXPECT_SFLOW_ERROR(report_from_json("{\"kind\": \"bifurcation_report\"}"), ErrorCode::invalid_argument);
}

TEST(Report, EigencurveCsvShape) {
  const DiscreteSpace s(Mesh::uniform(60), 1);
  DetectControl dc;
  dc.scan.grid = 10;
  dc.scan.curve_count = 4;
  const BifurcationReport r = detect(s, presets::cubic(50), {0.2, 0.5}, dc);
  const std::string csv = eigencurves_csv(r);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "t,lambda_1,lambda_2,lambda_3,lambda_4");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 12);
}
