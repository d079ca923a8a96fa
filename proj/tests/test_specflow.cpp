#include "sflow/hilbert_fem.hpp"
#include "sflow/specflow.hpp"

#include "oracles/oracles.hpp"
#include "test_util.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace sflow;

namespace {

SymmetricOperator euclidean_op(const Matrix& m) {
  return SymmetricOperator(InnerProductSpace::euclidean(m.rows()), m);
}

/// Operator whose gram-form G M equals `form`.
SymmetricOperator from_form(const InnerProductSpace& s, const Matrix& form) {
  return SymmetricOperator(s, s.solve(form));
}

Matrix diag(std::initializer_list<double> d) {
  Vector v(static_cast<Index>(d.size()));
  Index i = 0;
  for (double x : d) v(i++) = x;
  return v.asDiagonal();
}

OperatorPath affine_path(const InnerProductSpace& s, Matrix f0, Matrix f1, Interval iv = {0, 1}) {
  return {iv, [s, f0, f1](double t) { return from_form(s, f0 + t * f1); }, "affine"};
}

/// Random symmetric path with invertible endpoint forms.
OperatorPath random_path(std::mt19937_64& rng, const InnerProductSpace& s) {
  const int n = static_cast<int>(s.dim());
  while (true) {
    const Matrix f0 = oracle::random_symmetric(rng, n);
    const Matrix f1 = oracle::random_symmetric(rng, n);
    OperatorPath p = affine_path(s, f0, f1);
    if (kernel_dimension(p.evaluate(0)) == 0 && kernel_dimension(p.evaluate(1)) == 0 &&
        decompose(p.evaluate(0), {}, false).eigenvalues.cwiseAbs().minCoeff() > 1e-3 &&
        decompose(p.evaluate(1), {}, false).eigenvalues.cwiseAbs().minCoeff() > 1e-3) {
      return p;
    }
  }
}

}  // namespace

TEST(MorseIndex, Examples) {
  EXPECT_EQ(morse_index(euclidean_op(Matrix::Identity(3, 3))), 0);
  EXPECT_EQ(morse_index(euclidean_op(diag({-1, -2, 3}))), 2);
}

TEST(MorseIndex, ShiftedDirichletLaplacian) {
  const DiscreteSpace space(Mesh::uniform(200), 1);
  const SymmetricOperator t = riesz_operator(space, assemble_hessian(space, presets::shifted_laplacian(50)));
  EXPECT_EQ(morse_index(t), 2);
}

TEST(MorseIndex, InvariantUnderCongruence) {
  std::mt19937_64 rng(21);
  std::normal_distribution<double> d;
  for (int trial = 0; trial < 20; ++trial) {
    const int n = 2 + trial % 9;
    const InnerProductSpace s(oracle::random_spd(rng, n));
    const Matrix f = oracle::random_symmetric(rng, n);
    Matrix c(n, n);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) c(i, j) = d(rng);
    c += 3 * n * Matrix::Identity(n, n);
    // New coordinates x = C y: form C^T F C, gram C^T G C.
    const InnerProductSpace s2(c.transpose() * s.gram() * c);
    EXPECT_EQ(morse_index(from_form(s, f)), morse_index(from_form(s2, c.transpose() * f * c)));
  }
}

TEST(KernelDimension, Examples) {
  EXPECT_EQ(kernel_dimension(euclidean_op(diag({1, -1}))), 0);
  EXPECT_EQ(kernel_dimension(euclidean_op(diag({0, 1}))), 1);
}

TEST(Decomposition, CountsAndResiduals) {
  std::mt19937_64 rng(22);
  for (int trial = 0; trial < 10; ++trial) {
    const int n = 3 + trial;
    const InnerProductSpace s(oracle::random_spd(rng, n));
    const SymmetricOperator op = from_form(s, oracle::random_symmetric(rng, n));
    const SpectralDecomposition sd = decompose(op);
    EXPECT_EQ(sd.negative_count + sd.zero_count + sd.positive_count, n);
    for (Index k = 0; k < n; ++k) {
      const Vector v = sd.eigenvectors.col(k);
      EXPECT_LT((op.matrix() * v - sd.eigenvalues(k) * v).norm(), 1e-9 * sd.scale);
      EXPECT_NEAR(s.norm(v), 1.0, 1e-10);
    }
    for (Index k = 1; k < n; ++k) EXPECT_LE(sd.eigenvalues(k - 1), sd.eigenvalues(k));
  }
}

TEST(SymmetricOperator, RejectsNonSelfadjointMatrix) {
  Matrix m(2, 2);
  m << 1, 2, 0, 1;
  EXPECT_SFLOW_ERROR(euclidean_op(m), ErrorCode::not_selfadjoint);
}

TEST(RelativeMorseIndex, Examples) {
  const auto s = euclidean_op(diag({-1, 1}));
  EXPECT_EQ(relative_morse_index(s, s), 0);
  EXPECT_EQ(relative_morse_index(s, euclidean_op(diag({1, -1}))), 0);
  EXPECT_EQ(relative_morse_index(euclidean_op(diag({-1, -1})), euclidean_op(diag({1, 1}))), 2);
}

TEST(RelativeMorseIndex, DegenerateOperatorIsRejected) {
  EXPECT_SFLOW_ERROR(relative_morse_index(euclidean_op(diag({0, 1})), euclidean_op(diag({1, 1}))),
                     ErrorCode::degenerate_endpoint);
}

TEST(RelativeMorseIndex, EqualsMorseDifferenceOnRandomPairs) {
  std::mt19937_64 rng(23);
  std::uniform_int_distribution<int> dims(2, 40);
  for (int trial = 0; trial < 100; ++trial) {
    const int n = dims(rng);
    const InnerProductSpace g(oracle::random_spd(rng, n));
    const SymmetricOperator s = from_form(g, oracle::random_symmetric(rng, n));
    const SymmetricOperator t = from_form(g, oracle::random_symmetric(rng, n));
    if (kernel_dimension(s) || kernel_dimension(t)) continue;
    EXPECT_EQ(relative_morse_index(s, t), static_cast<long>(morse_index(s)) - static_cast<long>(morse_index(t)));
  }
}

TEST(SpectralFlow, ConstantInvertiblePathIsZero) {
  const auto op = euclidean_op(diag({-1, 2, 3}));
  const OperatorPath p{{0, 1}, [op](double) { return op; }, "constant"};
  const SpectralFlowResult r = spectral_flow(p);
  EXPECT_EQ(r.value, 0);
  EXPECT_TRUE(r.crossings.empty());
}

TEST(SpectralFlow, SingleUpwardCrossing) {
  const OperatorPath p{{-1, 1}, [](double t) { return euclidean_op(diag({t, 1})); }, "diag(t,1)"};
  const SpectralFlowResult r = spectral_flow(p);
  EXPECT_EQ(r.value, 1);
  EXPECT_EQ(r.morse_a, 1);
  EXPECT_EQ(r.morse_b, 0);
  ASSERT_EQ(r.crossings.size(), 1u);
  EXPECT_NEAR(r.crossings[0].t, 0.0, 1e-6);
  EXPECT_EQ(r.crossings[0].sign, 1);
  EXPECT_EQ(r.crossings[0].kernel_dim, 1);
  EXPECT_LE(r.crossings[0].hi - r.crossings[0].lo, 1e-6 + 1e-15);
  EXPECT_NEAR(r.crossings[0].eigenvalue_slope_estimate, 1.0, 1e-3);
}

TEST(SpectralFlow, DirectSumExamples) {
  const OperatorPath up{{-1, 1}, [](double t) { return euclidean_op(diag({t, 1})); }, "up"};
  const OperatorPath down{{-1, 1}, [](double t) { return euclidean_op(diag({-t, 1})); }, "down"};
  const OperatorPath id{{-1, 1}, [](double) { return euclidean_op(Matrix::Identity(2, 2)); }, "id"};
  EXPECT_EQ(spectral_flow(direct_sum(up, down)).value, 0);
  EXPECT_EQ(spectral_flow(direct_sum(up, up)).value, 2);
  EXPECT_EQ(spectral_flow(direct_sum(up, id)).value, spectral_flow(up).value);
}

TEST(SpectralFlow, DirectSumNeedsMatchingIntervals) {
  const OperatorPath p{{0, 1}, [](double) { return euclidean_op(Matrix::Identity(1, 1)); }, "p"};
  const OperatorPath q{{0, 2}, [](double) { return euclidean_op(Matrix::Identity(1, 1)); }, "q"};
  EXPECT_SFLOW_ERROR(direct_sum(p, q), ErrorCode::interval_mismatch);
}

TEST(SpectralFlow, DegenerateEndpointIsRejected) {
  const OperatorPath p{{0, 1}, [](double t) { return euclidean_op(diag({t, 1})); }, "p"};
  EXPECT_SFLOW_ERROR(spectral_flow(p), ErrorCode::degenerate_endpoint);
}

TEST(SpectralFlow, InvertibleThroughoutIsZero) {
  std::mt19937_64 rng(24);
  std::normal_distribution<double> d;
  for (int trial = 0; trial < 20; ++trial) {
    const int n = 2 + trial % 8;
    const InnerProductSpace s(oracle::random_spd(rng, n));
    Vector signs(n);
    for (int i = 0; i < n; ++i) signs(i) = (i % 2 ? 1.0 : -1.0) * (1 + std::abs(d(rng)));
    Matrix k(n, n);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) k(i, j) = d(rng);
    k *= 0.5 / k.norm();
    // Congruence C(t)^T D C(t) with |t K| < 1 keeps every eigenvalue away from 0.
    const Matrix dm = signs.asDiagonal();
    const OperatorPath p{{0, 1},
                         [s, dm, k](double t) {
                           const Matrix c = Matrix::Identity(dm.rows(), dm.cols()) + t * k;
                           return from_form(s, c.transpose() * dm * c);
                         },
                         "congruence"};
    const SpectralFlowResult r = spectral_flow(p);
    EXPECT_EQ(r.value, 0);
    for (const Crossing& c : r.crossings) EXPECT_EQ(c.sign, 0);
  }
}

TEST(SpectralFlow, AdditiveUnderDirectSum) {
  std::mt19937_64 rng(25);
  for (int trial = 0; trial < 50; ++trial) {
    const InnerProductSpace s1(oracle::random_spd(rng, 2 + trial % 4));
    const InnerProductSpace s2(oracle::random_spd(rng, 2 + trial % 3));
    const OperatorPath p = random_path(rng, s1);
    const OperatorPath q = random_path(rng, s2);
    const long sp = spectral_flow(p).value, sq = spectral_flow(q).value;
    EXPECT_EQ(spectral_flow(direct_sum(p, q)).value, sp + sq);
  }
}

TEST(SpectralFlow, HomotopyWithFixedEndsKeepsValue) {
  std::mt19937_64 rng(26);
  for (int trial = 0; trial < 10; ++trial) {
    const int n = 3 + trial % 4;
    const InnerProductSpace s(oracle::random_spd(rng, n));
    Matrix fa, fb;
    while (true) {
      fa = oracle::random_symmetric(rng, n);
      fb = oracle::random_symmetric(rng, n);
      if (kernel_dimension(from_form(s, fa)) == 0 && kernel_dimension(from_form(s, fb)) == 0) break;
    }
    const Matrix c0 = 3 * oracle::random_symmetric(rng, n);
    const Matrix c1 = 3 * oracle::random_symmetric(rng, n);
    long first = 0;
    for (int k = 0; k <= 6; ++k) {
      const double sh = k / 6.0;
      const OperatorPath h{{0, 1},
                           [=](double t) {
                             const Matrix bump = t * (1 - t) * ((1 - sh) * c0 + sh * c1);
                             return from_form(s, (1 - t) * fa + t * fb + bump);
                           },
                           "homotopy"};
      const long v = spectral_flow(h).value;
      if (k == 0) first = v;
      EXPECT_EQ(v, first) << "s = " << sh;
    }
  }
}

TEST(SpectralFlow, EqualsEndpointMorseDifference) {
  std::mt19937_64 rng(27);
  for (int trial = 0; trial < 20; ++trial) {
    const InnerProductSpace s(oracle::random_spd(rng, 2 + trial % 6));
    const OperatorPath p = random_path(rng, s);
    const SpectralFlowResult r = spectral_flow(p);
    EXPECT_EQ(r.value, static_cast<long>(morse_index(p.evaluate(0))) - static_cast<long>(morse_index(p.evaluate(1))));
    long sum = 0;
    for (const Crossing& c : r.crossings) sum += c.sign;
    EXPECT_EQ(sum, r.value);
  }
}

TEST(SpectralFlow, ConcatenationIsAdditive) {
  std::mt19937_64 rng(28);
  for (int trial = 0; trial < 10; ++trial) {
    const InnerProductSpace s(oracle::random_spd(rng, 4));
    OperatorPath p = random_path(rng, s);
    const double mid = 0.37;
    if (kernel_dimension(p.evaluate(mid))) continue;
    OperatorPath left = p, right = p;
    left.interval = {0, mid};
    right.interval = {mid, 1};
    EXPECT_EQ(spectral_flow(p).value, spectral_flow(left).value + spectral_flow(right).value);
  }
}

TEST(RefineEigenvalueRoot, FindsLinearRoot) {
  auto spectrum = [](double t) {
    SpectrumAt s;
    s.eigenvalues = Vector(2);
    s.eigenvalues << t - 0.3, 5.0;
    return s;
  };
  EXPECT_NEAR(refine_eigenvalue_root(spectrum, 0.0, 1.0, 0, {}), 0.3, 1e-12);
}
