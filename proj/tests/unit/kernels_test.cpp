#include "permk/kernels.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

using namespace permk;

namespace {

Mat dense_inverse(const Mat& K) { return K.fullPivLu().inverse(); }

// (r^{|k-j|} - r^{k+j}) / (1 - r^2): AR(1) covariance with constant coefficient r.
double ar1_oracle(double r, int j, int k) {
  return (std::pow(r, std::abs(k - j)) - std::pow(r, k + j)) / (1.0 - r * r);
}

Sequence random_increasing(std::mt19937_64& g, std::size_t n) {
  std::uniform_real_distribution<double> step(0.05, 3.0);
  std::vector<double> v(n);
  double acc = 0.0;
  for (auto& x : v) x = (acc += step(g));
  return Sequence::from_values(v);
}

}  // namespace

TEST(BuildKernel, MinKernelIsSMinimum) {
  const auto K = build_kernel(MinKernel{Sequence::from_values({1, 2, 3})}, Window{0, 3}).K;
  Mat expected(3, 3);
  expected << 1, 1, 1, 1, 2, 2, 1, 2, 3;
  EXPECT_LE((K - expected).cwiseAbs().maxCoeff(), 0.0);
}

TEST(BuildKernel, AR1MatchesStationaryFormula) {
  const KernelEvaluator U(AR1{Sequence::constant(0.5)}, 40);
  EXPECT_DOUBLE_EQ(U(1, 2), 0.5);
  EXPECT_DOUBLE_EQ(U(2, 2), 1.25);
  for (int j = 1; j <= 40; j += 3)
    for (int k = 1; k <= 40; k += 5) EXPECT_NEAR(U(j, k), ar1_oracle(0.5, j, k), 1e-13);
}

TEST(BuildKernel, ARkDiagonalFromImpulseResponse) {
  const KernelEvaluator U(ARk{{0.5, 0.25}}, 10);
  EXPECT_DOUBLE_EQ(U(1, 1), 1.0);
  EXPECT_DOUBLE_EQ(U(2, 2), 1.25);
  for (std::size_t n = 1; n < 10; ++n) EXPECT_GT(U(n + 1, n + 1), U(n, n));
}

TEST(BuildKernel, AR1DiagonalRecursion) {
  const Sequence x = Sequence::from_values({0.2, 0.3, 0.5, 0.6, 0.7, 0.8, 0.9});
  const KernelEvaluator U(AR1{x}, 7);
  for (std::size_t j = 1; j < 7; ++j) EXPECT_NEAR(U(j + 1, j + 1), x(j) * x(j) * U(j, j) + 1.0, 1e-14);
}

TEST(Generator, MinKernelUnitSteps) {
  const auto G = build_generator(MinKernel{Sequence::affine(0, 1)}, 8);
  for (Index i = 0; i < 7; ++i) {
    EXPECT_DOUBLE_EQ(G(i, i), -2.0);
    EXPECT_DOUBLE_EQ(G(i, i + 1), 1.0);
  }
}

TEST(Generator, AR1Tridiagonal) {
  const double r = 0.3;
  const auto G = build_generator(AR1{Sequence::constant(r)}, 10);
  for (Index i = 1; i < 9; ++i) {
    EXPECT_NEAR(G(i, i), -(1 + r * r), 1e-15);
    EXPECT_NEAR(G(i, i - 1), r, 1e-15);
    EXPECT_NEAR(G(i, i + 1), r, 1e-15);
  }
}

TEST(Generator, ARkBandAndRowSum) {
  const auto G = build_generator(ARk{{0.5, 0.25}}, 20);
  const Index i = 10;
  EXPECT_NEAR(G(i, i), -21.0 / 16.0, 1e-15);
  EXPECT_NEAR(G(i, i + 1), 3.0 / 8.0, 1e-15);
  EXPECT_NEAR(G(i, i - 2), 1.0 / 4.0, 1e-15);
  EXPECT_NEAR(G.row_sums()(i), -1.0 / 16.0, 1e-15);
  EXPECT_TRUE(check_q_matrix(G).passed);
}

TEST(Generator, IncreasingPIsRefused) {
  try {
    build_generator(ARk{{0.25, 0.5}}, 10);
    FAIL() << "expected refusal";
  } catch (const Failure& e) {
    EXPECT_EQ(e.key(), "ark-generator-monotone-p");
    EXPECT_EQ(e.kind(), FailureKind::inadmissible);
  }
}

TEST(QMatrixCheck, ZeroMatrixFails) {
  GeneratorMatrix G(4, 1);
  const auto r = check_q_matrix(G);
  EXPECT_FALSE(r.passed);
  EXPECT_FALSE(r.diagonal_negative);
}

TEST(InverseM, IdentityAndMinKernelPass) {
  EXPECT_TRUE(check_inverse_m_matrix(Mat::Identity(5, 5)).passed);
  EXPECT_TRUE(check_inverse_m_matrix(build_kernel(MinKernel{Sequence::affine(0, 1)}, Window{3, 12})).passed);
}

TEST(WindowInverse, MinKernelExamples) {
  const Sequence s = Sequence::affine(0, 1);
  Mat expected(3, 3);
  expected << 2, -1, 0, -1, 2, -1, 0, -1, 1;
  const auto inv = window_inverse(MinKernel{s}, Window{0, 3});
  EXPECT_TRUE(inv.closed_form);
  EXPECT_LE((inv.inverse - expected).cwiseAbs().maxCoeff(), 1e-15);

  Mat expected2(2, 2);
  expected2 << 4.0 / 3.0, -1, -1, 1;
  EXPECT_LE((window_inverse(MinKernel{s}, Window{2, 2}).inverse - expected2).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(WindowInverse, ClosedFormsMatchDense) {
  const std::vector<KernelSpec> specs = {
      MinKernel{Sequence::power(1.0, 1.5)},
      ScaledMinKernel{Sequence::affine(0, 1), Sequence::affine(1, 0.5)},
      ExpKernel{Sequence::power(1.0, 0.5)},
      AR1{Sequence::constant(0.7)},
      AR1Shifted{Sequence::constant(0.5), 1.5},
      ARk{{0.5, 0.25}},
  };
  for (const auto& spec : specs) {
    const Window w{4, 30};
    const auto inv = window_inverse(spec, w);
    const Mat D = dense_inverse(build_kernel(spec, w).K);
    EXPECT_LE((inv.inverse - D).cwiseAbs().maxCoeff(), 1e-9 * D.cwiseAbs().maxCoeff()) << family_name(spec);
    EXPECT_LE(inv.product_residual, 1e-12) << family_name(spec);
  }
}

TEST(WindowInverse, MinInverseRowSumsNonnegative) {
  std::mt19937_64 g(7);
  for (int rep = 0; rep < 10; ++rep) {
    const Sequence s = random_increasing(g, 60);
    const auto inv = window_inverse(MinKernel{s}, Window{5, 40}).inverse;
    const Vec rs = inv.rowwise().sum();
    EXPECT_NEAR(rs(0), 1.0 / s(6), 1e-12);
    for (Index i = 1; i < rs.size(); ++i) EXPECT_NEAR(rs(i), 0.0, 1e-10);
  }
}

TEST(Duality, InteriorResidualsVanish) {
  const std::vector<KernelSpec> specs = {MinKernel{Sequence::affine(0, 1)}, AR1{Sequence::constant(0.5)},
                                         ExpKernel{Sequence::affine(0, 0.7)}, ARk{{0.5, 0.25}}};
  for (const auto& spec : specs) {
    const auto d = verify_duality(spec, Window{0, 50}, 1e-10);
    EXPECT_TRUE(d.passed) << family_name(spec) << " residual " << d.max_residual;
    EXPECT_GT(d.interior_rows, 0u);
  }
  const auto d = verify_duality(ARk{{0.5, 0.25}}, Window{0, 50}, 1e-12);
  ASSERT_TRUE(d.ltl_residual.has_value());
  EXPECT_LE(*d.ltl_residual, 1e-12);
}

TEST(Admissibility, ExpGridShiftRange) {
  // b_j = 2^{j-1}, s_j = 4^{j-1}: admissible iff -1 < Delta <= 2.
  const Sequence s = Sequence::geometric(0.25, 4.0), b = Sequence::geometric(0.5, 2.0);
  EXPECT_TRUE(shift_admissible(ShiftedScaled{s, b, 0.0}).admissible);
  EXPECT_TRUE(shift_admissible(ShiftedScaled{s, b, 2.0}).admissible);
  EXPECT_TRUE(shift_admissible(ShiftedScaled{s, b, -0.99}).admissible);
  EXPECT_FALSE(shift_admissible(ShiftedScaled{s, b, 2.01}).admissible);
  const auto low = shift_admissible(ShiftedScaled{s, b, -1.0});
  EXPECT_FALSE(low.admissible);
  EXPECT_EQ(low.constraint, "shift-lower-bound");
  EXPECT_NEAR(shift_admissible(ShiftedScaled{s, b, 0.0}).upper, 2.0, 1e-14);
}

TEST(Admissibility, ARkGenThreshold) {
  const std::vector<double> p{0.5, 0.25};
  EXPECT_NEAR(ark_shift_threshold(p), 5.0 / 16.0, 1e-15);
  EXPECT_TRUE(shift_admissible(ARkGen{p, 0.5}).admissible);
  EXPECT_FALSE(shift_admissible(ARkGen{p, 0.3}).admissible);
}

TEST(Admissibility, AR1ShiftedBound) {
  const Sequence x = Sequence::constant(0.5);  // bound 1/(x1(1-x1)) = 4
  EXPECT_TRUE(shift_admissible(AR1Shifted{x, 2.0}).admissible);
  const auto a = shift_admissible(AR1Shifted{x, 2.1});
  EXPECT_FALSE(a.admissible);
  EXPECT_EQ(a.constraint, "ar1-shift-bound");
}

TEST(RankOne, ZeroUpdateIsIdentity) {
  const auto U = build_kernel(ExpKernel{Sequence::affine(0, std::log(2.0))}, Window{0, 6});
  EXPECT_LE((rank_one_update(U, 1, 2, 0.0).K - U.K).cwiseAbs().maxCoeff(), 0.0);
}

TEST(RankOne, ExpExampleIsAsymmetric) {
  const KernelSpec base = ExpKernel{Sequence::affine(0, std::log(2.0))};  // e^{-(v2-v1)} = 1/2
  const auto U = build_kernel(base, Window{0, 6});
  const auto W = rank_one_update(U, 1, 2, 2.0 / 3.0);
  EXPECT_NEAR(W.K(0, 0), 1.5, 1e-14);
  EXPECT_GT(std::abs(W.K(0, 1) - W.K(1, 0)), 1e-3);

  // Oracle: invert the perturbed generator directly.
  const KernelSpec spec = make_rank_one(base, 1, 2, 2.0 / 3.0);
  EXPECT_TRUE(shift_admissible(spec).admissible);
  const KernelEvaluator E(spec, 6);
  for (std::size_t j = 1; j <= 6; ++j)
    for (std::size_t k = 1; k <= 6; ++k) EXPECT_NEAR(E(j, k), W.K(j - 1, k - 1), 1e-12);
  EXPECT_TRUE(check_inverse_m_matrix(W).passed);
}

TEST(RankOne, BAboveBoundIsInadmissible) {
  const KernelSpec base = ExpKernel{Sequence::affine(0, std::log(2.0))};
  EXPECT_FALSE(shift_admissible(make_rank_one(base, 1, 2, 2.0)).admissible);
}

TEST(KilledWalk, NearestNeighbourGreenFunction) {
  const KilledWalk kw{{{-1, 0.5}, {1, 0.5}}, 1.0, 200};
  const auto r = killed_walk_potential(kw);
  EXPECT_NEAR(r.U00, 1.0 / std::sqrt(3.0), 1e-10);
  EXPECT_LE(r.max_row_sum_error, 1e-6);
  EXPECT_LE(r.max_diag_spread, 1e-6);
}

TEST(KilledWalk, StrongKillingApproachesScaledIdentity) {
  const double beta = 1e6;
  const auto r = killed_walk_potential(KilledWalk{{{-1, 0.5}, {1, 0.5}}, beta, 10});
  const Mat I = Mat::Identity(r.U.rows(), r.U.cols()) / beta;
  EXPECT_LE((r.U - I).cwiseAbs().maxCoeff(), 2.0 / (beta * beta));
}

TEST(Properties, PositivityAndDiagonalDomination) {
  std::mt19937_64 g(11);
  for (int rep = 0; rep < 8; ++rep) {
    const Sequence s = random_increasing(g, 31);
    const KernelSpec spec = MinKernel{s};
    const Mat U = build_kernel(spec, Window{0, 30}).K;
    for (Index j = 0; j < 30; ++j)
      for (Index k = 0; k < 30; ++k) {
        EXPECT_GT(U(j, k), 0.0);
        EXPECT_LE(U(j, k), std::min(U(j, j), U(k, k)) + 1e-15);
      }
    EXPECT_TRUE(diagonal_dominates_inverse_rate(U, build_generator(spec, 30)));
  }
}

TEST(Properties, ExpKernelDecayEnvelope) {
  const Mat U = build_kernel(ExpKernel{Sequence::affine(0, 0.4)}, Window{0, 40}).K;
  const auto env = decay_envelope(U);
  EXPECT_TRUE(env.monotone);
  EXPECT_TRUE(env.holds);
  EXPECT_NEAR(env.lambda, 0.4, 1e-10);
}

TEST(Properties, DiagonalTableMatchesEvaluator) {
  const std::vector<KernelSpec> specs = {AR1{Sequence::root_gap(0.5, 1.0)}, ARk{{0.4, 0.3, 0.1}},
                                         ScaledMinKernel{Sequence::affine(0, 2), Sequence::power(1, 0.25)}};
  for (const auto& spec : specs) {
    const auto d = diagonal_table(spec, 25);
    const KernelEvaluator E(spec, 25);
    for (std::size_t j = 1; j <= 25; ++j) EXPECT_NEAR(d[j - 1], E(j, j), 1e-12 * E(j, j)) << family_name(spec);
  }
}
