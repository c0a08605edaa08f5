#include "permk/argen.hpp"
#include "permk/kernels.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

using namespace permk;

namespace {

std::vector<double> random_p(std::mt19937_64& g, std::size_t k, double total) {
  std::uniform_real_distribution<double> u(0.05, 1.0);
  std::vector<double> p(k);
  double s = 0.0;
  for (auto& x : p) s += (x = u(g));
  for (auto& x : p) x *= total / s;
  return p;
}

double sorted_root(const RootSet& r, std::size_t i) {
  std::vector<double> re;
  for (const auto& q : r.roots) re.push_back(q.real());
  std::sort(re.begin(), re.end());
  return re[i];
}

}  // namespace

TEST(PhiRecursive, HandRecursion) {
  const auto ph = phi_recursive({0.5, 0.25}, 4);
  EXPECT_DOUBLE_EQ(ph(1), 1.0);
  EXPECT_DOUBLE_EQ(ph(2), 0.5);
  EXPECT_DOUBLE_EQ(ph(3), 0.5);
  EXPECT_DOUBLE_EQ(ph(4), 0.375);
  EXPECT_FALSE(ph.c1.has_value());
}

TEST(PhiRecursive, SecondTermIsFirstCoefficient) {
  std::mt19937_64 g(3);
  for (int rep = 0; rep < 20; ++rep) {
    const auto p = random_p(g, 1 + rep % 4, 0.9);
    EXPECT_DOUBLE_EQ(phi_recursive(p, 2)(2), p[0]);
  }
}

TEST(PhiRecursive, UnitSumConvergesToC1) {
  const auto ph = phi_recursive({0.5, 0.5}, 80);
  ASSERT_TRUE(ph.c1.has_value());
  EXPECT_NEAR(*ph.c1, 2.0 / 3.0, 1e-15);
  EXPECT_NEAR(ph(80), 2.0 / 3.0, 1e-15);
  // psi_n = phi_n - c1 alternates with ratio -1/2.
  for (std::size_t n = 2; n < 20; ++n) EXPECT_NEAR(ph.psi[n] / ph.psi[n - 1], -0.5, 1e-8);
}

TEST(CharRoots, GoldenPair) {
  const auto r = char_roots({0.5, 0.25});
  ASSERT_EQ(r.roots.size(), 2u);
  EXPECT_NEAR(sorted_root(r, 0), -(1 + std::sqrt(5.0)), 1e-12);
  EXPECT_NEAR(sorted_root(r, 1), std::sqrt(5.0) - 1, 1e-12);
  EXPECT_EQ(r.classification, RootSet::Class::outside_unit_disk);
  EXPECT_LE(r.max_residual, 1e-10);
}

TEST(CharRoots, UnitRootCase) {
  const auto r = char_roots({0.5, 0.5});
  EXPECT_EQ(r.classification, RootSet::Class::unit_root_simple);
  EXPECT_NEAR(sorted_root(r, 0), -2.0, 1e-12);
  EXPECT_NEAR(sorted_root(r, 1), 1.0, 1e-12);
}

TEST(CharRoots, DoubleRootFamily) {
  const auto r = char_roots({1.0 / 3, 5.0 / 9, 1.0 / 9});
  ASSERT_EQ(r.roots.size(), 2u);
  int total = 0;
  for (std::size_t i = 0; i < r.roots.size(); ++i) {
    total += r.multiplicity[i];
    if (std::abs(r.roots[i] - cplx(-3.0)) < 1e-6) EXPECT_EQ(r.multiplicity[i], 2);
    if (std::abs(r.roots[i] - cplx(1.0)) < 1e-9) EXPECT_EQ(r.multiplicity[i], 1);
  }
  EXPECT_EQ(total, 3);
  EXPECT_EQ(r.classification, RootSet::Class::unit_root_simple);
}

TEST(PartialFractions, SimpleRootsMatchLinearSolve) {
  // phi_n = sum_l B_1(q_l) q_l^{-n}; fit B from phi_1, phi_2 independently.
  const std::vector<double> p{0.5, 0.25};
  const auto t = partial_fractions(p);
  const cplx q1 = t.roots.roots[0], q2 = t.roots.roots[1];
  Eigen::Matrix2cd M;
  M << 1.0 / q1, 1.0 / q2, 1.0 / (q1 * q1), 1.0 / (q2 * q2);
  const Eigen::Vector2cd B = M.partialPivLu().solve(Eigen::Vector2cd(1.0, 0.5));
  EXPECT_LE(std::abs(t.B[0][0] - B(0)), 1e-12);
  EXPECT_LE(std::abs(t.B[1][0] - B(1)), 1e-12);
  EXPECT_LE(t.reconstruction_residual, 1e-9);
}

TEST(PartialFractions, UnitRootCoefficientIsC1) {
  const auto t = partial_fractions({0.5, 0.5});
  for (std::size_t l = 0; l < t.roots.roots.size(); ++l)
    if (std::abs(t.roots.roots[l] - cplx(1.0)) < 1e-9) EXPECT_NEAR(t.B[l][0].real(), 2.0 / 3.0, 1e-12);
}

TEST(PartialFractions, SingleLagReconstructs) {
  const auto t = partial_fractions({0.4});
  ASSERT_EQ(t.roots.roots.size(), 1u);
  EXPECT_NEAR(t.roots.roots[0].real(), 2.5, 1e-12);
  EXPECT_LE(t.reconstruction_residual, 1e-9);
  const auto ph = phi_closed({0.4}, 20);
  for (std::size_t n = 1; n <= 20; ++n) EXPECT_NEAR(ph(n), std::pow(0.4, double(n - 1)), 1e-13);
}

TEST(PhiClosed, MatchesRecursionOnSuite) {
  const std::vector<std::vector<double>> suite = {
      {0.5, 0.25}, {0.5, 0.5}, {1.0 / 3, 5.0 / 9, 1.0 / 9}, {0.2, 0.1, 0.5}, {0.6, 0.2, 0.1, 0.05}};
  for (const auto& p : suite) {
    const auto c = phi_closed(p, 500), r = phi_recursive(p, 500);
    double gap = 0.0;
    for (std::size_t n = 1; n <= 500; ++n) gap = std::max(gap, std::abs(c(n) - r(n)));
    EXPECT_LE(gap, 1e-10);
    EXPECT_LE(c.imag_residue, 1e-10);
    EXPECT_DOUBLE_EQ(c(1), 1.0);
  }
}

TEST(PhiClosed, ComplexRootsPresent) {
  const auto r = char_roots({0.2, 0.1, 0.5});
  bool complex_pair = false;
  for (const auto& q : r.roots) complex_pair = complex_pair || std::abs(q.imag()) > 1e-3;
  EXPECT_TRUE(complex_pair);
}

TEST(CStar, RationalExample) {
  const auto c = c_star({0.5, 0.25});
  EXPECT_NEAR(c.value, 48.0 / 25.0, 1e-9);
  EXPECT_NEAR(c.value_direct, 48.0 / 25.0, 1e-9);
  EXPECT_NEAR(c.upper, 16.0 / 7.0, 1e-15);
  EXPECT_NEAR(c.lower, 1.25, 1e-15);
  EXPECT_NEAR(c.inv_P1, 4.0, 1e-14);
  EXPECT_NEAR(c.norm1, 4.0, 1e-9);
}

TEST(CStar, SmallCoefficientsApproachOne) {
  EXPECT_NEAR(c_star({1e-6}).value, 1.0, 1e-11);
  EXPECT_NEAR(c_star({1e-5, 1e-6}).value, 1.0, 1e-9);
}

TEST(CStar, UnitSumRejected) { EXPECT_THROW(c_star({0.5, 0.5}), Failure); }

TEST(CStar, BoundsOnRandomP) {
  std::mt19937_64 g(19);
  std::uniform_real_distribution<double> tot(0.05, 0.97);
  for (int rep = 0; rep < 40; ++rep) {
    const auto p = random_p(g, 1 + rep % 5, tot(g));
    const auto c = c_star(p);
    double S = 0.0;
    for (double x : p) S += x;
    EXPECT_GE(c.value, 1.0 + p[0] * p[0] - 1e-12);
    EXPECT_LE(c.value, 1.0 / (1.0 - S * S) + 1e-12);
    EXPECT_NEAR(c.value, c.value_direct, 1e-9 * c.value);
    const auto ph = phi_recursive(p, 200);
    for (std::size_t n = 2; n <= 200; ++n) {
      EXPECT_GE(ph(n), 0.0);
      EXPECT_LT(ph(n), 1.0);
    }
  }
}

TEST(CStar, KernelDiagonalRisesToCStar) {
  const std::vector<double> p{0.5, 0.25};
  const double cs = c_star(p).value;
  const auto d = diagonal_table(ARk{p}, 400);
  for (std::size_t n = 1; n < d.size(); ++n) EXPECT_GE(d[n], d[n - 1]);
  EXPECT_LE(d.back(), cs + 1e-12);
  EXPECT_NEAR(d.back(), cs, 1e-6);
}

TEST(UnitRoot, DiagonalGrowsLikeC1SquaredN) {
  const std::vector<double> p{0.5, 0.5};
  const double c1 = 2.0 / 3.0;
  const auto d = diagonal_table(ARk{p}, 2000);
  // V_{n,n} - c1^2 n converges, so its spread over the second half is tiny.
  double lo = 1e300, hi = -1e300;
  for (std::size_t n = 1000; n <= 2000; ++n) {
    const double gap = d[n - 1] - c1 * c1 * double(n);
    lo = std::min(lo, gap), hi = std::max(hi, gap);
  }
  EXPECT_LE(hi - lo, 1e-9);
}

TEST(AnalyzeArk, RecordsMonotonicity) {
  const auto a = analyze_ark({0.25, 0.5});
  EXPECT_FALSE(a.non_increasing);
  EXPECT_TRUE(a.cstar.has_value());
  EXPECT_TRUE(analyze_ark({0.5, 0.25}).non_increasing);
}
