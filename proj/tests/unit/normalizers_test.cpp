#include "permk/normalizers.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace permk;

namespace {

Sequence exp_over_log() {
  std::vector<double> v(5000);
  v[0] = 1.0;
  for (std::size_t j = 2; j <= v.size(); ++j) v[j - 1] = std::exp(double(j) / std::log(double(j)));
  return Sequence::from_values(v);
}

}  // namespace

TEST(Koval, GeometricGrowthGivesLogJ) {
  const Sequence s = Sequence::exp_affine(0, 2);
  for (std::size_t j : {2u, 3u, 10u, 500u}) EXPECT_NEAR(koval(s, j), std::log(double(j - 1)), 1e-12);
}

TEST(Koval, LinearTelescopes) {
  EXPECT_NEAR(koval(Sequence::affine(0, 1), 10), std::log(std::log(10.0)), 1e-12);
  EXPECT_NEAR(koval(Sequence::affine(0, 1), 10), 0.8340, 5e-5);
}

TEST(Koval, SingleSummand) {
  EXPECT_NEAR(koval(Sequence::from_values({1.0, std::exp(1.0)}), 2), 0.0, 1e-15);
  EXPECT_THROW(koval(Sequence::affine(0, 1), 1), Failure);
}

TEST(Koval, TableAgreesWithPointwise) {
  const Sequence s = Sequence::power(1, 1.7);
  const auto t = koval_table(s, 200);
  for (std::size_t j = 2; j <= 200; j += 17) EXPECT_NEAR(t[j - 1], koval(s, j), 1e-12);
}

TEST(Koval, CeilingHoldsOnProbes) {
  for (const Sequence& s : {Sequence::affine(0, 1), Sequence::geometric(1, 2), Sequence::power(3, 2.5), exp_over_log()}) {
    const auto t = koval_table(s, 3000);
    for (std::size_t j = 3; j <= 3000; j += 7) EXPECT_LE(t[j - 1], koval_ceiling(s, j) + 1e-12);
  }
}

TEST(Koval, TruncationLevelIsAsymptoticallyIrrelevant) {
  const Sequence s = Sequence::geometric(1, 2);
  const double base = koval(s, 10000, 1.0);
  for (double M : {0.5, 5.0}) EXPECT_NEAR(koval(s, 10000, M) / base, 1.0, 0.05);
}

TEST(Regime, Classification) {
  EXPECT_EQ(regime(Sequence::geometric(1, 2), 10, 2000).regime, Regime::log_j);
  EXPECT_EQ(regime(Sequence::affine(0, 1), 10, 2000).regime, Regime::log_log_s);
  const auto r = regime(exp_over_log(), 10, 4000);
  EXPECT_EQ(r.regime, Regime::indeterminate);
  EXPECT_TRUE(r.ceiling_holds);
}

TEST(Predict, AR1StationaryLimit) {
  Hypotheses h;
  h.x_limit = 0.5;
  const auto o = predict(AR1{Sequence::constant(0.5)}, FClass::c0, 0.5, h);
  ASSERT_TRUE(o.prediction.has_value());
  EXPECT_EQ(o.prediction->normalizer_label, "log j");
  EXPECT_DOUBLE_EQ(o.prediction->constant, 4.0 / 3.0);
  const auto t = o.prediction->table(5);
  EXPECT_DOUBLE_EQ(t[4], std::log(5.0));
}

TEST(Predict, UnitRootArk) {
  const auto o = predict(ARk{{0.5, 0.5}}, FClass::potential_l1, 1.0);
  ASSERT_TRUE(o.prediction.has_value());
  EXPECT_EQ(o.prediction->normalizer_label, "j log log j");
  EXPECT_NEAR(o.prediction->constant, 4.0 / 9.0, 1e-15);
  EXPECT_EQ(o.prediction->alpha_validity, AlphaValidity::half_and_above);

  Hypotheses h;
  h.f_little_o_sqrt = true;
  EXPECT_EQ(predict(ARk{{0.5, 0.5}}, FClass::potential_l1, 1.0, h).prediction->alpha_validity, AlphaValidity::all);
  EXPECT_EQ(predict(ARk{{0.5, 0.5}}, FClass::zero, 1.0).prediction->alpha_validity, AlphaValidity::all);
}

TEST(Predict, MinKernelGeometric) {
  Hypotheses h;
  h.growth = Hypotheses::Growth::geometric;
  const Sequence s = Sequence::exp_affine(0, 2);
  const auto o = predict(MinKernel{s}, FClass::potential_l1, 0.5, h);
  ASSERT_TRUE(o.prediction.has_value());
  EXPECT_EQ(o.prediction->normalizer_label, "s_j log j");
  EXPECT_DOUBLE_EQ(o.prediction->constant, 1.0);
  const auto t = o.prediction->table(4);
  EXPECT_NEAR(t[3], s(4) * std::log(4.0), 1e-9 * t[3]);
}

TEST(Predict, AR1CriticalConstant) {
  for (double c : {0.0, 0.5, 2.0}) {
    Hypotheses h;
    h.critical_c = c;
    const auto o = predict(AR1{Sequence::root_gap(c, 1.0)}, FClass::zero, 0.5, h);
    ASSERT_TRUE(o.prediction.has_value());
    EXPECT_DOUBLE_EQ(o.prediction->constant, 1.0 / (1.0 + c));
    EXPECT_EQ(o.prediction->normalizer_label, "j log log j");
  }
}

TEST(Predict, RegularVariation) {
  Hypotheses h;
  h.regular_variation_index = 0.3;
  const auto o = predict(AR1{Sequence::root_gap(1.0, 0.7)}, FClass::zero, 0.5, h);
  ASSERT_TRUE(o.prediction.has_value());
  EXPECT_DOUBLE_EQ(o.prediction->constant, 0.7);
  EXPECT_EQ(o.prediction->normalizer_label, "U_jj log j");
}

TEST(Predict, StableArkUsesCStar) {
  const auto o = predict(ARk{{0.5, 0.25}}, FClass::c0, 0.5);
  ASSERT_TRUE(o.prediction.has_value());
  EXPECT_NEAR(o.prediction->constant, 1.92, 1e-9);
}

TEST(Predict, Refusals) {
  Hypotheses osc;
  osc.growth = Hypotheses::Growth::oscillating;
  EXPECT_FALSE(predict(MinKernel{Sequence::affine(0, 1)}, FClass::zero, 0.5, osc).prediction);
  EXPECT_FALSE(predict(MinKernel{Sequence::affine(0, 1)}, FClass::c0, 0.5).prediction);
  EXPECT_FALSE(predict(AR1{Sequence::constant(0.5)}, FClass::zero, 0.5).prediction);
  EXPECT_FALSE(predict(ARk{{0.25, 0.5}}, FClass::zero, 0.5).prediction);
  EXPECT_FALSE(predict(ARk{{0.5, 0.5}}, FClass::c0, 0.5).prediction);
  const auto o = predict(ExpKernel{Sequence::affine(0, 1)}, FClass::c0, 0.5);
  EXPECT_FALSE(o.prediction);
  EXPECT_FALSE(o.reason.empty());
}

TEST(Predict, NormalizerNondecreasingBeyondPrefix) {
  Hypotheses h;
  h.increments_bounded_below = true;
  const auto o = predict(ExpKernel{Sequence::affine(0, 1)}, FClass::zero, 0.5, h);
  ASSERT_TRUE(o.prediction.has_value());
  const auto t = o.prediction->table(1000);
  for (std::size_t j = 2; j < t.size(); ++j) EXPECT_GE(t[j], t[j - 1]);
}
