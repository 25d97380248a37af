// phmm/tests/test_stats.cc

// Copyright 2026  The phmm Authors

// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#include <gtest/gtest.h>

#include <cmath>

#include "phmm/error.hpp"
#include "phmm/rng.hpp"
#include "phmm/stats.hpp"

namespace phmm {
namespace {

GroupSamples hand_fixture() {
  GroupSamples g;
  g.add("a", {1, 2, 3});
  g.add("b", {2, 3, 4});
  g.add("c", {10, 11, 12});
  return g;
}

TEST(Anova, HandFixtureClosedForm) {
  const AnovaResult r = one_way_anova(hand_fixture());
  // SSB = 3 * ((2 - 16/3)^2 + (3 - 16/3)^2 + (11 - 16/3)^2) = 146, SSW = 6.
  EXPECT_NEAR(r.ss_between, 146.0, 1e-12);
  EXPECT_NEAR(r.ss_within, 6.0, 1e-12);
  EXPECT_NEAR(r.f, 73.0, 1e-9);
  EXPECT_EQ(r.df_between, 2);
  EXPECT_EQ(r.df_within, 6);
  // F(2, d2) upper tail: (1 + 2F/d2)^(-d2/2).
  EXPECT_NEAR(r.p, std::pow(1.0 + 2.0 * 73.0 / 6.0, -3.0), 1e-12);
}

TEST(Anova, TwoGroupsFEqualsPooledTSquared) {
  Rng rng(3);
  std::vector<double> a, b;
  for (int i = 0; i < 9; ++i) a.push_back(rng.normal());
  for (int i = 0; i < 14; ++i) b.push_back(0.7 + 1.3 * rng.normal());
  GroupSamples g;
  g.add("a", a);
  g.add("b", b);
  auto mean = [](const std::vector<double>& v) {
    double s = 0;
    for (double x : v) s += x;
    return s / v.size();
  };
  const double ma = mean(a), mb = mean(b);
  double ssa = 0, ssb = 0;
  for (double x : a) ssa += (x - ma) * (x - ma);
  for (double x : b) ssb += (x - mb) * (x - mb);
  const double sp2 = (ssa + ssb) / (a.size() + b.size() - 2);
  const double t = (ma - mb) / std::sqrt(sp2 * (1.0 / a.size() + 1.0 / b.size()));
  EXPECT_NEAR(one_way_anova(g).f, t * t, 1e-9 * t * t);
}

TEST(Anova, DegenerateCases) {
  GroupSamples same;
  same.add("a", {2, 2, 2});
  same.add("b", {2, 2, 2});
  same.add("c", {2, 2, 2});
  AnovaResult r = one_way_anova(same);
  EXPECT_EQ(r.f, 0.0);
  EXPECT_EQ(r.p, 1.0);

  GroupSamples split;
  split.add("a", {1, 1});
  split.add("b", {3, 3});
  r = one_way_anova(split);
  EXPECT_TRUE(r.zero_within);
  EXPECT_EQ(r.p, 0.0);

  GroupSamples one;
  one.add("a", {1, 2});
  EXPECT_THROW(one_way_anova(one), ValidationError);
  GroupSamples tiny;
  tiny.add("a", {1});
  tiny.add("b", {2});
  EXPECT_THROW(one_way_anova(tiny), ValidationError);
}

TEST(Anova, InvariantToOrderShiftAndScale) {
  Rng rng(5);
  GroupSamples g;
  for (int k = 0; k < 3; ++k) {
    std::vector<double> v;
    for (int i = 0; i < 8; ++i) v.push_back(k * 0.5 + rng.normal());
    g.add("g" + std::to_string(k), v);
  }
  const AnovaResult base = one_way_anova(g);
  GroupSamples perm;
  perm.add("g2", g.values[2]);
  perm.add("g0", g.values[0]);
  perm.add("g1", g.values[1]);
  EXPECT_NEAR(one_way_anova(perm).f, base.f, 1e-10 * base.f);
  GroupSamples moved = g;
  for (auto& v : moved.values) {
    for (double& x : v) x = 3.0 * x + 100.0;
  }
  EXPECT_NEAR(one_way_anova(moved).f, base.f, 1e-8 * base.f);
  EXPECT_NEAR(one_way_anova(moved).p, base.p, 1e-9);
}

TEST(StudentizedRange, MatchesReferenceValues) {
  // Reference values from scipy.stats.studentized_range.
  EXPECT_NEAR(studentized_range_cdf(3.51, 3, 27), 0.9502710490351416, 1e-6);
  EXPECT_NEAR(studentized_range_cdf(2.0, 3, 10), 0.6294553249645047, 1e-6);
  EXPECT_NEAR(studentized_range_cdf(5.0, 4, 20), 0.9897124654059845, 1e-6);
  EXPECT_NEAR(studentized_range_cdf(1.0, 2, 5), 0.48891591956971947, 1e-6);
  EXPECT_NEAR(studentized_range_cdf(3.0, 5, 1000), 0.788271156758619, 1e-6);
  EXPECT_NEAR(studentized_range_cdf(0.5, 3, 3), 0.06513412295094398, 1e-6);
}

TEST(StudentizedRange, TableEntry) {
  EXPECT_NEAR(studentized_range_sf(3.51, 3, 27), 0.05, 0.002);
}

TEST(StudentizedRange, TwoMeansReduceToT) {
  // For k = 2, Q = sqrt(2) |t|, so P(Q <= q) = P(|t_df| <= q / sqrt(2)).
  // With df large the t tends to a normal: P(|Z| <= 2) = 0.9544997361.
  EXPECT_NEAR(studentized_range_cdf(2.0 * std::sqrt(2.0), 2, 1e6), 0.9544997361036416, 1e-7);
}

TEST(Tukey, SeparatedGroupsPattern) {
  Rng rng(9);
  GroupSamples g;
  for (double m : {0.0, 0.1, 10.0}) {
    std::vector<double> v;
    for (int i = 0; i < 10; ++i) v.push_back(m + 0.1 * rng.normal());
    g.add("m" + std::to_string(m), v);
  }
  const auto pairs = tukey_hsd(g);
  ASSERT_EQ(pairs.size(), 3u);
  EXPECT_FALSE(pairs[0].significant);  // (0, 1)
  EXPECT_TRUE(pairs[1].significant);   // (0, 2)
  EXPECT_TRUE(pairs[2].significant);   // (1, 2)
}

TEST(Tukey, IdenticalGroups) {
  GroupSamples g;
  g.add("a", {1, 2, 3});
  g.add("b", {1, 2, 3});
  const auto pairs = tukey_hsd(g);
  EXPECT_EQ(pairs[0].q, 0.0);
  EXPECT_EQ(pairs[0].p, 1.0);
}

TEST(Tukey, HandFixtureAgainstReference) {
  // scipy.stats.tukey_hsd on the hand fixture.
  const auto pairs = tukey_hsd(hand_fixture());
  EXPECT_NEAR(pairs[0].q, 1.0 / std::sqrt(1.0 / 3.0), 1e-12);
  EXPECT_NEAR(pairs[0].p, 4.82727280e-01, 1e-6);
  EXPECT_NEAR(pairs[1].p, 8.18439059e-05, 1e-6);
  EXPECT_NEAR(pairs[2].p, 1.60247879e-04, 1e-6);
  EXPECT_FALSE(pairs[0].significant);
  EXPECT_TRUE(pairs[1].significant);
  EXPECT_TRUE(pairs[2].significant);
}

TEST(MeanCi, ClosedForm) {
  std::vector<double> v;
  for (int i = 1; i <= 100; ++i) v.push_back(i);
  const MeanCi ci = mean_ci(v);
  const double s = std::sqrt(100.0 * 101.0 / 12.0);  // sample sd of 1..100
  EXPECT_NEAR(ci.mean, 50.5, 1e-12);
  EXPECT_NEAR(ci.hi - ci.mean, 1.959963984540054 * s / 10.0, 1e-9);
  EXPECT_NEAR(ci.mean - ci.lo, 1.959963984540054 * s / 10.0, 1e-9);
  const MeanCi flat = mean_ci({4, 4, 4});
  EXPECT_EQ(flat.lo, 4.0);
  EXPECT_EQ(flat.hi, 4.0);
  const MeanCi zero = mean_ci(v, 0.0);
  EXPECT_EQ(zero.lo, zero.mean);
  EXPECT_THROW(mean_ci({1.0}), ValidationError);
}

TEST(Spearman, BasicAndDegenerate) {
  const std::vector<double> x = {-3, -2, -1, 0, 1, 2, 3};
  EXPECT_NEAR(spearman(x, x).rho, 1.0, 1e-15);
  std::vector<double> neg;
  for (double v : x) neg.push_back(-v);
  EXPECT_NEAR(spearman(x, neg).rho, -1.0, 1e-15);
  std::vector<double> cubed;
  for (double v : x) cubed.push_back(std::exp(v) + v * v * v);
  EXPECT_NEAR(spearman(x, cubed).rho, 1.0, 1e-15);
  const Correlation flat = spearman(x, std::vector<double>(7, 1.0));
  EXPECT_TRUE(flat.degenerate);
  EXPECT_EQ(flat.rho, 0.0);
}

TEST(Spearman, TiesUseAverageRanks) {
  EXPECT_EQ(average_ranks({10, 20, 20, 5}), (std::vector<double>{2, 3.5, 3.5, 1}));
  // scipy.stats.spearmanr([1,2,3,4,5], [1,2,2,3,5]) = 0.9746794344808963
  EXPECT_NEAR(spearman({1, 2, 3, 4, 5}, {1, 2, 2, 3, 5}).rho, 0.9746794344808963, 1e-12);
}

TEST(Quantile, Type7) {
  EXPECT_EQ(median({3, 1, 2}), 2.0);
  EXPECT_EQ(median({4, 1, 2, 3}), 2.5);
  EXPECT_NEAR(quantile({1, 2, 3, 4, 5}, 0.25), 2.0, 1e-15);
  EXPECT_NEAR(quantile({1, 2, 3, 4}, 0.75), 3.25, 1e-15);
}

}  // namespace
}  // namespace phmm
