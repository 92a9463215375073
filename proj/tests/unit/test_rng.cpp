#include <algorithm>
#include <cmath>
#include <numeric>

#include <gtest/gtest.h>

#include "trlab/rng.hpp"

using namespace trlab;

TEST(Rng, SameSeedAndLabelGiveSameStream) {
  RngStream a(42, "x/y"), b(42, "x/y");
  for (int i = 0; i < 1000; ++i) ASSERT_EQ(a.next_u64(), b.next_u64());
}

TEST(Rng, LabelsAndSeedsSeparateStreams) {
  RngStream a(42, "x/y"), b(42, "x/z"), c(43, "x/y");
  int same_b = 0, same_c = 0;
  for (int i = 0; i < 1000; ++i) {
    const auto va = a.next_u32();
    same_b += va == b.next_u32();
    same_c += va == c.next_u32();
  }
  EXPECT_LT(same_b, 3);
  EXPECT_LT(same_c, 3);
}

TEST(Rng, DeriveMatchesExplicitLabel) {
  RngStream parent(9, "init");
  RngStream child = parent.derive("conv1");
  RngStream direct(9, "init/conv1");
  for (int i = 0; i < 100; ++i) ASSERT_EQ(child.next_u64(), direct.next_u64());
}

TEST(Rng, UniformAndNormalMoments) {
  RngStream s(1, "moments");
  const int n = 200000;
  double su = 0, sn = 0, sn2 = 0;
  for (int i = 0; i < n; ++i) {
    const double u = s.uniform();
    ASSERT_GE(u, 0.0);
    ASSERT_LT(u, 1.0);
    su += u;
    const double z = s.normal();
    sn += z;
    sn2 += z * z;
  }
  EXPECT_NEAR(su / n, 0.5, 4 * std::sqrt(1.0 / 12 / n));
  EXPECT_NEAR(sn / n, 0.0, 4 / std::sqrt(double(n)));
  EXPECT_NEAR(sn2 / n, 1.0, 4 * std::sqrt(2.0 / n));
}

TEST(Rng, BelowIsUnbiasedOverSmallRange) {
  RngStream s(2, "below");
  std::vector<int> counts(7, 0);
  const int n = 70000;
  for (int i = 0; i < n; ++i) counts[s.below(7)]++;
  double chi2 = 0;
  for (int c : counts) chi2 += (c - n / 7.0) * (c - n / 7.0) / (n / 7.0);
  EXPECT_LT(chi2, 22.46);  // 99.9th percentile, 6 dof
}

TEST(Rng, PermutationIsAPermutation) {
  RngStream s(3, "perm");
  auto p = rng_permutation(s, 1000);
  std::vector<std::size_t> sorted = p;
  std::sort(sorted.begin(), sorted.end());
  std::vector<std::size_t> id(1000);
  std::iota(id.begin(), id.end(), 0);
  EXPECT_EQ(sorted, id);
  EXPECT_NE(p, id);
}

TEST(Rng, TruncatedNormalRespectsCut) {
  RngStream s(4, "trunc");
  const TensorF t = rng_truncated_normal(s, 0.5, {20000});
  for (float v : t.data()) ASSERT_LE(std::abs(v), 1.0f);
  double m2 = 0;
  for (float v : t.data()) m2 += double(v) * v;
  // Variance of a normal truncated at two std: 0.7737 sigma^2.
  EXPECT_NEAR(m2 / t.size(), 0.7737 * 0.25, 0.01);
}

TEST(Rng, ZeroStdNormalIsExactMean) {
  RngStream s(5, "zero");
  const TensorF t = rng_normal(s, 0.375, 0.0, {100});
  for (float v : t.data()) ASSERT_EQ(v, 0.375f);
}
