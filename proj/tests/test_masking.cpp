#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "maskcf/masking.hpp"
#include "test_util.hpp"

using namespace maskcf;
using namespace maskcf::testing;

TEST(CosineWindow, BordersZeroCentreOne) {
  for (auto g : {Grid2(3, 3), Grid2(8, 11), Grid2(2, 5)}) {
    const auto c = cosine_window(g);
    for (int i = 0; i < g.height; ++i) {
      EXPECT_EQ(c.data(i, 0), 0.0);
      EXPECT_EQ(c.data(i, g.width - 1), 0.0);
    }
    for (int j = 0; j < g.width; ++j) {
      EXPECT_EQ(c.data(0, j), 0.0);
      EXPECT_EQ(c.data(g.height - 1, j), 0.0);
    }
  }
  EXPECT_NEAR(cosine_window(Grid2(3, 3)).data(1, 1), 1.0, 1e-15);
}

TEST(CosineWindow, FormulaValue) {
  const auto c = cosine_window(Grid2(5, 5));
  const double s = std::sin(std::numbers::pi * 3.0 / 4.0);
  EXPECT_NEAR(c.data(2, 3), s * s, 1e-15);
  EXPECT_NEAR(c.data(2, 3), 0.5, 1e-15);
  EXPECT_THROW(cosine_window(Grid2(1, 4)), std::invalid_argument);
}

TEST(BinaryMask, SixtyFourPercentWhenSearchIsFiveTargets) {
  // H = W = 5h; odd-cell rounding adds (H - h + 1)/H per axis.
  const auto m = binary_mask(Grid2(100, 100), 20, 20);
  EXPECT_NEAR(ones_fraction(m), 0.64, 0.02);
  for (double v : m.data) EXPECT_TRUE(v == 0.0 || v == 1.0);
}

TEST(BinaryMask, FullTargetLeavesCentreOnly) {
  const auto m = binary_mask(Grid2(7, 9), 7, 9);
  for (int i = 0; i < 7; ++i)
    for (int j = 0; j < 9; ++j) EXPECT_EQ(m.data(i, j), (i == 3 && j == 4) ? 1.0 : 0.0);
}

TEST(BinaryMask, EnumerationOracle10x10) {
  // |x| <= 5 - 2 = 3 over offsets {-5..4}: seven offsets per axis.
  int expected = 0;
  for (int x = -5; x <= 4; ++x)
    for (int y = -5; y <= 4; ++y) expected += (std::abs(x) <= 3 && std::abs(y) <= 3);
  EXPECT_EQ(expected, 49);
  const auto m = binary_mask(Grid2(10, 10), 4, 4);
  int count = 0;
  for (double v : m.data) count += v == 1.0;
  EXPECT_EQ(count, expected);
}

TEST(BinaryMask, FractionApproachesContinuumLimit) {
  for (int H : {20, 40, 80, 160}) {
    const int h = H / 5;
    const int W = H + H / 2, w = W / 3;
    const double limit = double(H - h) / H * double(W - w) / W;
    EXPECT_NEAR(ones_fraction(binary_mask(Grid2(H, W), h, w)), limit, 2.0 / std::min(H, W));
  }
}

TEST(BinaryMask, RejectsOversizeTarget) {
  EXPECT_THROW(binary_mask(Grid2(5, 5), 6, 2), std::invalid_argument);
  EXPECT_THROW(binary_mask(Grid2(5, 5), 0, 2), std::invalid_argument);
}

TEST(GaussianMask, PeakSupportAndValue) {
  const auto gm = gaussian_mask(Grid2(20, 20), 4, 4, 1.2);
  const auto bm = binary_mask(Grid2(20, 20), 4, 4);
  EXPECT_DOUBLE_EQ(gm.data(10, 10), 1.0);
  for (std::size_t k = 0; k < gm.data.size(); ++k) EXPECT_EQ(gm.data[k] > 0.0, bm.data[k] > 0.0);
  // offset (4, 0)
  EXPECT_NEAR(gm.data(14, 10), std::exp(-std::pow(4.0 / 4.8, 2)), 1e-15);
  EXPECT_NEAR(gm.data(14, 10), 0.4994, 1e-4);
  EXPECT_THROW(gaussian_mask(Grid2(20, 20), 4, 4, 0.0), std::invalid_argument);
}

TEST(GaussianMask, EvenAndMonotone) {
  const int H = 21, W = 15;
  const auto m = gaussian_mask(Grid2(H, W), 5, 3, 1.2);
  for (int i = 0; i < H; ++i)
    for (int j = 0; j < W; ++j) {
      EXPECT_DOUBLE_EQ(m.data(i, j), m.data(H - 1 - i, j));
      EXPECT_DOUBLE_EQ(m.data(i, j), m.data(i, W - 1 - j));
    }
  for (int i = H / 2; i + 1 < H; ++i)
    for (int j = 0; j < W; ++j) EXPECT_GE(m.data(i, j), m.data(i + 1, j));
  for (int j = W / 2; j + 1 < W; ++j)
    for (int i = 0; i < H; ++i) EXPECT_GE(m.data(i, j), m.data(i, j + 1));
}

TEST(GaussianMask, ConvergesToBinaryForLargeDelta) {
  const Grid2 g(25, 25);
  const auto gm = gaussian_mask(g, 5, 5, 1e6);
  const auto bm = binary_mask(g, 5, 5);
  double gap = 0.0;
  for (std::size_t k = 0; k < gm.data.size(); ++k) gap = std::max(gap, std::abs(gm.data[k] - bm.data[k]));
  EXPECT_LE(gap, 1e-6);
}

TEST(ApplyMask, IdentityZeroAndElementwise) {
  std::mt19937_64 rng(9);
  const Grid2 g(6, 7);
  const auto x = random_grid(g, rng);
  EXPECT_EQ(max_abs_diff(apply_mask(ones_mask(g), x), x), 0.0);
  const auto bm = binary_mask(g, 3, 3);
  const auto out = apply_mask(bm, x);
  for (std::size_t k = 0; k < x.size(); ++k)
    if (bm.data[k] == 0.0) EXPECT_EQ(out[k], 0.0);
  const SpatialMask rm{random_grid(g, rng, 0.0, 1.0), MaskKind::gaussian, {}, {}};
  const auto prod = apply_mask(rm, x);
  for (int i = 0; i < 6; ++i)
    for (int j = 0; j < 7; ++j) EXPECT_EQ(prod(i, j), rm.data(i, j) * x(i, j));
  EXPECT_THROW(apply_mask(rm, RealGrid(Grid2(2, 2))), std::invalid_argument);
}
