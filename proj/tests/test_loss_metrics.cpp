#include <gtest/gtest.h>

#include <numbers>

#include "oracles.hpp"
#include "smfn/loss_metrics.hpp"

using namespace smfn;

TEST(LatitudeWeights, FourRowVector) {
  const auto lw = latitude_weights(4, 8);
  const double pi = std::numbers::pi;
  // cos((j + 0.5 - 2) pi / 4) for j = 0..3
  const double want[4] = {std::cos(-1.5 * pi / 4), std::cos(-0.5 * pi / 4), std::cos(0.5 * pi / 4),
                          std::cos(1.5 * pi / 4)};
  for (int j = 0; j < 4; ++j) EXPECT_NEAR(lw.w[j], want[j], 1e-12);
  EXPECT_NEAR(lw.w[0], 0.3826834, 1e-6);
  EXPECT_NEAR(lw.w[1], 0.9238795, 1e-6);
  EXPECT_NEAR(lw.normalizer, 8 * (want[0] + want[1] + want[2] + want[3]), 1e-12);
}

TEST(LatitudeWeights, SymmetricAndPositive) {
  for (std::size_t n : {1, 2, 3, 5, 7, 64, 127, 128, 1000}) {
    const auto lw = latitude_weights(n, 2 * n);
    for (std::size_t j = 0; j < n; ++j) {
      EXPECT_EQ(lw.w[j], lw.w[n - 1 - j]);
      EXPECT_GT(lw.w[j], 0.0);
      EXPECT_LE(lw.w[j], 1.0);
    }
  }
  EXPECT_EQ(latitude_weights(5, 10).w[2], 1.0);
}

TEST(LatitudeWeights, RowSubsets) {
  const auto lw = latitude_weights(16, 32);
  const auto rows = lw.rows(3, 4);
  for (std::size_t i = 0; i < 4; ++i) EXPECT_EQ(rows[i], lw.w[3 + i]);
  const auto flipped = lw.rows(3, 4, true);
  for (std::size_t i = 0; i < 4; ++i) EXPECT_EQ(flipped[i], lw.w[6 - i]);
  EXPECT_THROW(lw.rows(14, 4), ValidationError);
}

TEST(Wmse, UniformWeightsReduceToMse) {
  const Plane a = oracle::random_plane(12, 20, 1), b = oracle::random_plane(12, 20, 2);
  EXPECT_NEAR(wmse(a, b, LatitudeWeights::uniform(12, 20)), mse(a, b), 1e-9);
  EXPECT_NEAR(ws_psnr(a, b, LatitudeWeights::uniform(12, 20)), psnr(a, b), 1e-9);
}

TEST(Wmse, MatchesWeightedSum) {
  const Plane a = oracle::random_plane(6, 4, 3), b = oracle::random_plane(6, 4, 4);
  const auto lw = latitude_weights(6, 4);
  double num = 0.0, den = 0.0;
  for (int j = 0; j < 6; ++j)
    for (int i = 0; i < 4; ++i) {
      num += lw.w[j] * (a(j, i) - b(j, i)) * (a(j, i) - b(j, i));
      den += lw.w[j];
    }
  EXPECT_NEAR(wmse(a, b, lw), num / den, 1e-9);
  Tape<double> tape;
  auto v = wmse(tape.constant(plane_tensor<double>(a)), plane_tensor<double>(b), lw);
  EXPECT_NEAR(v.value()[0], num / den, 1e-9);
}

TEST(Wmse, RejectsMismatchedShapes) {
  Tape<double> tape;
  auto a = tape.constant(Tensor<double>(Shape{1, 1, 4, 4}));
  EXPECT_THROW(wmse(a, Tensor<double>(Shape{1, 1, 4, 5}), latitude_weights(4, 4)), ValidationError);
  EXPECT_THROW(wmse(a, Tensor<double>(Shape{1, 1, 4, 4}), latitude_weights(5, 4)), ValidationError);
  EXPECT_THROW(wmse(oracle::random_plane(3, 3, 1), oracle::random_plane(3, 4, 1), latitude_weights(3, 3)),
               ValidationError);
}

TEST(Wmse, GradientCheck) {
  const auto hr = oracle::random_tensor<double>(Shape{2, 1, 6, 5}, 7);
  const auto weights = row_weight_tensor<double>(latitude_weights(6, 5).w);
  auto build = [&](Tape<double>&, const std::vector<Var<double>>& v) { return wmse(v[0], hr, weights); };
  EXPECT_LE(oracle::gradient_error(build, {oracle::random_tensor<double>(Shape{2, 1, 6, 5}, 8)}), 1e-8);
}

TEST(TotalLoss, CombinesTermsWithLambda) {
  Tape<double> tape;
  const auto hr = oracle::random_tensor<double>(Shape{1, 1, 8, 8}, 1);
  const auto lr = oracle::random_tensor<double>(Shape{1, 1, 2, 2}, 2);
  auto sr = tape.constant(oracle::random_tensor<double>(Shape{1, 1, 8, 8}, 3));
  auto dual = tape.constant(oracle::random_tensor<double>(Shape{1, 1, 2, 2}, 4));
  const auto hw = row_weight_tensor<double>(latitude_weights(8, 8).w);
  const auto lw = row_weight_tensor<double>(latitude_weights(2, 2).w);
  auto terms = total_loss(sr, hr, hw, &dual, lr, lw, 0.1);
  EXPECT_NEAR(terms.total.value()[0], combine_losses(terms.primary.value()[0], terms.dual.value()[0], 0.1), 1e-15);
  auto no_dual = total_loss<double>(sr, hr, hw, nullptr, lr, lw, 0.1);
  EXPECT_FALSE(no_dual.dual.valid());
  EXPECT_EQ(no_dual.total.value()[0], no_dual.primary.value()[0]);
  EXPECT_THROW(total_loss(sr, hr, hw, &dual, lr, lw, -1.0), ValidationError);
}

TEST(Psnr, ZeroErrorIsCapped) {
  const Plane a = oracle::random_plane(16, 32, 5);
  EXPECT_EQ(ws_psnr(a, a, latitude_weights(16, 32)), kPsnrCap);
  EXPECT_EQ(psnr(a, a), 99.0);
}

TEST(Psnr, KnownValue) {
  const Plane a = Plane::Zero(4, 4), b = Plane::Constant(4, 4, 255.0 / 10.0);
  EXPECT_NEAR(psnr(a, b), 20.0, 1e-12);
  EXPECT_NEAR(ws_psnr(a, b, latitude_weights(4, 4)), 20.0, 1e-12);
}

TEST(Ssim, MatchesWindowedMomentOracle) {
  const Plane a = oracle::random_plane(20, 24, 11);
  Plane b = a + oracle::random_plane(20, 24, 12, -30, 30);
  b = b.max(0.0).min(255.0);
  EXPECT_NEAR(ssim(a, b), oracle::ssim(a, b), 1e-6);
  const auto lw = latitude_weights(20, 24);
  EXPECT_NEAR(ws_ssim(a, b, lw), oracle::ssim(a, b, &lw.w), 1e-6);
}

TEST(Ssim, IdentityAndUniformWeights) {
  const Plane a = oracle::random_plane(16, 16, 13);
  EXPECT_NEAR(ssim(a, a), 1.0, 1e-12);
  EXPECT_NEAR(ws_ssim(a, a, latitude_weights(16, 16)), 1.0, 1e-12);
  const Plane b = oracle::random_plane(16, 16, 14);
  EXPECT_NEAR(ws_ssim(a, b, LatitudeWeights::uniform(16, 16)), ssim(a, b), 1e-12);
  EXPECT_EQ(ssim_map(a, b).rows(), 6);
  EXPECT_THROW(ssim(oracle::random_plane(8, 8, 1), oracle::random_plane(8, 8, 2)), ValidationError);
}

TEST(Quantize, RoundsAndClamps) {
  Plane p(1, 5);
  p << -3.0, 0.49, 127.5, 254.6, 300.0;
  const Plane q = quantize_8bit(p);
  EXPECT_EQ(q(0, 0), 0.0);
  EXPECT_EQ(q(0, 1), 0.0);
  EXPECT_EQ(q(0, 2), 128.0);
  EXPECT_EQ(q(0, 3), 255.0);
  EXPECT_EQ(q(0, 4), 255.0);
}

TEST(Bicubic, KernelValues) {
  EXPECT_EQ(cubic_kernel(0.0), 1.0);
  EXPECT_EQ(cubic_kernel(1.0), 0.0);
  EXPECT_EQ(cubic_kernel(2.0), 0.0);
  EXPECT_EQ(cubic_kernel(2.5), 0.0);
  EXPECT_DOUBLE_EQ(cubic_kernel(0.5), 0.5625);
  EXPECT_DOUBLE_EQ(cubic_kernel(1.5), -0.0625);
  for (double x : {0.1, 0.7, 1.3, 1.9}) EXPECT_NEAR(cubic_kernel(x), oracle::keys(x), 1e-12);
}

TEST(Bicubic, MatchesDenseWidenedKernel) {
  const Plane src = oracle::random_plane(32, 48, 21);
  for (auto [oh, ow] : {std::pair<std::size_t, std::size_t>{16, 24}, {8, 12}, {4, 6}, {64, 96}, {32, 48}, {12, 20}}) {
    const Plane got = bicubic_resize(src, oh, ow);
    EXPECT_LE((got - oracle::bicubic_resize(src, oh, ow)).abs().maxCoeff(), 1e-9) << oh << "x" << ow;
  }
}

TEST(Bicubic, PreservesConstantsAndLinearRamps) {
  const Plane c = Plane::Constant(24, 40, 77.0);
  EXPECT_LE((bicubic_resize(c, 6, 10) - 77.0).abs().maxCoeff(), 1e-9);
  EXPECT_LE((bicubic_resize(c, 48, 80) - 77.0).abs().maxCoeff(), 1e-9);
  for (const auto& tap : bicubic_taps(40, 10)) {
    double s = 0.0;
    for (double w : tap.weight) s += w;
    EXPECT_NEAR(s, 1.0, 1e-12);
    EXPECT_GE(tap.index.size(), 16u);  // support widened 4x for 4x shrink
  }
}
