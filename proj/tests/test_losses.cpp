#include <gtest/gtest.h>

#include <cmath>

#include "occlusim/losses.hpp"
#include "oracles.hpp"

using namespace occlusim;

namespace {

Image model_image(uint64_t seed, int c, int h, int w) {
  Rng rng(seed);
  return oracle::random_image(rng, c, h, w, -1.0, 1.0);
}

// Values given in [0, 1], stored in model range.
Image constant_unit(double v, int h, int w) { return Image(1, h, w, static_cast<float>(2.0 * v - 1.0)); }

LossConfig gradcheck_config() {
  LossConfig c;
  c.msssim_window = 3;
  c.msssim_levels = 2;
  return c;
}

// Relative error ||a - b|| / max(||a||, ||b||) of the analytic gradient of
// branch_loss against central differences taken on the float32 input.
double gradient_relative_error(const Image& pred, const Image& target, const LossConfig& cfg) {
  nn::Tensor p(1, pred.channels, pred.height, pred.width), t = p;
  p.data = pred.pixels;
  t.data = target.pixels;
  const LossResult r = branch_loss(p, t, cfg, true);
  double num = 0.0, na = 0.0, nf = 0.0;
  const float eps = 1e-3f;
  for (size_t i = 0; i < p.size(); ++i) {
    const float keep = p.data[i];
    const float up = keep + eps, dn = keep - eps;
    p.data[i] = up;
    const double lu = branch_loss(p, t, cfg, false).value;
    p.data[i] = dn;
    const double ld = branch_loss(p, t, cfg, false).value;
    p.data[i] = keep;
    const double fd = (lu - ld) / (static_cast<double>(up) - static_cast<double>(dn));
    num += (fd - r.grad[i]) * (fd - r.grad[i]);
    na += r.grad[i] * r.grad[i];
    nf += fd * fd;
  }
  return std::sqrt(num) / std::max(std::sqrt(std::max(na, nf)), 1e-30);
}

}  // namespace

TEST(MsSsim, SelfSimilarityIsOne) {
  for (uint64_t s = 0; s < 4; ++s) {
    const Image x = model_image(s, 3, 48, 48);
    EXPECT_NEAR(ms_ssim(x, x, LossConfig{}), 1.0, 1e-6);
  }
}

TEST(MsSsim, ConstantImagesClosedForm) {
  // Use the unit values that survive float storage in model range.
  const auto stored = [](double v) { return (static_cast<double>(static_cast<float>(2.0 * v - 1.0)) + 1.0) / 2.0; };
  const double a = stored(0.3), b = stored(0.7), c1 = 1e-4, c2 = 9e-4;
  const double lum = (2 * a * b + c1) * (2 * 0 + c2) / ((a * a + b * b + c1) * (0 + 0 + c2));
  LossConfig one;
  one.msssim_levels = 1;
  EXPECT_NEAR(ms_ssim(constant_unit(0.3, 16, 16), constant_unit(0.7, 16, 16), one), lum, 1e-9);
  // Three levels: contrast-structure terms are 1 on constants, so only the
  // coarsest luminance survives, raised to its renormalised exponent.
  const double w3 = 0.3001 / (0.0448 + 0.2856 + 0.3001);
  EXPECT_NEAR(ms_ssim(constant_unit(0.3, 48, 48), constant_unit(0.7, 48, 48), LossConfig{}), std::pow(lum, w3), 1e-9);
}

TEST(MsSsim, InvertedNoiseBelowOne) {
  Rng rng(3);
  Image x = oracle::random_image(rng, 1, 48, 48, -0.5, 0.5);
  Image y = x;
  for (float& v : y.pixels) v = -v;  // 1 - x in unit range
  EXPECT_LT(ms_ssim(x, y, LossConfig{}), 1.0);
}

TEST(MsSsim, Symmetric) {
  const Image x = model_image(5, 3, 48, 48), y = model_image(6, 3, 48, 48);
  EXPECT_NEAR(ms_ssim(x, y, LossConfig{}), ms_ssim(y, x, LossConfig{}), 1e-6);
}

TEST(MsSsim, LevelConstraintReportsMax) {
  try {
    ms_ssim(model_image(1, 1, 32, 32), model_image(2, 1, 32, 32), LossConfig{});
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("at most 2 levels"), std::string::npos) << e.what();
  }
  EXPECT_EQ(max_msssim_levels(64, 64, 11), 3);
  EXPECT_EQ(max_msssim_levels(256, 256, 11), 5);
}

TEST(MsSsim, WeightsRenormalised) {
  const auto w = msssim_weights(3);
  EXPECT_NEAR(w[0] + w[1] + w[2], 1.0, 1e-12);
  EXPECT_NEAR(w[1] / w[0], 0.2856 / 0.0448, 1e-9);
  EXPECT_NEAR(msssim_weights(5)[4], 0.1333 / (0.0448 + 0.2856 + 0.3001 + 0.2363 + 0.1333), 1e-12);
}

TEST(WeightedL1, IdenticalIsZero) {
  const Image x = model_image(7, 3, 16, 16);
  EXPECT_EQ(weighted_l1(x, x, LossConfig{}), 0.0);
}

TEST(WeightedL1, DeltaKernelConstantError) {
  LossConfig c;
  c.gaussian_weight_sigma = 0.0;
  EXPECT_NEAR(weighted_l1(Image(3, 8, 8, 0.0f), Image(3, 8, 8, 0.5f), c), 0.5, 1e-12);
  c = LossConfig{};
  c.gaussian_weighted_l1 = false;
  EXPECT_NEAR(weighted_l1(Image(3, 8, 8, 0.0f), Image(3, 8, 8, 0.5f), c), 0.5, 1e-12);
}

TEST(WeightedL1, SinglePixelErrorMatchesKernelOracle) {
  for (int py : {0, 1}) {
    Image x(1, 4, 4, 0.0f), y(1, 4, 4, 0.0f);
    x.at(0, py, 2) = 1.0f;
    const double ref = oracle::weighted_l1(oracle::plane(x, 0), oracle::plane(y, 0), 4, 4, 1.5, 11);
    EXPECT_NEAR(weighted_l1(x, y, LossConfig{}), ref, 1e-12);
  }
  Rng rng(8);
  const Image a = oracle::random_image(rng, 1, 12, 9), b = oracle::random_image(rng, 1, 12, 9);
  const double ref = oracle::weighted_l1(oracle::plane(a, 0), oracle::plane(b, 0), 12, 9, 1.5, 11);
  EXPECT_NEAR(weighted_l1(a, b, LossConfig{}), ref, 1e-9);
}

TEST(BranchLoss, ZeroAtTargetAndMinimum) {
  const Image x = model_image(9, 3, 48, 48);
  EXPECT_NEAR(branch_loss(x, x, LossConfig{}), 0.0, 1e-6);
  Rng rng(10);
  for (int k = 0; k < 5; ++k) {
    Image y = x;
    for (float& v : y.pixels) v += static_cast<float>(rng.uniform(-0.05, 0.05));
    EXPECT_GT(branch_loss(y, x, LossConfig{}), branch_loss(x, x, LossConfig{}));
  }
}

TEST(BranchLoss, AlphaEndpointAndMix) {
  const Image x = model_image(11, 3, 48, 48), y = model_image(12, 3, 48, 48);
  LossConfig c;
  c.alpha0 = 1.0;
  EXPECT_NEAR(branch_loss(x, y, c), 1.0 - ms_ssim(x, y, c), 1e-12);
  c = LossConfig{};
  const double expect = 0.9 * (1.0 - ms_ssim(x, y, c)) + 0.1 * weighted_l1(x, y, c);
  EXPECT_NEAR(branch_loss(x, y, c), expect, 1e-12);
  EXPECT_NEAR(0.9 * 0.2 + 0.1 * 0.05, 0.185, 1e-15);
}

TEST(JointLoss, Arithmetic) {
  const LossConfig c;
  EXPECT_EQ(joint_loss(0.0, 0.0, c), 0.0);
  EXPECT_NEAR(joint_loss(1.0, 0.0, c), 0.8, 1e-15);
  EXPECT_NEAR(joint_loss(0.5, 0.25, c), 0.45, 1e-15);
  EXPECT_LT(joint_loss(0.3, 0.2, c), joint_loss(0.31, 0.2, c));
  EXPECT_LT(joint_loss(0.3, 0.2, c), joint_loss(0.3, 0.21, c));
}

TEST(BranchLoss, GradientMatchesFiniteDifferences) {
  for (uint64_t s = 0; s < 4; ++s) {
    const Image p = model_image(100 + s, 1, 8, 8), t = model_image(200 + s, 1, 8, 8);
    EXPECT_LT(gradient_relative_error(p, t, gradcheck_config()), 1e-3) << s;
  }
  // Default window and levels on a 48x48 plane. The target keeps every
  // residual at least 0.02 away from the L1 kink, which central differences
  // with eps 1e-3 cannot straddle.
  Rng rng(300);
  const Image p = oracle::random_image(rng, 1, 48, 48, -0.7, 0.7);
  Image t = p;
  for (float& v : t.pixels) v += static_cast<float>((rng.uniform() < 0.5 ? -1.0 : 1.0) * rng.uniform(0.02, 0.3));
  EXPECT_LT(gradient_relative_error(p, t, LossConfig{}), 1e-3);
}

TEST(BranchLoss, RejectsShapeMismatch) {
  EXPECT_THROW(branch_loss(Image(3, 48, 48), Image(3, 48, 40), LossConfig{}), Error);
}

TEST(LossConfig, Validation) {
  LossConfig c;
  c.alpha0 = 1.5;
  EXPECT_THROW(c.validate(), Error);
  c = LossConfig{};
  c.msssim_window = 4;
  EXPECT_THROW(c.validate(), Error);
}
