#include <gtest/gtest.h>

#include <cmath>

#include "support.hpp"
#include "vsdepth/data.hpp"
#include "vsdepth/error.hpp"
#include "vsdepth/losses.hpp"

using namespace vsdepth;
using vsdepth::testing::gradient_relative_error;

namespace {

torch::Tensor rand_image(int64_t h, int64_t w, uint64_t seed) {
  torch::manual_seed(seed);
  return torch::rand({1, 3, h, w}, torch::kFloat64);
}

ClassMap toy_classes(const torch::Tensor& ids) { return {ids, {{0, "sky"}, {1, "ground"}, {2, "building"}, {3, "object"}}}; }

}  // namespace

TEST(Ssim, IdenticalImagesGiveOne) {
  const auto a = rand_image(8, 8, 0);
  EXPECT_LT((ssim(a, a) - 1).abs().max().item<double>(), 1e-12);
  EXPECT_LT(photometric_error(a, a).abs().max().item<double>(), 1e-12);
}

TEST(Ssim, RejectsShapeMismatch) {
  EXPECT_THROW(ssim(rand_image(8, 8, 0), rand_image(8, 9, 0)), InvalidInput);
}

TEST(PhotometricError, ConstantImagesMatchFormula) {
  // Flat images have zero variance, so only the luminance term of SSIM remains.
  const double ma = 0.3, mb = 0.45, alpha = kPhotometricAlpha;
  const auto a = torch::full({1, 3, 6, 6}, ma, torch::kFloat64);
  const auto b = torch::full({1, 3, 6, 6}, mb, torch::kFloat64);
  const double s = (2 * ma * mb + kSsimC1) / (ma * ma + mb * mb + kSsimC1);
  const double expected = alpha * (1 - s) / 2 + (1 - alpha) * std::abs(ma - mb);
  EXPECT_LT((photometric_error(a, b) - expected).abs().max().item<double>(), 1e-12);
}

TEST(PhotometricError, MinimumPicksBetterNeighbour) {
  const auto c = rand_image(8, 8, 1);
  const auto other = rand_image(8, 8, 2);
  EXPECT_LT(min_photometric_error(other, c, c).abs().max().item<double>(), 1e-12);
  EXPECT_LT(min_photometric_error(c, c, other).abs().max().item<double>(), 1e-12);
}

TEST(AutoMask, StrictComparison) {
  const auto identity = torch::tensor({0.2, 0.5, 0.5}, torch::kFloat64).view({1, 1, 1, 3});
  const auto warped = torch::tensor({0.1, 0.5, 0.7}, torch::kFloat64).view({1, 1, 1, 3});
  const auto m = auto_mask(identity, warped);
  EXPECT_EQ(m[0][0][0][0].item<double>(), 1.0);
  EXPECT_EQ(m[0][0][0][1].item<double>(), 0.0);
  EXPECT_EQ(m[0][0][0][2].item<double>(), 0.0);
  EXPECT_FALSE(m.requires_grad());
}

TEST(ConditionedPhotometricError, MeanOverAllPixels) {
  const auto mask = torch::tensor({1.0, 0.0, 1.0, 1.0}, torch::kFloat64).view({1, 1, 2, 2});
  const auto pe = torch::tensor({0.2, 0.9, 0.4, 0.6}, torch::kFloat64).view({1, 1, 2, 2});
  EXPECT_NEAR(conditioned_photometric_error(mask, pe).item<double>(), (0.2 + 0.4 + 0.6) / 4, 1e-15);
}

TEST(Smoothness, ConstantDisparityIsZero) {
  const auto d = torch::full({1, 1, 8, 8}, 0.3, torch::kFloat64);
  EXPECT_EQ(smoothness(d, rand_image(8, 8, 3)).item<double>(), 0.0);
}

TEST(Smoothness, MatchesLoopOracle) {
  const int64_t h = 5, w = 6;
  torch::manual_seed(4);
  const auto d = torch::rand({1, 1, h, w}, torch::kFloat64) + 0.1;
  const auto img = torch::rand({1, 3, h, w}, torch::kFloat64);
  auto D = d.accessor<double, 4>();
  auto I = img.accessor<double, 4>();
  double mean = 0;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) mean += D[0][0][y][x];
  mean /= h * w;
  double sx = 0, sy = 0;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x + 1 < w; ++x) {
      double gi = 0;
      for (int c = 0; c < 3; ++c) gi += std::abs(I[0][c][y][x] - I[0][c][y][x + 1]) / 3;
      sx += std::abs(D[0][0][y][x] - D[0][0][y][x + 1]) / mean * std::exp(-gi);
    }
  for (int y = 0; y + 1 < h; ++y)
    for (int x = 0; x < w; ++x) {
      double gi = 0;
      for (int c = 0; c < 3; ++c) gi += std::abs(I[0][c][y][x] - I[0][c][y + 1][x]) / 3;
      sy += std::abs(D[0][0][y][x] - D[0][0][y + 1][x]) / mean * std::exp(-gi);
    }
  const double expected = sx / (h * (w - 1)) + sy / ((h - 1) * w);
  EXPECT_NEAR(smoothness(d, img).item<double>(), expected, 1e-12);
}

TEST(DisparityToDepth, SpansConfiguredRange) {
  const auto disp = torch::tensor({0.0, 0.5, 1.0}, torch::kFloat64);
  const auto depth = disparity_to_depth(disp, 0.1, 100.0);
  EXPECT_NEAR(depth[0].item<double>(), 100.0, 1e-9);
  EXPECT_NEAR(depth[2].item<double>(), 0.1, 1e-12);
  EXPECT_NEAR(depth[1].item<double>(), 1.0 / (0.01 + 0.5 * (10.0 - 0.01)), 1e-12);
  EXPECT_THROW(disparity_to_depth(disp, 0.0, 1.0), InvalidInput);
}

TEST(SelfSupervised, StaticTripletContributesNothing) {
  const auto frame = rand_image(32, 32, 5).to(torch::kFloat32);
  torch::manual_seed(6);
  std::vector<torch::Tensor> disp;
  for (int s = 0; s < 4; ++s) disp.push_back(torch::rand({1, 1, 32 >> s, 32 >> s}));
  SelfSupervisedInputs in{frame, frame, frame, disp, PoseTransform::identity(1, torch::kFloat32),
                          PoseTransform::identity(1, torch::kFloat32), Intrinsics{20, 20, 15.5, 15.5, 32, 32}};
  const auto t = self_supervised_loss(in, 1e-3, 0.1, 100.0);
  EXPECT_EQ(t.mask.sum().item<double>(), 0.0);
  EXPECT_EQ(t.photometric.item<double>(), 0.0);
  EXPECT_EQ(t.mask_fraction, 0.0);
}

TEST(SelfSupervised, RequiresNeighbours) {
  SelfSupervisedInputs in;
  in.center = rand_image(8, 8, 0);
  EXPECT_THROW(self_supervised_loss(in, 1e-3, 0.1, 100.0), InvalidInput);
}

TEST(SupervisedLoss, MaskedMeanAbsoluteError) {
  const auto pred = torch::tensor({1.0, 2.0, 3.0, 4.0}, torch::kFloat64).view({1, 1, 2, 2});
  const auto gt = torch::tensor({1.5, 1.0, 3.0, 6.0}, torch::kFloat64).view({1, 1, 2, 2});
  const auto mask = torch::tensor({1.0, 0.5, 0.0, 1.0}, torch::kFloat64).view({1, 1, 2, 2});
  EXPECT_NEAR(supervised_loss(pred, gt, mask).item<double>(), (0.5 + 0.5 + 0 + 2.0) / 4, 1e-15);
}

TEST(SupervisionMask, WeightsByClassAndDepthCap) {
  const auto ids = torch::tensor({0, 1, 2, 3, 3, 1}, torch::kInt64).view({2, 3});
  const auto depth = torch::tensor({0.0, 5.0, 20.0, 30.0, 80.0, 90.0}, torch::kFloat64).view({2, 3});
  std::map<std::string, double> w{{"ground", 0.5}, {"building", 0.5}, {"object", 1.0}};
  const auto m = build_supervision_mask(depth, toy_classes(ids), 80.0, w);
  const double expected[6] = {0.0, 0.5, 0.5, 1.0, 0.0, 0.0};
  for (int i = 0; i < 6; ++i) EXPECT_EQ(m.view({-1})[i].item<double>(), expected[i]) << i;
}

TEST(SupervisionMask, MissingWeightOrClassIsConfigError) {
  const auto ids = torch::tensor({1, 3}, torch::kInt64).view({1, 2});
  const auto depth = torch::ones({1, 2}, torch::kFloat64);
  EXPECT_THROW(build_supervision_mask(depth, toy_classes(ids), 80.0, {{"ground", 0.5}}), ConfigError);
  const auto unknown = torch::tensor({1, 7}, torch::kInt64).view({1, 2});
  EXPECT_THROW(build_supervision_mask(depth, toy_classes(unknown), 80.0, {{"ground", 0.5}}), ConfigError);
}

TEST(DomainLoss, LabelsRealOneVirtualZero) {
  const auto zero = torch::zeros({4}, torch::kFloat64);
  const auto l = domain_loss(zero, zero);
  EXPECT_NEAR(l.real.item<double>(), std::log(2.0), 1e-12);
  EXPECT_NEAR(l.virtual_.item<double>(), std::log(2.0), 1e-12);
  const auto confident = domain_loss(torch::full({2}, 30.0, torch::kFloat64), torch::full({2}, -30.0, torch::kFloat64));
  EXPECT_LT(confident.real.item<double>(), 1e-12);
  EXPECT_LT(confident.virtual_.item<double>(), 1e-12);
  const auto one_sided = domain_loss(torch::Tensor(), torch::full({2}, 1.5, torch::kFloat64));
  EXPECT_EQ(one_sided.real.item<double>(), 0.0);
  EXPECT_NEAR(one_sided.virtual_.item<double>(), std::log1p(std::exp(1.5)), 1e-12);
}

TEST(GradientCheck, PhotometricError) {
  const auto b = rand_image(8, 8, 7);
  const auto a = rand_image(8, 8, 8);
  EXPECT_LT(gradient_relative_error([&](const torch::Tensor& x) { return photometric_error(x, b).mean(); }, a), 1e-4);
}

TEST(GradientCheck, Smoothness) {
  const auto img = rand_image(8, 8, 9);
  torch::manual_seed(10);
  const auto d = torch::rand({1, 1, 8, 8}, torch::kFloat64) + 0.1;
  EXPECT_LT(gradient_relative_error([&](const torch::Tensor& x) { return smoothness(x, img); }, d), 1e-4);
}

TEST(GradientCheck, SupervisedL1) {
  torch::manual_seed(11);
  const auto gt = torch::rand({1, 1, 8, 8}, torch::kFloat64) * 20 + 1;
  const auto mask = torch::rand({1, 1, 8, 8}, torch::kFloat64);
  const auto pred = torch::rand({1, 1, 8, 8}, torch::kFloat64) * 20 + 1;
  EXPECT_LT(gradient_relative_error([&](const torch::Tensor& x) { return supervised_loss(x, gt, mask); }, pred), 1e-4);
}

TEST(GradientCheck, DomainLoss) {
  torch::manual_seed(12);
  const auto other = torch::randn({8}, torch::kFloat64);
  const auto logits = torch::randn({8}, torch::kFloat64) * 2;
  auto f = [&](const torch::Tensor& x) {
    const auto l = domain_loss(x, other);
    return l.real + l.virtual_;
  };
  EXPECT_LT(gradient_relative_error(f, logits), 1e-4);
}
