#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "support.hpp"
#include "vsdepth/error.hpp"
#include "vsdepth/scalecal.hpp"
#include "vsdepth/trainer.hpp"

using namespace vsdepth;
using vsdepth::testing::virtual_dataset_from_depths;
namespace fs = std::filesystem;

namespace {

DepthMap depth_of(std::vector<double> v, int64_t h, int64_t w) {
  return DepthMap::from_values(torch::tensor(v, torch::kFloat64).view({h, w}));
}

std::vector<torch::Tensor> random_depths(int n, int64_t h, int64_t w, uint64_t seed) {
  torch::manual_seed(seed);
  std::vector<torch::Tensor> out;
  for (int i = 0; i < n; ++i) out.push_back(torch::rand({h, w}, torch::kFloat64) * 35 + 1);
  return out;
}

}  // namespace

TEST(Median, OddAndEvenCounts) {
  EXPECT_EQ(median_of(torch::tensor({3.0, 1.0, 2.0}, torch::kFloat64)), 2.0);
  EXPECT_EQ(median_of(torch::tensor({4.0, 1.0, 3.0, 2.0}, torch::kFloat64)), 2.5);
  EXPECT_THROW(median_of(torch::empty({0}, torch::kFloat64)), InvalidInput);
}

TEST(PerImageScale, ConstantMaps) {
  const auto s = per_image_scale(depth_of({2, 2, 2, 2}, 2, 2), depth_of({10, 10, 10, 10}, 2, 2));
  EXPECT_DOUBLE_EQ(s.psi, 5.0);
  EXPECT_EQ(s.source, ScaleSource::kPerImage);
}

TEST(PerImageScale, IgnoresPixelsOutsideRange) {
  // 100 is beyond the cap and 0 is invalid GT, so the medians use four pixels.
  const auto gt = depth_of({1, 2, 3, 4, 100, 0}, 2, 3);
  const auto pred = depth_of({2, 4, 6, 8, 1, 9}, 2, 3);
  const auto s = per_image_scale(pred, gt);
  EXPECT_DOUBLE_EQ(s.gt_median, 2.5);
  EXPECT_DOUBLE_EQ(s.pred_median, 5.0);
  EXPECT_DOUBLE_EQ(s.psi, 0.5);
}

TEST(PerImageScale, HomogeneousInGroundTruth) {
  torch::manual_seed(1);
  const auto gt = DepthMap::from_values(torch::rand({6, 7}, torch::kFloat64) * 10 + 1);
  const auto pred = DepthMap::from_values(torch::rand({6, 7}, torch::kFloat64) * 3 + 0.5);
  const double base = per_image_scale(pred, gt).psi;
  const auto gt3 = DepthMap::from_values(gt.values * 3);
  EXPECT_NEAR(per_image_scale(pred, gt3).psi, 3 * base, 1e-12 * base);
}

TEST(PerImageScale, NoOverlapThrows) {
  EXPECT_THROW(per_image_scale(depth_of({1, 2}, 1, 2), depth_of({0, 0}, 1, 2)), InvalidInput);
  EXPECT_THROW(per_image_scale(depth_of({0, 0}, 1, 2), depth_of({1, 2}, 1, 2)), InvalidInput);
  EXPECT_THROW(per_image_scale(depth_of({1, 2}, 1, 2), depth_of({1, 2, 3}, 1, 3)), InvalidInput);
}

TEST(ApplyScale, MultipliesThenClamps) {
  const auto out = apply_scale(depth_of({3, 50, 1e-5}, 1, 3), ScaleFactor{2.0});
  EXPECT_DOUBLE_EQ(out.values[0][0].item<double>(), 6.0);
  EXPECT_DOUBLE_EQ(out.values[0][1].item<double>(), 80.0);
  EXPECT_DOUBLE_EQ(out.values[0][2].item<double>(), kEvalMinDepth);
  EXPECT_THROW(apply_scale(depth_of({1}, 1, 1), ScaleFactor{0.0}), InvalidInput);
}

TEST(ApplyScale, PreservesOrdering) {
  torch::manual_seed(2);
  const auto pred = DepthMap::from_values(torch::rand({1, 50}, torch::kFloat64) * 30 + 0.1);
  const auto out = apply_scale(pred, ScaleFactor{1.7});
  EXPECT_TRUE(torch::equal(pred.values.argsort(int64_t{1}), out.values.argsort(int64_t{1})));
}

TEST(GlobalScale, RecoversInjectedFactor) {
  const auto ds = virtual_dataset_from_depths(random_depths(5, 12, 16, 3));
  for (double k : {0.5, 2.0, 7.3}) {
    DepthPredictor shrunk = [k](const ImageTriplet& t) { return DepthMap::from_values(t.gt_depth->values / k); };
    const auto s = calibrate_global_scale(ds, shrunk, kDefaultCap);
    EXPECT_NEAR(s.psi, k, 1e-9 * k) << k;
    EXPECT_EQ(s.source, ScaleSource::kGlobalVirtual);
  }
}

TEST(GlobalScale, ScaledMedianMatchesGroundTruthMedian) {
  const auto depths = random_depths(4, 10, 10, 4);
  const auto ds = virtual_dataset_from_depths(depths);
  torch::manual_seed(5);
  std::vector<torch::Tensor> noise;
  for (size_t i = 0; i < depths.size(); ++i) noise.push_back(torch::rand({10, 10}, torch::kFloat64) + 0.5);
  DepthPredictor model = [&](const ImageTriplet& t) {
    return DepthMap::from_values(t.gt_depth->values * noise[static_cast<size_t>(t.center_index) - 1]);
  };
  const auto s = calibrate_global_scale(ds, model, kDefaultCap);
  std::vector<torch::Tensor> g, p;
  for (size_t i = 0; i < ds.size(); ++i) {
    const auto t = ds.triplet(i);
    g.push_back(t.gt_depth->values.reshape({-1}));
    p.push_back(model(t).values.reshape({-1}));
  }
  EXPECT_NEAR(s.psi * median_of(torch::cat(p)), median_of(torch::cat(g)), 1e-9);
}

TEST(GlobalScale, EmptySetThrows) {
  Dataset empty(Domain::kVirtual, {{1, "ground"}});
  DepthPredictor id = [](const ImageTriplet& t) { return *t.gt_depth; };
  EXPECT_THROW(calibrate_global_scale(empty, id, kDefaultCap), InvalidInput);
}

TEST(GlobalScale, ThrowawayRunGivesFinitePositiveFactor) {
  const auto ds = virtual_dataset_from_depths(random_depths(6, 64, 64, 6));
  ModelConfig m;
  m.width = 64;
  m.height = 64;
  m.encoder_widths = m.pyramid_widths = m.decoder_widths = {4, 8, 8, 16, 16};
  m.classifier_hidden = 8;
  CalibrationConfig c;
  c.steps = 2;
  c.batch_size = 2;
  const auto s = calibrate_global_scale(ds, m, TrainConfig{}, c);
  EXPECT_TRUE(std::isfinite(s.psi));
  EXPECT_GT(s.psi, 0);
  c.batch_size = 8;  // more than the four triplets
  EXPECT_THROW(calibrate_global_scale(ds, m, TrainConfig{}, c), InvalidInput);
}

TEST(NetworkPredictor, ReturnsTripletResolution) {
  const auto ds = virtual_dataset_from_depths(random_depths(3, 30, 50, 7));
  ModelConfig m;
  m.width = 64;
  m.height = 64;
  m.encoder_widths = m.pyramid_widths = m.decoder_widths = {4, 8, 8, 16, 16};
  DepthNetwork net(m);
  net->train();
  const auto d = network_predictor(net, m)(ds.triplet(0));
  EXPECT_EQ(d.height(), 30);
  EXPECT_EQ(d.width(), 50);
  EXPECT_GE(d.values.min().item<double>(), m.min_depth - 1e-9);
  EXPECT_TRUE(net->is_training());
}

TEST(PsiFile, RoundTripAndRejects) {
  const auto dir = fs::temp_directory_path() / "vsdepth_psi";
  fs::create_directories(dir);
  const double psi = 1.0 / 3.0 * 17.25;
  write_psi(dir / "psi.txt", psi);
  EXPECT_EQ(read_psi(dir / "psi.txt"), psi);
  for (const std::string bad : {"", "abc", "-2", "1.5 2.5", "0"}) {
    std::ofstream(dir / "bad.txt") << bad;
    EXPECT_THROW(read_psi(dir / "bad.txt"), InvalidInput) << bad;
  }
  EXPECT_THROW(read_psi(dir / "missing.txt"), InvalidInput);
}
