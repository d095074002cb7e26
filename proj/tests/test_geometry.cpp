#include <gtest/gtest.h>

#include <cmath>

#include "vsdepth/error.hpp"
#include "vsdepth/geometry.hpp"

using namespace vsdepth;

namespace {

Intrinsics kitti_like() { return {58.0, 58.0, 31.5, 15.5, 64, 32}; }

// Closed-form Rodrigues, written out element by element.
std::array<double, 9> rodrigues(double wx, double wy, double wz) {
  const double t = std::sqrt(wx * wx + wy * wy + wz * wz);
  const double kx = wx / t, ky = wy / t, kz = wz / t;
  const double c = std::cos(t), s = std::sin(t), v = 1 - c;
  return {c + kx * kx * v,      kx * ky * v - kz * s, kx * kz * v + ky * s,
          ky * kx * v + kz * s, c + ky * ky * v,      ky * kz * v - kx * s,
          kz * kx * v - ky * s, kz * ky * v + kx * s, c + kz * kz * v};
}

}  // namespace

TEST(Intrinsics, ValidateRejectsBadValues) {
  EXPECT_THROW((Intrinsics{0, 1, 1, 1, 4, 4}.validate()), InvalidInput);
  EXPECT_THROW((Intrinsics{1, 1, 5, 1, 4, 4}.validate()), InvalidInput);
  EXPECT_NO_THROW(kitti_like().validate());
}

TEST(Intrinsics, RescaleIsProportional) {
  const Intrinsics k{720.0, 710.0, 320.0, 96.0, 640, 192};
  const auto s = k.scaled_to(128, 96);
  EXPECT_DOUBLE_EQ(s.fx, 720.0 * 0.2);
  EXPECT_DOUBLE_EQ(s.cx, 320.0 * 0.2);
  EXPECT_DOUBLE_EQ(s.fy, 710.0 * 0.5);
  EXPECT_DOUBLE_EQ(s.cy, 96.0 * 0.5);
  EXPECT_EQ(s.width, 128);
  EXPECT_EQ(s.height, 96);
}

TEST(Intrinsics, ParseRoundTrip) {
  const Intrinsics k{58.123456789, 57.5, 31.25, 15.75, 64, 32};
  EXPECT_EQ(Intrinsics::parse(k.to_string(), 64, 32), k);
  EXPECT_THROW(Intrinsics::parse("1 2 3", 64, 32), InvalidInput);
}

TEST(Intrinsics, FlipMirrorsProjection) {
  // A point mirrored in X must land on the mirrored pixel column.
  const auto k = kitti_like();
  const auto kf = k.flipped_horizontally();
  auto pts = torch::tensor({1.3, -0.4, 7.0}, torch::kFloat64).view({1, 3, 1, 1});
  auto mirrored = pts.clone();
  mirrored[0][0] *= -1;
  const auto p = project(pts, PoseTransform::identity(1), k).pixels;
  const auto q = project(mirrored, PoseTransform::identity(1), kf).pixels;
  EXPECT_NEAR(q[0][0][0][0].item<double>(), (k.width - 1) - p[0][0][0][0].item<double>(), 1e-12);
  EXPECT_NEAR(q[0][0][0][1].item<double>(), p[0][0][0][1].item<double>(), 1e-12);
  EXPECT_EQ(kf.flipped_horizontally(), k);
}

TEST(PixelGrid, HoldsColumnThenRow) {
  const auto g = pixel_grid(3, 4);
  EXPECT_EQ(g.sizes(), (std::vector<int64_t>{1, 3, 4, 2}));
  EXPECT_EQ(g[0][2][3][0].item<double>(), 3.0);
  EXPECT_EQ(g[0][2][3][1].item<double>(), 2.0);
}

TEST(Pose, RotationMatchesClosedForm) {
  const double w[3] = {0.3, -0.7, 1.1};
  PoseTransform p{torch::tensor({w[0], w[1], w[2]}, torch::kFloat64).view({1, 3}), torch::zeros({1, 3}, torch::kFloat64)};
  const auto r = p.rotation()[0];
  const auto ref = rodrigues(w[0], w[1], w[2]);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) EXPECT_NEAR(r[i][j].item<double>(), ref[i * 3 + j], 1e-12);
}

TEST(Pose, SmallAngleStaysOrthonormal) {
  for (double mag : {0.0, 1e-9, 1e-4, 2e-3}) {
    PoseTransform p{torch::tensor({mag, -mag, 0.5 * mag}, torch::kFloat64).view({1, 3}),
                    torch::zeros({1, 3}, torch::kFloat64)};
    const auto r = p.rotation()[0];
    EXPECT_LT((torch::mm(r, r.t()) - torch::eye(3, torch::kFloat64)).abs().max().item<double>(), 1e-12);
    EXPECT_NEAR(torch::det(r).item<double>(), 1.0, 1e-12);
  }
}

TEST(Pose, InverseComposesToIdentity) {
  torch::manual_seed(3);
  PoseTransform p{torch::randn({4, 3}, torch::kFloat64) * 0.4, torch::randn({4, 3}, torch::kFloat64)};
  const auto m = torch::bmm(p.matrix(), p.inverse().matrix());
  EXPECT_LT((m - torch::eye(4, torch::kFloat64).expand({4, 4, 4})).abs().max().item<double>(), 1e-12);
}

TEST(Pose, FromVectorSplitsRotationFirst) {
  const auto v = torch::arange(6, torch::kFloat64).view({1, 6});
  const auto p = PoseTransform::from_vector(v);
  EXPECT_EQ(p.axis_angle[0][2].item<double>(), 2.0);
  EXPECT_EQ(p.translation[0][0].item<double>(), 3.0);
}

TEST(Projection, IdentityRoundTrip) {
  torch::manual_seed(0);
  const auto k = kitti_like();
  const auto depth = torch::rand({2, 1, 32, 64}, torch::kFloat64) * 50 + 0.5;
  const auto proj = project(backproject(depth, k), PoseTransform::identity(2), k);
  const auto grid = pixel_grid(32, 64).expand({2, 32, 64, 2});
  EXPECT_LT((proj.pixels - grid).abs().max().item<double>(), 1e-9);
  EXPECT_LT((proj.depth - depth).abs().max().item<double>(), 1e-9);
  EXPECT_FALSE(proj.out_of_view.any().item<bool>());
}

TEST(Projection, PointsBehindCameraAreFlagged) {
  const auto k = kitti_like();
  auto pts = torch::tensor({0.0, 0.0, 0.0, 0.0, -2.0, 3.0}, torch::kFloat64).view({1, 3, 1, 2});
  const auto proj = project(pts, PoseTransform::identity(1), k);
  EXPECT_TRUE(proj.out_of_view[0][0][0][0].item<bool>());
  EXPECT_FALSE(proj.out_of_view[0][0][0][1].item<bool>());
  EXPECT_DOUBLE_EQ(proj.out_of_view_fraction(), 0.5);
}

TEST(Projection, RejectsNonPositiveDepth) {
  auto depth = torch::ones({1, 1, 4, 4}, torch::kFloat64);
  depth[0][0][1][1] = 0;
  EXPECT_THROW(backproject(depth, {3, 3, 1.5, 1.5, 4, 4}), InvalidInput);
  auto valid = torch::ones({1, 1, 4, 4}, torch::kBool);
  valid[0][0][1][1] = false;
  EXPECT_NO_THROW(backproject(depth, {3, 3, 1.5, 1.5, 4, 4}, valid));
}

TEST(Warp, IntegerShiftMatchesSlicing) {
  torch::manual_seed(1);
  const auto src = torch::rand({1, 3, 8, 10}, torch::kFloat64);
  auto grid = pixel_grid(8, 10).clone();
  grid.select(3, 0) += 2.0;  // sample two columns to the right
  const auto out = warp(src, grid);
  using torch::indexing::Slice;
  EXPECT_LT((out.index({Slice(), Slice(), Slice(), Slice(0, 8)}) - src.index({Slice(), Slice(), Slice(), Slice(2, 10)}))
                .abs()
                .max()
                .item<double>(),
            1e-12);
  // border clamp: beyond the last column the edge value repeats
  EXPECT_LT((out.index({Slice(), Slice(), Slice(), 9}) - src.index({Slice(), Slice(), Slice(), 9})).abs().max().item<double>(),
            1e-12);
}

TEST(Warp, HalfPixelIsBilinearAverage) {
  const auto src = torch::tensor({0.0, 1.0, 4.0, 9.0}, torch::kFloat64).view({1, 1, 2, 2});
  const auto grid = torch::tensor({0.5, 0.5}, torch::kFloat64).view({1, 1, 1, 2});
  EXPECT_NEAR(warp(src, grid).item<double>(), 3.5, 1e-12);
}

TEST(SynthesizeView, IdentityPoseReturnsSource) {
  torch::manual_seed(2);
  const auto k = kitti_like();
  const auto src = torch::rand({1, 3, 32, 64}, torch::kFloat64);
  const auto depth = torch::rand({1, 1, 32, 64}, torch::kFloat64) * 10 + 1;
  const auto out = synthesize_view(depth, src, PoseTransform::identity(1), k);
  EXPECT_LT((out - src).abs().max().item<double>(), 1e-9);
}

TEST(SynthesizeView, LateralMotionShiftsByDisparity) {
  // Translating the camera by b along x at depth z moves content by fx*b/z pixels.
  const auto k = kitti_like();
  const double z = 29.0, b = 1.0;  // shift = 58 * 1 / 29 = 2 px
  const auto src = torch::arange(64, torch::kFloat64).view({1, 1, 1, 64}).expand({1, 1, 32, 64}).contiguous();
  PoseTransform p{torch::zeros({1, 3}, torch::kFloat64), torch::tensor({b, 0.0, 0.0}, torch::kFloat64).view({1, 3})};
  const auto out = synthesize_view(torch::full({1, 1, 32, 64}, z, torch::kFloat64), src, p, k);
  EXPECT_NEAR(out[0][0][5][10].item<double>(), 12.0, 1e-9);
}
