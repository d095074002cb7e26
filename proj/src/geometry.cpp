#include "vsdepth/geometry.hpp"

#include <iomanip>
#include <sstream>

#include "vsdepth/error.hpp"

namespace vsdepth {

namespace F = torch::nn::functional;

void Intrinsics::validate() const {
  if (!(fx > 0) || !(fy > 0)) throw InvalidInput("intrinsics: focal lengths must be positive");
  if (width <= 0 || height <= 0) throw InvalidInput("intrinsics: image size must be positive");
  if (cx < 0 || cx >= width || cy < 0 || cy >= height)
    throw InvalidInput("intrinsics: principal point outside the image");
}

Intrinsics Intrinsics::scaled_to(int new_width, int new_height) const {
  const double sx = static_cast<double>(new_width) / width;
  const double sy = static_cast<double>(new_height) / height;
  return {fx * sx, fy * sy, cx * sx, cy * sy, new_width, new_height};
}

Intrinsics Intrinsics::flipped_horizontally() const {
  Intrinsics k = *this;
  k.cx = (width - 1) - cx;
  return k;
}

torch::Tensor Intrinsics::matrix(torch::TensorOptions opts) const {
  return torch::tensor({fx, 0.0, cx, 0.0, fy, cy, 0.0, 0.0, 1.0}, opts).view({3, 3});
}

torch::Tensor Intrinsics::inverse_matrix(torch::TensorOptions opts) const {
  return torch::tensor({1.0 / fx, 0.0, -cx / fx, 0.0, 1.0 / fy, -cy / fy, 0.0, 0.0, 1.0}, opts)
      .view({3, 3});
}

Intrinsics Intrinsics::parse(const std::string& text, int width, int height) {
  std::istringstream in(text);
  Intrinsics k;
  if (!(in >> k.fx >> k.fy >> k.cx >> k.cy))
    throw InvalidInput("intrinsics: expected four numbers 'fx fy cx cy'");
  k.width = width;
  k.height = height;
  k.validate();
  return k;
}

std::string Intrinsics::to_string() const {
  std::ostringstream out;
  out << std::setprecision(17) << fx << ' ' << fy << ' ' << cx << ' ' << cy << '\n';
  return out.str();
}

PoseTransform PoseTransform::identity(int64_t batch, torch::TensorOptions opts) {
  return {torch::zeros({batch, 3}, opts), torch::zeros({batch, 3}, opts)};
}

PoseTransform PoseTransform::from_vector(const torch::Tensor& six) {
  TORCH_CHECK(six.dim() == 2 && six.size(1) == 6, "pose vector must be [B,6]");
  return {six.slice(1, 0, 3), six.slice(1, 3, 6)};
}

torch::Tensor PoseTransform::rotation() const {
  const auto& w = axis_angle;
  const auto opts = w.options();
  const int64_t b = w.size(0);

  const auto theta2 = (w * w).sum(-1);  // [B]
  const auto small = theta2 < 1e-6;
  const auto theta = torch::sqrt(theta2.clamp_min(1e-6));

  // a = sin(t)/t, c = (1 - cos(t))/t^2, with Taylor fallbacks.
  const auto a_series = 1.0 - theta2 / 6.0 + theta2 * theta2 / 120.0;
  const auto c_series = 0.5 - theta2 / 24.0 + theta2 * theta2 / 720.0;
  const auto a = torch::where(small, a_series, torch::sin(theta) / theta);
  const auto c = torch::where(small, c_series, (1.0 - torch::cos(theta)) / (theta * theta));

  const auto zero = torch::zeros({b}, opts);
  const auto wx = w.select(1, 0), wy = w.select(1, 1), wz = w.select(1, 2);
  const auto skew = torch::stack({zero, -wz, wy, wz, zero, -wx, -wy, wx, zero}, 1).view({b, 3, 3});
  const auto eye = torch::eye(3, opts).expand({b, 3, 3});
  return eye + a.view({b, 1, 1}) * skew + c.view({b, 1, 1}) * torch::bmm(skew, skew);
}

torch::Tensor PoseTransform::matrix() const {
  const int64_t b = batch();
  auto top = torch::cat({rotation(), translation.unsqueeze(2)}, 2);  // [B,3,4]
  auto bottom = torch::tensor({0.0, 0.0, 0.0, 1.0}, axis_angle.options()).view({1, 1, 4}).expand({b, 1, 4});
  return torch::cat({top, bottom}, 1);
}

PoseTransform PoseTransform::inverse() const {
  const auto rt = rotation().transpose(1, 2);
  return {-axis_angle, -torch::bmm(rt, translation.unsqueeze(2)).squeeze(2)};
}

DepthMap DepthMap::from_values(torch::Tensor values) {
  if (values.dim() != 2) throw InvalidInput("depth map must be [H,W]");
  values = values.to(torch::kFloat64).contiguous();
  auto valid = (values > 0) & torch::isfinite(values);
  return {values.masked_fill(~valid, 0.0), valid};
}

double Projection::out_of_view_fraction() const {
  return out_of_view.to(torch::kFloat64).mean().item<double>();
}

torch::Tensor pixel_grid(int64_t height, int64_t width, torch::TensorOptions opts) {
  const auto us = torch::arange(width, opts);
  const auto vs = torch::arange(height, opts);
  const auto grids = torch::meshgrid({vs, us}, "ij");
  return torch::stack({grids[1], grids[0]}, -1).unsqueeze(0);
}

namespace {

void check_depth(const torch::Tensor& depth, const torch::Tensor& valid) {
  if (depth.dim() != 4 || depth.size(1) != 1) throw InvalidInput("depth must be [B,1,H,W]");
  const auto bad = valid.defined() ? ((depth <= 0) | ~torch::isfinite(depth)) & valid.to(torch::kBool)
                                   : (depth <= 0) | ~torch::isfinite(depth);
  if (bad.any().item<bool>()) throw InvalidInput("depth must be positive and finite at valid pixels");
}

}  // namespace

torch::Tensor backproject_at(const torch::Tensor& pixels, const torch::Tensor& depth, const Intrinsics& K,
                             const torch::Tensor& valid) {
  K.validate();
  check_depth(depth, valid);
  if (pixels.dim() != 4 || pixels.size(3) != 2) throw InvalidInput("pixel grid must be [B,H,W,2]");
  const auto z = depth.squeeze(1);  // [B,H,W]
  const auto u = pixels.select(3, 0);
  const auto v = pixels.select(3, 1);
  const auto x = (u - K.cx) / K.fx * z;
  const auto y = (v - K.cy) / K.fy * z;
  return torch::stack({x, y, z.expand_as(x)}, 1);
}

torch::Tensor backproject(const torch::Tensor& depth, const Intrinsics& K, const torch::Tensor& valid) {
  if (depth.dim() != 4) throw InvalidInput("depth must be [B,1,H,W]");
  const auto grid = pixel_grid(depth.size(2), depth.size(3), depth.options().requires_grad(false));
  return backproject_at(grid, depth, K, valid);
}

Projection project(const torch::Tensor& points, const PoseTransform& pose, const Intrinsics& K) {
  K.validate();
  if (points.dim() != 4 || points.size(1) != 3) throw InvalidInput("points must be [B,3,H,W]");
  const int64_t b = points.size(0), h = points.size(2), w = points.size(3);

  auto rot = pose.rotation().to(points.dtype());
  auto trans = pose.translation.to(points.dtype());
  if (rot.size(0) != b) {
    if (rot.size(0) != 1) throw InvalidInput("pose batch does not match points");
    rot = rot.expand({b, 3, 3});
    trans = trans.expand({b, 3});
  }

  const auto flat = points.reshape({b, 3, h * w});
  const auto moved = torch::baddbmm(trans.unsqueeze(2), rot, flat).reshape({b, 3, h, w});
  const auto z = moved.select(1, 2);
  const auto z_safe = z.clamp_min(kMinProjectedDepth);
  const auto u = K.fx * moved.select(1, 0) / z_safe + K.cx;
  const auto v = K.fy * moved.select(1, 1) / z_safe + K.cy;

  Projection out;
  out.pixels = torch::stack({u, v}, -1);
  out.depth = z.unsqueeze(1);
  const auto behind = z <= kMinProjectedDepth;
  // slack so border pixels survive round-off
  constexpr double eps = 1e-6;
  const auto off = (u < -eps) | (u > K.width - 1 + eps) | (v < -eps) | (v > K.height - 1 + eps);
  out.out_of_view = (behind | off).unsqueeze(1);
  return out;
}

torch::Tensor warp(const torch::Tensor& source, const torch::Tensor& pixels) {
  if (source.dim() != 4) throw InvalidInput("warp: source must be [B,C,H,W]");
  if (pixels.dim() != 4 || pixels.size(3) != 2) throw InvalidInput("warp: grid must be [B,H,W,2]");
  if (pixels.size(0) != source.size(0)) throw InvalidInput("warp: batch size mismatch");
  const int64_t hs = source.size(2), ws = source.size(3);
  if (hs < 2 || ws < 2) throw InvalidInput("warp: source must be at least 2x2");

  const auto scale = torch::tensor({2.0 / (ws - 1), 2.0 / (hs - 1)}, pixels.options().requires_grad(false));
  const auto normalized = pixels * scale - 1.0;
  return F::grid_sample(source, normalized.to(source.dtype()),
                        F::GridSampleFuncOptions().mode(torch::kBilinear).padding_mode(torch::kBorder).align_corners(true));
}

torch::Tensor synthesize_view(const torch::Tensor& target_depth, const torch::Tensor& source,
                              const PoseTransform& pose, const Intrinsics& K) {
  const auto points = backproject(target_depth, K);
  const auto proj = project(points, pose, K);
  return warp(source, proj.pixels);
}

}  // namespace vsdepth
