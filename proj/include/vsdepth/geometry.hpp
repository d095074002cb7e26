#pragma once

// Pinhole projective geometry and differentiable view synthesis.
//
// Tensor layout throughout: images [B,C,H,W], depth [B,1,H,W], camera-space
// points [B,3,H,W], pixel grids [B,H,W,2] holding (u,v) in pixels. Integer
// pixel coordinates address texel centers.

#include <torch/torch.h>

#include <array>
#include <string>

namespace vsdepth {

/// Points closer than this (meters, after the rigid transform) are treated
/// as behind the camera.
inline constexpr double kMinProjectedDepth = 1e-3;

struct Intrinsics {
  double fx = 0, fy = 0;
  double cx = 0, cy = 0;
  int width = 0, height = 0;

  /// Throws InvalidInput unless fx,fy > 0 and the principal point lies
  /// inside the image.
  void validate() const;

  /// Proportional rescale to a new processing resolution.
  Intrinsics scaled_to(int new_width, int new_height) const;

  /// Mirror about the vertical axis (horizontal flip augmentation).
  Intrinsics flipped_horizontally() const;

  torch::Tensor matrix(torch::TensorOptions opts = torch::kFloat64) const;
  torch::Tensor inverse_matrix(torch::TensorOptions opts = torch::kFloat64) const;

  /// Reads "fx fy cx cy" and attaches the native image size.
  static Intrinsics parse(const std::string& text, int width, int height);
  std::string to_string() const;

  bool operator==(const Intrinsics&) const = default;
};

/// Batched rigid motion in axis-angle + translation form. Maps points from
/// the target camera frame into the source camera frame: X' = R X + t.
struct PoseTransform {
  torch::Tensor axis_angle;   // [B,3], radians
  torch::Tensor translation;  // [B,3], meters

  static PoseTransform identity(int64_t batch, torch::TensorOptions opts = torch::kFloat64);
  /// Builds from a 6-vector per row: rotation first, translation second.
  static PoseTransform from_vector(const torch::Tensor& six);

  int64_t batch() const { return axis_angle.size(0); }

  /// Rodrigues' formula, [B,3,3]. Uses series expansions near zero angle so
  /// the result stays orthonormal and differentiable.
  torch::Tensor rotation() const;
  /// Homogeneous [B,4,4] form.
  torch::Tensor matrix() const;
  PoseTransform inverse() const;
};

/// Dense metric depth, [H,W] float64. Invalid pixels hold 0.
struct DepthMap {
  torch::Tensor values;
  torch::Tensor valid;  // bool [H,W]

  /// Marks strictly positive finite entries valid and zeroes the rest.
  static DepthMap from_values(torch::Tensor values);
  int64_t height() const { return values.size(0); }
  int64_t width() const { return values.size(1); }
};

struct Projection {
  torch::Tensor pixels;       // [B,H,W,2] continuous (u,v)
  torch::Tensor depth;        // [B,1,H,W] z after the transform
  torch::Tensor out_of_view;  // [B,1,H,W] bool: z <= kMinProjectedDepth or off-image

  double out_of_view_fraction() const;
};

/// Regular grid of pixel centers, [1,H,W,2].
torch::Tensor pixel_grid(int64_t height, int64_t width, torch::TensorOptions opts = torch::kFloat64);

/// depth(u,v) * K^-1 (u,v,1). `valid`, when defined, restricts the positivity
/// check to those pixels.
torch::Tensor backproject(const torch::Tensor& depth, const Intrinsics& K,
                          const torch::Tensor& valid = {});

/// Same as backproject but at arbitrary continuous pixel positions [B,H,W,2].
torch::Tensor backproject_at(const torch::Tensor& pixels, const torch::Tensor& depth,
                             const Intrinsics& K, const torch::Tensor& valid = {});

Projection project(const torch::Tensor& points, const PoseTransform& pose, const Intrinsics& K);

/// Bilinear sampling of `source` at pixel positions, border clamped.
/// Differentiable with respect to both arguments.
torch::Tensor warp(const torch::Tensor& source, const torch::Tensor& pixels);

/// Reconstructs the target view from `source` given the target depth and the
/// target-to-source motion.
torch::Tensor synthesize_view(const torch::Tensor& target_depth, const torch::Tensor& source,
                              const PoseTransform& pose, const Intrinsics& K);

}  // namespace vsdepth
