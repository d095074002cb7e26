#pragma once

// Procedural street-like scenes rendered from a moving pinhole camera. Each
// scene is rendered twice with different layouts: a "virtual" style with
// exact depth and class ground truth, and a "real" style whose textures use
// a different palette and a global photometric transform, giving a
// controllable appearance gap between the domains.

#include <array>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "vsdepth/data.hpp"

namespace vsdepth {

struct SceneSpec {
  int scenes = 4;
  int frames = 60;
  int width = 128;
  int height = 96;
  uint64_t seed = 1;
  double speed = 0.6;          // meters per frame along the street
  double yaw_amplitude = 0.03; // radians
  double camera_height = 1.5;  // meters above ground
  double domain_gap = 1.0;     // 0 renders both domains with the virtual look
  int supersample = 2;         // per-axis color samples per pixel
  double blur_sigma = 1.0;     // lens blur in pixels

  void validate() const;
};

/// Camera-to-world rotation (row-major 3x3) and camera center.
struct CameraPose {
  std::array<double, 9> rotation{1, 0, 0, 0, 1, 0, 0, 0, 1};
  std::array<double, 3> position{0, 0, 0};
};

/// Motion mapping target-camera points into the source camera frame.
PoseTransform relative_pose(const CameraPose& target, const CameraPose& source);

struct ToyWorld {
  ClassLegend legend;
  Dataset real;
  Dataset virtual_;
  std::vector<std::vector<CameraPose>> real_poses;     // [scene][frame]
  std::vector<std::vector<CameraPose>> virtual_poses;
  /// Ground truth of the real-style renders, kept for diagnostics only.
  std::vector<std::vector<DepthMap>> real_depth;
};

ClassLegend toy_legend();
std::map<std::string, double> toy_class_weights();

ToyWorld generate_toy_world(const SceneSpec& spec);

/// Writes the canonical dataset layout under `root`.
void write_toy_world(const ToyWorld& world, const std::filesystem::path& root);

}  // namespace vsdepth
