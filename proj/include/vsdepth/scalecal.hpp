#pragma once

// Scale recovery: the global factor psi obtained from a self-supervised run on
// virtual data, and per-image median scaling for relative evaluation.

#include <torch/torch.h>

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>

#include "vsdepth/data.hpp"
#include "vsdepth/networks.hpp"

namespace vsdepth {

struct TrainConfig;

inline constexpr double kEvalMinDepth = 1e-3;
inline constexpr double kDefaultCap = 80.0;

/// Anything that maps a triplet to a depth map at the triplet's resolution.
/// Only the center frame may be used; the rest is there for oracles.
using DepthPredictor = std::function<DepthMap(const ImageTriplet&)>;

enum class ScaleSource { kGlobalVirtual, kPerImage };

std::string to_string(ScaleSource s);

struct ScaleFactor {
  double psi = 1.0;
  ScaleSource source = ScaleSource::kPerImage;
  double gt_median = 0;
  double pred_median = 0;
};

/// Median of a 1-d tensor; mean of the two middle values for even sizes.
double median_of(const torch::Tensor& values);

/// Pixels with valid GT inside (min_depth, cap) and a valid prediction.
torch::Tensor scale_pixels(const DepthMap& pred, const DepthMap& gt, double cap = kDefaultCap,
                           double min_depth = kEvalMinDepth);

/// median(gt) / median(pred) over scale_pixels. Throws InvalidInput when
/// nothing overlaps or the prediction median is zero.
ScaleFactor per_image_scale(const DepthMap& pred, const DepthMap& gt, double cap = kDefaultCap,
                            double min_depth = kEvalMinDepth);

/// Multiplies by psi and clamps to [min_depth, cap].
DepthMap apply_scale(const DepthMap& pred, const ScaleFactor& s, double cap = kDefaultCap,
                     double min_depth = kEvalMinDepth);

struct CalibrationConfig {
  int64_t steps = 300;
  int batch_size = 8;
  uint64_t seed = 0;
  int max_images = 0;  // images used for the medians; 0 takes every triplet

  void validate() const;
};

/// Pooled medians of `model` and the GT over the virtual set.
ScaleFactor calibrate_global_scale(const Dataset& virtual_, const DepthPredictor& model, double d_max,
                                   int max_images = 0);

/// Trains a depth/pose pair on virtual triplets with the self-supervised
/// loss only (the GT is never read) and returns the depth network.
DepthNetwork train_self_supervised_only(const Dataset& virtual_, const ModelConfig& mcfg, const TrainConfig& tcfg,
                                        const CalibrationConfig& ccfg);

/// Throwaway run followed by the pooled-median ratio; the model is dropped.
ScaleFactor calibrate_global_scale(const Dataset& virtual_, const ModelConfig& mcfg, const TrainConfig& tcfg,
                                   const CalibrationConfig& ccfg);

/// Depth at the triplet's resolution from the finest disparity output.
DepthPredictor network_predictor(DepthNetwork net, const ModelConfig& mcfg);

/// psi as one decimal number in a text file.
void write_psi(const std::filesystem::path& file, double psi);
double read_psi(const std::filesystem::path& file);

}  // namespace vsdepth
