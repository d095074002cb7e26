#pragma once

// Training losses: photometric self-supervision with minimum reprojection and
// auto-masking, semantically weighted L1 supervision, and the logistic
// domain-classification loss.

#include <torch/torch.h>

#include <map>
#include <string>
#include <utility>
#include <vector>

#include "vsdepth/geometry.hpp"

namespace vsdepth {

struct ClassMap;  // data.hpp

inline constexpr double kSsimC1 = 0.01 * 0.01;
inline constexpr double kSsimC2 = 0.03 * 0.03;
inline constexpr double kPhotometricAlpha = 0.85;

/// Windowed SSIM over 3x3 reflection-padded neighbourhoods, averaged over
/// channels. [B,C,H,W] x2 -> [B,1,H,W].
torch::Tensor ssim(const torch::Tensor& a, const torch::Tensor& b);

/// alpha * clamp((1 - ssim)/2, 0, 1) + (1 - alpha) * |a - b|, channel mean. [B,1,H,W].
torch::Tensor photometric_error(const torch::Tensor& a, const torch::Tensor& b,
                                double alpha = kPhotometricAlpha);

/// Pixelwise min(pe(center, prev), pe(center, next)).
torch::Tensor min_photometric_error(const torch::Tensor& prev, const torch::Tensor& center,
                                    const torch::Tensor& next);

/// [warped < identity], strict, detached from the graph. Float 0/1 tensor.
torch::Tensor auto_mask(const torch::Tensor& identity_pe, const torch::Tensor& warped_pe);

/// Mean over all pixels of mask * warped_pe.
torch::Tensor conditioned_photometric_error(const torch::Tensor& mask, const torch::Tensor& warped_pe);

/// Edge-aware first-order smoothness of the mean-normalized disparity.
torch::Tensor smoothness(const torch::Tensor& disparity, const torch::Tensor& image);

/// Maps sigmoid disparity to metric depth with range (min_depth, max_depth).
torch::Tensor disparity_to_depth(const torch::Tensor& disparity, double min_depth, double max_depth);

struct SelfSupervisedTerms {
  torch::Tensor loss;                // scalar, averaged over scales
  torch::Tensor photometric;         // scalar, cpe part only (averaged over scales)
  torch::Tensor smoothness;          // scalar, unweighted smoothness part
  torch::Tensor mask;                // [B,1,H,W] auto-mask at scale 0
  double mask_fraction = 0;
};

struct SelfSupervisedInputs {
  torch::Tensor prev, center, next;           // [B,3,H,W], unit range
  std::vector<torch::Tensor> disparities;     // one per scale, [B,1,H/2^s,W/2^s]
  PoseTransform to_prev, to_next;             // T_{t->t-1}, T_{t->t+1}
  Intrinsics intrinsics;                      // at full resolution
};

/// Multi-scale minimum-reprojection loss with auto-masking plus weighted
/// smoothness. Each scale's disparity is upsampled to full resolution before
/// view synthesis; smoothness is taken at native scale and divided by 2^s.
SelfSupervisedTerms self_supervised_loss(const SelfSupervisedInputs& in, double smoothness_weight,
                                         double min_depth, double max_depth);

/// Mean over pixels of mask * |pred - gt|.
torch::Tensor supervised_loss(const torch::Tensor& pred, const torch::Tensor& gt, const torch::Tensor& mask);

/// Per-pixel supervision weights from class weights, zeroed on sky and on
/// ground truth at or beyond `max_depth` (and on invalid ground truth).
/// `weights` is keyed by class name. Throws ConfigError for a class id with
/// no weight. Returns a float64 [H,W] tensor.
torch::Tensor build_supervision_mask(const torch::Tensor& gt_depth, const ClassMap& classes, double max_depth,
                                     const std::map<std::string, double>& weights);

struct DomainLosses {
  torch::Tensor real;     // BCE of real logits against label 1 (0 when empty)
  torch::Tensor virtual_; // BCE of virtual logits against label 0 (0 when empty)
};

/// Logistic domain loss, computed separately per domain and mean-reduced.
/// Either side may be an undefined or empty tensor.
DomainLosses domain_loss(const torch::Tensor& logits_real, const torch::Tensor& logits_virtual);

}  // namespace vsdepth
