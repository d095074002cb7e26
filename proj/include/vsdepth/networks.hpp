#pragma once

// Trainable components: the depth network (backbone encoder, pyramid adapter,
// skip-connected decoder), the pose network, and the domain classifier that
// sits behind a gradient-reversal boundary.

#include <torch/torch.h>

#include <array>
#include <memory>
#include <string>
#include <vector>

#include "vsdepth/geometry.hpp"

namespace vsdepth {

inline constexpr int kNumScales = 4;
inline constexpr int kNumFeatureLevels = 5;
inline constexpr double kPoseOutputScale = 0.01;

using Widths = std::array<int64_t, kNumFeatureLevels>;

struct ModelConfig {
  int width = 128;
  int height = 96;
  std::string backbone = "conv";
  Widths encoder_widths{16, 32, 64, 128, 256};
  Widths pyramid_widths{16, 32, 64, 128, 256};
  Widths decoder_widths{16, 32, 64, 128, 256};
  int64_t classifier_hidden = 64;
  double min_depth = 0.1;
  double max_depth = 100.0;

  void validate() const;
};

/// Feature extractor with five outputs at strides 2, 4, 8, 16 and 32.
/// Inputs are [B,3,H,W] in unit range.
class Backbone : public torch::nn::Module {
 public:
  virtual std::vector<torch::Tensor> forward(const torch::Tensor& x) = 0;
  virtual Widths channels() const = 0;
};

/// Known names: "conv" (plain strided convolutions) and "residual".
std::shared_ptr<Backbone> make_backbone(const std::string& name, const Widths& widths);
std::vector<std::string> backbone_names();

/// Five conv -> batch-norm -> ReLU blocks, one per feature level.
class PyramidAdapterImpl : public torch::nn::Module {
 public:
  PyramidAdapterImpl(const Widths& in, const Widths& out);
  std::vector<torch::Tensor> forward(const std::vector<torch::Tensor>& features);
  const std::vector<torch::nn::Sequential>& blocks() const { return blocks_; }

 private:
  std::vector<torch::nn::Sequential> blocks_;
};
TORCH_MODULE(PyramidAdapter);

/// Upsampling decoder with skip connections; sigmoid disparity at input
/// resolution / {1,2,4,8}.
class DepthDecoderImpl : public torch::nn::Module {
 public:
  DepthDecoderImpl(const Widths& in, const Widths& widths);
  std::vector<torch::Tensor> forward(const std::vector<torch::Tensor>& features);

 private:
  std::vector<torch::nn::Conv2d> upconv0_, upconv1_;
  std::vector<torch::nn::Conv2d> dispconv_;
};
TORCH_MODULE(DepthDecoder);

struct DepthOutput {
  std::vector<torch::Tensor> disparities;  // scale s: [B,1,H/2^s,W/2^s]
  std::vector<torch::Tensor> features;     // raw encoder outputs
};

class DepthNetworkImpl : public torch::nn::Module {
 public:
  explicit DepthNetworkImpl(const ModelConfig& cfg);
  /// Throws InvalidInput when x is not [B,3,height,width].
  DepthOutput forward(const torch::Tensor& x);

  std::shared_ptr<Backbone> encoder() const { return encoder_; }
  PyramidAdapter pyramid() const { return pyramid_; }
  DepthDecoder decoder() const { return decoder_; }

  /// Parameters of the pyramid and decoder together.
  std::vector<torch::Tensor> pyramid_decoder_parameters() const;

 private:
  ModelConfig cfg_;
  std::shared_ptr<Backbone> encoder_;
  PyramidAdapter pyramid_{nullptr};
  DepthDecoder decoder_{nullptr};
};
TORCH_MODULE(DepthNetwork);

/// Pose regressor over a channel-concatenated frame pair. The raw 6-vector
/// (rotation first) is scaled by kPoseOutputScale.
class PoseNetworkImpl : public torch::nn::Module {
 public:
  explicit PoseNetworkImpl(const ModelConfig& cfg);
  torch::Tensor forward(const torch::Tensor& a, const torch::Tensor& b);

 private:
  ModelConfig cfg_;
  std::vector<torch::nn::Conv2d> encoder_;
  torch::nn::Conv2d squeeze_{nullptr}, pose0_{nullptr}, pose1_{nullptr}, pose2_{nullptr};
};
TORCH_MODULE(PoseNetwork);

/// Motion mapping frame `a` coordinates into frame `b`.
PoseTransform pose_forward(PoseNetwork& net, const torch::Tensor& a, const torch::Tensor& b);

/// Identity in the forward pass; multiplies the incoming gradient by -scale
/// on the way back.
torch::Tensor gradient_reversal(const torch::Tensor& x, double scale);

/// Convolution, global average pooling and two fully connected layers over
/// the deepest encoder feature; one logit per image (real = 1).
class DomainClassifierImpl : public torch::nn::Module {
 public:
  DomainClassifierImpl(int64_t in_channels, int64_t hidden);
  torch::Tensor forward(const torch::Tensor& feature);

 private:
  torch::nn::Conv2d conv_{nullptr};
  torch::nn::Linear fc1_{nullptr}, fc2_{nullptr};
};
TORCH_MODULE(DomainClassifier);

/// Classifier logits [B] with the reversal boundary in front of the head.
torch::Tensor domain_forward(DomainClassifier& net, const std::vector<torch::Tensor>& features,
                             double reversal_scale);

/// Kaiming-normal weights, zero biases, unit batch-norm scale.
void kaiming_init(torch::nn::Module& module);

}  // namespace vsdepth
