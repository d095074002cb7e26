#include "vsdepth/networks.hpp"

#include <cmath>

#include "vsdepth/error.hpp"

namespace vsdepth {

namespace nn = torch::nn;
namespace F = torch::nn::functional;

namespace {

constexpr double kInputMean = 0.45;
constexpr double kInputStd = 0.225;

nn::Conv2d conv3x3(int64_t in, int64_t out, int64_t stride = 1) {
  return nn::Conv2d(nn::Conv2dOptions(in, out, 3).stride(stride).padding(1));
}

nn::Conv2d conv3x3_reflect(int64_t in, int64_t out) {
  return nn::Conv2d(nn::Conv2dOptions(in, out, 3).padding(1).padding_mode(torch::kReflect));
}

void check_widths(const Widths& w, const char* what) {
  for (auto c : w)
    if (c <= 0) throw ConfigError(std::string(what) + " widths must be positive", what);
}

class ConvBackbone : public Backbone {
 public:
  explicit ConvBackbone(const Widths& widths) : widths_(widths) {
    int64_t in = 3;
    for (int i = 0; i < kNumFeatureLevels; ++i) {
      down_.push_back(register_module("down" + std::to_string(i), conv3x3(in, widths[i], 2)));
      refine_.push_back(register_module("refine" + std::to_string(i), conv3x3(widths[i], widths[i])));
      in = widths[i];
    }
  }

  std::vector<torch::Tensor> forward(const torch::Tensor& x) override {
    std::vector<torch::Tensor> out;
    auto h = (x - kInputMean) / kInputStd;
    for (int i = 0; i < kNumFeatureLevels; ++i) {
      h = F::elu(down_[i]->forward(h));
      h = F::elu(refine_[i]->forward(h));
      out.push_back(h);
    }
    return out;
  }

  Widths channels() const override { return widths_; }

 private:
  Widths widths_;
  std::vector<nn::Conv2d> down_, refine_;
};

class ResidualBackbone : public Backbone {
 public:
  explicit ResidualBackbone(const Widths& widths) : widths_(widths) {
    int64_t in = 3;
    for (int i = 0; i < kNumFeatureLevels; ++i) {
      const auto s = std::to_string(i);
      down_.push_back(register_module("down" + s, conv3x3(in, widths[i], 2)));
      a_.push_back(register_module("res" + s + "a", conv3x3(widths[i], widths[i])));
      b_.push_back(register_module("res" + s + "b", conv3x3(widths[i], widths[i])));
      in = widths[i];
    }
  }

  std::vector<torch::Tensor> forward(const torch::Tensor& x) override {
    std::vector<torch::Tensor> out;
    auto h = (x - kInputMean) / kInputStd;
    for (int i = 0; i < kNumFeatureLevels; ++i) {
      h = F::relu(down_[i]->forward(h));
      h = F::relu(h + b_[i]->forward(F::relu(a_[i]->forward(h))));
      out.push_back(h);
    }
    return out;
  }

  Widths channels() const override { return widths_; }

 private:
  Widths widths_;
  std::vector<nn::Conv2d> down_, a_, b_;
};

struct GradReverse : public torch::autograd::Function<GradReverse> {
  static torch::Tensor forward(torch::autograd::AutogradContext* ctx, const torch::Tensor& x, double scale) {
    ctx->saved_data["scale"] = scale;
    return x.clone();
  }
  static torch::autograd::variable_list backward(torch::autograd::AutogradContext* ctx,
                                                 torch::autograd::variable_list grad) {
    const double scale = ctx->saved_data["scale"].toDouble();
    return {grad[0] * -scale, torch::Tensor()};
  }
};

}  // namespace

void ModelConfig::validate() const {
  // the deepest level is 1/32 of the input and needs two pixels for reflection padding
  if (width < 64 || height < 64 || width % 32 != 0 || height % 32 != 0)
    throw ConfigError("model resolution must be multiples of 32 and at least 64, got " + std::to_string(width) + "x" +
                          std::to_string(height),
                      width < 64 || width % 32 != 0 ? "width" : "height");
  check_widths(encoder_widths, "encoder_widths");
  check_widths(pyramid_widths, "pyramid_widths");
  check_widths(decoder_widths, "decoder_widths");
  if (classifier_hidden <= 0) throw ConfigError("classifier_hidden must be positive", "classifier_hidden");
  if (!(min_depth > 0 && min_depth < max_depth))
    throw ConfigError("need 0 < min_depth < max_depth", "min_depth");
  const auto names = backbone_names();
  if (std::find(names.begin(), names.end(), backbone) == names.end())
    throw ConfigError("unknown backbone '" + backbone + "'", "backbone");
}

std::shared_ptr<Backbone> make_backbone(const std::string& name, const Widths& widths) {
  if (name == "conv") return std::make_shared<ConvBackbone>(widths);
  if (name == "residual") return std::make_shared<ResidualBackbone>(widths);
  throw ConfigError("unknown backbone '" + name + "'", "backbone");
}

std::vector<std::string> backbone_names() { return {"conv", "residual"}; }

PyramidAdapterImpl::PyramidAdapterImpl(const Widths& in, const Widths& out) {
  for (int i = 0; i < kNumFeatureLevels; ++i) {
    nn::Sequential block(nn::Conv2d(nn::Conv2dOptions(in[i], out[i], 3).padding(1).bias(false)),
                         nn::BatchNorm2d(out[i]), nn::ReLU());
    blocks_.push_back(register_module("block" + std::to_string(i), block));
  }
}

std::vector<torch::Tensor> PyramidAdapterImpl::forward(const std::vector<torch::Tensor>& features) {
  if (features.size() != blocks_.size()) throw InvalidInput("pyramid expects five feature levels");
  std::vector<torch::Tensor> out;
  for (size_t i = 0; i < blocks_.size(); ++i) out.push_back(blocks_[i]->forward(features[i]));
  return out;
}

DepthDecoderImpl::DepthDecoderImpl(const Widths& in, const Widths& widths) {
  upconv0_.resize(kNumFeatureLevels, nullptr);
  upconv1_.resize(kNumFeatureLevels, nullptr);
  for (int i = kNumFeatureLevels - 1; i >= 0; --i) {
    const int64_t c_in = i == kNumFeatureLevels - 1 ? in[i] : widths[i + 1];
    upconv0_[i] = register_module("upconv0_" + std::to_string(i), conv3x3_reflect(c_in, widths[i]));
    const int64_t skip = i > 0 ? in[i - 1] : 0;
    upconv1_[i] = register_module("upconv1_" + std::to_string(i), conv3x3_reflect(widths[i] + skip, widths[i]));
  }
  for (int s = 0; s < kNumScales; ++s)
    dispconv_.push_back(register_module("dispconv" + std::to_string(s), conv3x3_reflect(widths[s], 1)));
}

std::vector<torch::Tensor> DepthDecoderImpl::forward(const std::vector<torch::Tensor>& features) {
  std::vector<torch::Tensor> disp(kNumScales);
  auto x = features[kNumFeatureLevels - 1];
  for (int i = kNumFeatureLevels - 1; i >= 0; --i) {
    x = F::elu(upconv0_[i]->forward(x));
    x = F::interpolate(x, F::InterpolateFuncOptions().scale_factor(std::vector<double>{2.0, 2.0}).mode(torch::kNearest));
    if (i > 0) x = torch::cat({x, features[i - 1]}, 1);
    x = F::elu(upconv1_[i]->forward(x));
    if (i < kNumScales) disp[i] = torch::sigmoid(dispconv_[i]->forward(x));
  }
  return disp;
}

DepthNetworkImpl::DepthNetworkImpl(const ModelConfig& cfg) : cfg_(cfg) {
  cfg_.validate();
  encoder_ = register_module("encoder", make_backbone(cfg_.backbone, cfg_.encoder_widths));
  pyramid_ = register_module("pyramid", PyramidAdapter(encoder_->channels(), cfg_.pyramid_widths));
  decoder_ = register_module("decoder", DepthDecoder(cfg_.pyramid_widths, cfg_.decoder_widths));
}

DepthOutput DepthNetworkImpl::forward(const torch::Tensor& x) {
  if (x.dim() != 4 || x.size(1) != 3 || x.size(2) != cfg_.height || x.size(3) != cfg_.width)
    throw InvalidInput("depth network expects [B,3," + std::to_string(cfg_.height) + "," +
                       std::to_string(cfg_.width) + "] input");
  DepthOutput out;
  out.features = encoder_->forward(x);
  out.disparities = decoder_->forward(pyramid_->forward(out.features));
  return out;
}

std::vector<torch::Tensor> DepthNetworkImpl::pyramid_decoder_parameters() const {
  auto p = pyramid_->parameters();
  auto d = decoder_->parameters();
  p.insert(p.end(), d.begin(), d.end());
  return p;
}

PoseNetworkImpl::PoseNetworkImpl(const ModelConfig& cfg) : cfg_(cfg) {
  cfg_.validate();
  int64_t in = 6;
  for (int i = 0; i < kNumFeatureLevels; ++i) {
    encoder_.push_back(register_module("enc" + std::to_string(i), conv3x3(in, cfg_.encoder_widths[i], 2)));
    in = cfg_.encoder_widths[i];
  }
  squeeze_ = register_module("squeeze", nn::Conv2d(nn::Conv2dOptions(in, 256, 1)));
  pose0_ = register_module("pose0", conv3x3(256, 256));
  pose1_ = register_module("pose1", conv3x3(256, 256));
  pose2_ = register_module("pose2", nn::Conv2d(nn::Conv2dOptions(256, 6, 1)));
}

torch::Tensor PoseNetworkImpl::forward(const torch::Tensor& a, const torch::Tensor& b) {
  if (a.sizes() != b.sizes()) throw InvalidInput("pose network inputs differ in shape");
  if (a.dim() != 4 || a.size(1) != 3 || a.size(2) != cfg_.height || a.size(3) != cfg_.width)
    throw InvalidInput("pose network expects [B,3," + std::to_string(cfg_.height) + "," +
                       std::to_string(cfg_.width) + "] inputs");
  auto h = (torch::cat({a, b}, 1) - kInputMean) / kInputStd;
  for (auto& c : encoder_) h = F::relu(c->forward(h));
  h = F::relu(squeeze_->forward(h));
  h = F::relu(pose0_->forward(h));
  h = F::relu(pose1_->forward(h));
  h = pose2_->forward(h);
  return h.mean({2, 3}) * kPoseOutputScale;
}

PoseTransform pose_forward(PoseNetwork& net, const torch::Tensor& a, const torch::Tensor& b) {
  return PoseTransform::from_vector(net->forward(a, b));
}

torch::Tensor gradient_reversal(const torch::Tensor& x, double scale) { return GradReverse::apply(x, scale); }

DomainClassifierImpl::DomainClassifierImpl(int64_t in_channels, int64_t hidden) {
  conv_ = register_module("conv", conv3x3(in_channels, 2 * hidden));
  fc1_ = register_module("fc1", nn::Linear(2 * hidden, hidden));
  fc2_ = register_module("fc2", nn::Linear(hidden, 1));
}

torch::Tensor DomainClassifierImpl::forward(const torch::Tensor& feature) {
  auto h = F::relu(conv_->forward(feature)).mean({2, 3});
  h = F::relu(fc1_->forward(h));
  return fc2_->forward(h).squeeze(1);
}

torch::Tensor domain_forward(DomainClassifier& net, const std::vector<torch::Tensor>& features,
                             double reversal_scale) {
  if (features.empty()) throw InvalidInput("domain classifier needs encoder features");
  return net->forward(gradient_reversal(features.back(), reversal_scale));
}

void kaiming_init(nn::Module& module) {
  for (auto& m : module.modules(/*include_self=*/true)) {
    if (auto* conv = m->as<nn::Conv2d>()) {
      nn::init::kaiming_normal_(conv->weight, 0.0, torch::kFanIn, torch::kReLU);
      if (conv->bias.defined()) nn::init::zeros_(conv->bias);
    } else if (auto* fc = m->as<nn::Linear>()) {
      nn::init::kaiming_normal_(fc->weight, 0.0, torch::kFanIn, torch::kReLU);
      nn::init::zeros_(fc->bias);
    } else if (auto* bn = m->as<nn::BatchNorm2d>()) {
      nn::init::ones_(bn->weight);
      nn::init::zeros_(bn->bias);
    }
  }
}

}  // namespace vsdepth
