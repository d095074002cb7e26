#include "vsdepth/losses.hpp"

#include <cmath>

#include "vsdepth/data.hpp"
#include "vsdepth/error.hpp"

namespace vsdepth {

namespace F = torch::nn::functional;

namespace {

void require_same_shape(const torch::Tensor& a, const torch::Tensor& b, const char* what) {
  if (!a.defined() || !b.defined()) throw InvalidInput(std::string(what) + ": undefined input");
  if (a.sizes() != b.sizes()) throw InvalidInput(std::string(what) + ": shape mismatch");
}

torch::Tensor pool3(const torch::Tensor& x) {
  return F::avg_pool2d(F::pad(x, F::PadFuncOptions({1, 1, 1, 1}).mode(torch::kReflect)),
                       F::AvgPool2dFuncOptions(3).stride(1));
}

torch::Tensor resize_to(const torch::Tensor& x, int64_t h, int64_t w, bool area) {
  if (x.size(2) == h && x.size(3) == w) return x;
  auto opts = F::InterpolateFuncOptions().size(std::vector<int64_t>{h, w});
  if (area) return F::interpolate(x, opts.mode(torch::kArea));
  return F::interpolate(x, opts.mode(torch::kBilinear).align_corners(false));
}

}  // namespace

torch::Tensor ssim(const torch::Tensor& a, const torch::Tensor& b) {
  require_same_shape(a, b, "ssim");
  if (a.dim() != 4) throw InvalidInput("ssim: expected [B,C,H,W]");
  const auto mu_a = pool3(a);
  const auto mu_b = pool3(b);
  const auto var_a = pool3(a * a) - mu_a * mu_a;
  const auto var_b = pool3(b * b) - mu_b * mu_b;
  const auto cov = pool3(a * b) - mu_a * mu_b;
  const auto num = (2 * mu_a * mu_b + kSsimC1) * (2 * cov + kSsimC2);
  const auto den = (mu_a * mu_a + mu_b * mu_b + kSsimC1) * (var_a + var_b + kSsimC2);
  return (num / den).mean(1, /*keepdim=*/true);
}

torch::Tensor photometric_error(const torch::Tensor& a, const torch::Tensor& b, double alpha) {
  require_same_shape(a, b, "photometric_error");
  // clamped: round-off can push ssim slightly above 1
  const auto structural = ((1.0 - ssim(a, b)) / 2.0).clamp(0.0, 1.0);
  const auto absolute = (a - b).abs().mean(1, /*keepdim=*/true);
  return alpha * structural + (1.0 - alpha) * absolute;
}

torch::Tensor min_photometric_error(const torch::Tensor& prev, const torch::Tensor& center,
                                    const torch::Tensor& next) {
  require_same_shape(prev, center, "min_photometric_error");
  require_same_shape(next, center, "min_photometric_error");
  return torch::minimum(photometric_error(center, prev), photometric_error(center, next));
}

torch::Tensor auto_mask(const torch::Tensor& identity_pe, const torch::Tensor& warped_pe) {
  require_same_shape(identity_pe, warped_pe, "auto_mask");
  return (warped_pe.detach() < identity_pe.detach()).to(warped_pe.scalar_type());
}

torch::Tensor conditioned_photometric_error(const torch::Tensor& mask, const torch::Tensor& warped_pe) {
  require_same_shape(mask, warped_pe, "conditioned_photometric_error");
  return (mask.detach() * warped_pe).mean();
}

torch::Tensor smoothness(const torch::Tensor& disparity, const torch::Tensor& image) {
  if (disparity.dim() != 4 || image.dim() != 4) throw InvalidInput("smoothness: expected 4-d tensors");
  if (disparity.size(0) != image.size(0) || disparity.size(2) != image.size(2) ||
      disparity.size(3) != image.size(3))
    throw InvalidInput("smoothness: disparity and image sizes differ");
  const auto mean = disparity.mean({2, 3}, /*keepdim=*/true);
  if ((mean.abs() < 1e-12).any().item<bool>()) throw InvalidInput("smoothness: zero-mean disparity");
  const auto d = disparity / mean;

  using torch::indexing::None;
  using torch::indexing::Slice;
  const auto dx = (d.index({"...", Slice(0, -1)}) - d.index({"...", Slice(1, None)})).abs();
  const auto dy = (d.index({"...", Slice(0, -1), Slice()}) - d.index({"...", Slice(1, None), Slice()})).abs();
  const auto ix = (image.index({"...", Slice(0, -1)}) - image.index({"...", Slice(1, None)})).abs().mean(1, true);
  const auto iy = (image.index({"...", Slice(0, -1), Slice()}) - image.index({"...", Slice(1, None), Slice()}))
                      .abs()
                      .mean(1, true);
  return (dx * torch::exp(-ix)).mean() + (dy * torch::exp(-iy)).mean();
}

torch::Tensor disparity_to_depth(const torch::Tensor& disparity, double min_depth, double max_depth) {
  if (!(min_depth > 0) || !(min_depth < max_depth))
    throw InvalidInput("disparity_to_depth: need 0 < min_depth < max_depth");
  const double lo = 1.0 / max_depth;
  const double hi = 1.0 / min_depth;
  return 1.0 / (lo + (hi - lo) * disparity);
}

SelfSupervisedTerms self_supervised_loss(const SelfSupervisedInputs& in, double smoothness_weight,
                                         double min_depth, double max_depth) {
  if (!in.prev.defined() || !in.next.defined()) throw InvalidInput("self_supervised_loss: missing adjacent frames");
  require_same_shape(in.prev, in.center, "self_supervised_loss");
  require_same_shape(in.next, in.center, "self_supervised_loss");
  if (in.disparities.empty()) throw InvalidInput("self_supervised_loss: no disparity scales");

  const int64_t h = in.center.size(2), w = in.center.size(3);
  torch::Tensor identity_pe;
  {
    torch::NoGradGuard no_grad;
    identity_pe = min_photometric_error(in.prev, in.center, in.next);
  }

  SelfSupervisedTerms out;
  auto total = torch::zeros({}, in.center.options());
  auto photometric = torch::zeros({}, in.center.options());
  auto smooth_sum = torch::zeros({}, in.center.options());

  for (size_t s = 0; s < in.disparities.size(); ++s) {
    const auto& disp = in.disparities[s];
    const auto depth = disparity_to_depth(resize_to(disp, h, w, false), min_depth, max_depth);
    const auto from_prev = synthesize_view(depth, in.prev, in.to_prev, in.intrinsics);
    const auto from_next = synthesize_view(depth, in.next, in.to_next, in.intrinsics);
    const auto warped_pe = min_photometric_error(from_prev, in.center, from_next);
    const auto mask = auto_mask(identity_pe, warped_pe);
    const auto cpe = conditioned_photometric_error(mask, warped_pe);

    const auto color = resize_to(in.center, disp.size(2), disp.size(3), true);
    const auto smooth = smoothness(disp, color);

    total = total + cpe + smoothness_weight * smooth / std::pow(2.0, static_cast<double>(s));
    photometric = photometric + cpe;
    smooth_sum = smooth_sum + smooth;
    if (s == 0) {
      out.mask = mask;
      out.mask_fraction = mask.mean().item<double>();
    }
  }
  const double n = static_cast<double>(in.disparities.size());
  out.loss = total / n;
  out.photometric = photometric / n;
  out.smoothness = smooth_sum / n;
  return out;
}

torch::Tensor supervised_loss(const torch::Tensor& pred, const torch::Tensor& gt, const torch::Tensor& mask) {
  require_same_shape(pred, gt, "supervised_loss");
  require_same_shape(mask, gt, "supervised_loss");
  return (mask * (pred - gt).abs()).mean();
}

torch::Tensor build_supervision_mask(const torch::Tensor& gt_depth, const ClassMap& classes, double max_depth,
                                     const std::map<std::string, double>& weights) {
  require_same_shape(gt_depth, classes.ids, "build_supervision_mask");
  const auto ids = classes.ids.to(torch::kInt64).contiguous();
  const int64_t max_id = ids.numel() ? ids.max().item<int64_t>() : 0;
  if (ids.numel() && ids.min().item<int64_t>() < 0) throw ConfigError("negative class id in semantic map");

  std::vector<double> lut(static_cast<size_t>(max_id + 1), 0.0);
  const auto present = std::get<0>(torch::_unique(ids.flatten()));
  for (int64_t i = 0; i < present.numel(); ++i) {
    const auto id = present[i].item<int64_t>();
    const auto name = classes.legend.find(static_cast<int>(id));
    if (name == classes.legend.end())
      throw ConfigError("class id " + std::to_string(id) + " missing from the legend", "classes");
    if (name->second == "sky") continue;
    const auto weight = weights.find(name->second);
    if (weight == weights.end())
      throw ConfigError("no supervision weight for class '" + name->second + "'", "class_weights." + name->second);
    lut[static_cast<size_t>(id)] = weight->second;
  }

  const auto table = torch::tensor(lut, torch::kFloat64);
  auto mask = table.index_select(0, ids.flatten()).view(ids.sizes());
  const auto gt = gt_depth.to(torch::kFloat64);
  const auto beyond = (gt >= max_depth) | (gt <= 0) | ~torch::isfinite(gt);
  return mask.masked_fill(beyond, 0.0);
}

DomainLosses domain_loss(const torch::Tensor& logits_real, const torch::Tensor& logits_virtual) {
  auto side = [](const torch::Tensor& logits, double label, const torch::Tensor& like) {
    if (!logits.defined() || logits.numel() == 0) {
      return torch::zeros({}, like.defined() ? like.options() : torch::TensorOptions(torch::kFloat32));
    }
    return F::binary_cross_entropy_with_logits(logits, torch::full_like(logits, label));
  };
  const auto& like = logits_real.defined() ? logits_real : logits_virtual;
  return {side(logits_real, 1.0, like), side(logits_virtual, 0.0, like)};
}

}  // namespace vsdepth
