#include "vsdepth/scalecal.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <random>
#include <sstream>

#include "vsdepth/error.hpp"
#include "vsdepth/losses.hpp"
#include "vsdepth/trainer.hpp"

namespace vsdepth {

namespace F = torch::nn::functional;

std::string to_string(ScaleSource s) { return s == ScaleSource::kGlobalVirtual ? "global-virtual" : "per-image"; }

double median_of(const torch::Tensor& values) {
  if (values.numel() == 0) throw InvalidInput("median of an empty set");
  const auto sorted = std::get<0>(values.reshape({-1}).to(torch::kFloat64).sort());
  const int64_t n = sorted.numel();
  const auto* p = sorted.data_ptr<double>();
  return n % 2 ? p[n / 2] : 0.5 * (p[n / 2 - 1] + p[n / 2]);
}

torch::Tensor scale_pixels(const DepthMap& pred, const DepthMap& gt, double cap, double min_depth) {
  if (pred.values.sizes() != gt.values.sizes()) throw InvalidInput("prediction and GT sizes differ");
  return gt.valid & pred.valid & (gt.values > min_depth) & (gt.values < cap);
}

namespace {

ScaleFactor ratio(double gt_median, double pred_median, ScaleSource source) {
  if (!(pred_median > 0) || !(gt_median > 0)) throw InvalidInput("zero median in scale computation");
  ScaleFactor s;
  s.psi = gt_median / pred_median;
  s.source = source;
  s.gt_median = gt_median;
  s.pred_median = pred_median;
  if (!std::isfinite(s.psi)) throw InvalidInput("non-finite scale factor");
  return s;
}

}  // namespace

ScaleFactor per_image_scale(const DepthMap& pred, const DepthMap& gt, double cap, double min_depth) {
  const auto m = scale_pixels(pred, gt, cap, min_depth);
  if (!m.any().item<bool>()) throw InvalidInput("per-image scale: no valid overlap");
  return ratio(median_of(gt.values.masked_select(m)), median_of(pred.values.masked_select(m)),
               ScaleSource::kPerImage);
}

DepthMap apply_scale(const DepthMap& pred, const ScaleFactor& s, double cap, double min_depth) {
  if (!(s.psi > 0) || !std::isfinite(s.psi)) throw InvalidInput("scale factor must be positive");
  return {(pred.values * s.psi).clamp(min_depth, cap), pred.valid.clone()};
}

void CalibrationConfig::validate() const {
  if (steps < 0) throw ConfigError("calibration steps must be non-negative", "steps");
  if (batch_size < 1) throw ConfigError("calibration batch_size must be positive", "batch_size");
  if (max_images < 0) throw ConfigError("max_images must be non-negative", "max_images");
}

ScaleFactor calibrate_global_scale(const Dataset& virtual_, const DepthPredictor& model, double d_max,
                                   int max_images) {
  if (virtual_.empty()) throw InvalidInput("empty calibration set");
  const size_t n = max_images > 0 ? std::min<size_t>(virtual_.size(), static_cast<size_t>(max_images)) : virtual_.size();
  std::vector<torch::Tensor> gts, preds;
  for (size_t k = 0; k < n; ++k) {
    // spread the subset evenly over the set
    const size_t i = k * virtual_.size() / n;
    const auto t = virtual_.triplet(i);
    if (!t.gt_depth) throw InvalidInput("calibration triplet without depth GT");
    const auto pred = model(t);
    const auto m = scale_pixels(pred, *t.gt_depth, d_max, kEvalMinDepth);
    gts.push_back(t.gt_depth->values.masked_select(m));
    preds.push_back(pred.values.masked_select(m));
  }
  const auto g = torch::cat(gts), p = torch::cat(preds);
  if (g.numel() == 0) throw InvalidInput("calibration set has no valid GT pixels");
  return ratio(median_of(g), median_of(p), ScaleSource::kGlobalVirtual);
}

DepthNetwork train_self_supervised_only(const Dataset& virtual_, const ModelConfig& mcfg, const TrainConfig& tcfg,
                                        const CalibrationConfig& ccfg) {
  mcfg.validate();
  tcfg.validate();
  ccfg.validate();
  if (virtual_.size() < static_cast<size_t>(ccfg.batch_size)) throw InvalidInput("calibration set smaller than a batch");
  auto models = Models::create(mcfg, ccfg.seed);
  std::vector<torch::Tensor> params = models.depth->parameters();
  const auto pose_params = models.pose->parameters();
  params.insert(params.end(), pose_params.begin(), pose_params.end());
  torch::optim::Adam opt(params, torch::optim::AdamOptions(tcfg.lr));
  const EpochSampler sampler(virtual_.size(), static_cast<size_t>(ccfg.batch_size), ccfg.seed, 0xCA1B);

  models.train(true);
  for (int64_t step = 0; step < ccfg.steps; ++step) {
    std::mt19937_64 rng(ccfg.seed * 1000003ULL + static_cast<uint64_t>(step));
    const auto batch = assemble_real(virtual_, sampler.draw(step), tcfg.augment, rng);
    auto out = models.depth->forward(batch.center_in);
    auto terms = real_path_loss(batch, out, models.pose, mcfg, tcfg.smoothness_weight);
    if (!torch::isfinite(terms.loss).item<bool>()) throw NumericalError("non-finite loss in calibration run");
    opt.zero_grad();
    terms.loss.backward();
    opt.step();
  }
  models.train(false);
  return models.depth;
}

ScaleFactor calibrate_global_scale(const Dataset& virtual_, const ModelConfig& mcfg, const TrainConfig& tcfg,
                                   const CalibrationConfig& ccfg) {
  auto net = train_self_supervised_only(virtual_, mcfg, tcfg, ccfg);
  return calibrate_global_scale(virtual_, network_predictor(net, mcfg), tcfg.d_max, ccfg.max_images);
}

DepthPredictor network_predictor(DepthNetwork net, const ModelConfig& mcfg) {
  return [net, mcfg](const ImageTriplet& t) mutable {
    torch::NoGradGuard no_grad;
    const bool was_training = net->is_training();
    net->eval();
    auto x = t.center().to(torch::kFloat32).unsqueeze(0);
    const int64_t h = x.size(2), w = x.size(3);
    auto bilinear = [](const torch::Tensor& v, int64_t hh, int64_t ww) {
      return F::interpolate(v, F::InterpolateFuncOptions()
                                   .size(std::vector<int64_t>{hh, ww})
                                   .mode(torch::kBilinear)
                                   .align_corners(false));
    };
    if (h != mcfg.height || w != mcfg.width) x = bilinear(x, mcfg.height, mcfg.width).clamp(0, 1);
    auto disp = net->forward(x).disparities[0];
    net->train(was_training);
    if (disp.size(2) != h || disp.size(3) != w) disp = bilinear(disp, h, w);
    return DepthMap::from_values(disparity_to_depth(disp, mcfg.min_depth, mcfg.max_depth)[0][0]);
  };
}

void write_psi(const std::filesystem::path& file, double psi) {
  if (!(psi > 0) || !std::isfinite(psi)) throw InvalidInput("psi must be positive and finite");
  if (file.has_parent_path()) std::filesystem::create_directories(file.parent_path());
  std::ofstream out(file);
  if (!out) throw InvalidInput("cannot write " + file.string());
  out << std::setprecision(17) << psi << '\n';
}

double read_psi(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw InvalidInput("cannot read psi file " + file.string());
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  std::istringstream ss(text);
  double psi = 0;
  std::string rest;
  if (!(ss >> psi) || (ss >> rest) || !(psi > 0) || !std::isfinite(psi))
    throw InvalidInput("psi file " + file.string() + " must hold one positive number");
  return psi;
}

}  // namespace vsdepth
