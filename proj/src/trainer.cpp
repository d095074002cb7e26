#include "vsdepth/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <nlohmann/json.hpp>

#include "vsdepth/error.hpp"
#include "vsdepth/losses.hpp"

namespace vsdepth {

namespace fs = std::filesystem;

namespace {

constexpr double kPi = 3.14159265358979323846;

uint64_t splitmix(uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

uint64_t hash3(uint64_t a, uint64_t b, uint64_t c) { return splitmix(splitmix(splitmix(a) ^ b) ^ c); }

double uniform(std::mt19937_64& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

torch::Tensor gray(const torch::Tensor& x) {
  return 0.299 * x.select(-3, 0) + 0.587 * x.select(-3, 1) + 0.114 * x.select(-3, 2);
}

void require_finite(const torch::Tensor& t, const char* what) {
  if (!std::isfinite(t.item<double>()))
    throw NumericalError(std::string("non-finite ") + what + " loss; step aborted");
}

torch::Tensor select_rows(const torch::Tensor& t, const torch::Tensor& idx) { return t.index_select(0, idx); }

PoseTransform select_pose(const PoseTransform& p, const torch::Tensor& idx) {
  return {p.axis_angle.index_select(0, idx), p.translation.index_select(0, idx)};
}

// Self-supervised loss over a batch whose samples may carry different
// intrinsics (flips, mixed sequences): evaluated per intrinsics group and
// averaged with group-size weights, which equals the batch mean.
SelfSupervisedTerms grouped_self_supervised(const RealBatch& b, const std::vector<torch::Tensor>& disp,
                                            const PoseTransform& to_prev, const PoseTransform& to_next,
                                            const ModelConfig& m, double smoothness_weight) {
  std::vector<Intrinsics> keys;
  std::vector<std::vector<int64_t>> members;
  for (size_t i = 0; i < b.intrinsics.size(); ++i) {
    auto it = std::find(keys.begin(), keys.end(), b.intrinsics[i]);
    if (it == keys.end()) {
      keys.push_back(b.intrinsics[i]);
      members.push_back({static_cast<int64_t>(i)});
    } else {
      members[static_cast<size_t>(it - keys.begin())].push_back(static_cast<int64_t>(i));
    }
  }
  if (keys.size() == 1) {
    SelfSupervisedInputs in{b.prev, b.center, b.next, disp, to_prev, to_next, keys[0]};
    return self_supervised_loss(in, smoothness_weight, m.min_depth, m.max_depth);
  }
  const double n = static_cast<double>(b.intrinsics.size());
  SelfSupervisedTerms out;
  out.mask = torch::zeros({b.center.size(0), 1, b.center.size(2), b.center.size(3)}, b.center.options());
  for (size_t g = 0; g < keys.size(); ++g) {
    auto idx = torch::tensor(members[g], torch::kInt64);
    std::vector<torch::Tensor> d;
    for (const auto& s : disp) d.push_back(select_rows(s, idx));
    SelfSupervisedInputs in{select_rows(b.prev, idx), select_rows(b.center, idx), select_rows(b.next, idx), d,
                            select_pose(to_prev, idx),  select_pose(to_next, idx),  keys[g]};
    auto t = self_supervised_loss(in, smoothness_weight, m.min_depth, m.max_depth);
    const double w = static_cast<double>(members[g].size()) / n;
    out.loss = out.loss.defined() ? out.loss + w * t.loss : w * t.loss;
    out.photometric = out.photometric.defined() ? out.photometric + w * t.photometric : w * t.photometric;
    out.smoothness = out.smoothness.defined() ? out.smoothness + w * t.smoothness : w * t.smoothness;
    out.mask.index_copy_(0, idx, t.mask);
    out.mask_fraction += w * t.mask_fraction;
  }
  return out;
}

}  // namespace

void AugmentConfig::validate() const {
  auto prob = [](double p, const char* key) {
    if (!(p >= 0 && p <= 1)) throw ConfigError(std::string(key) + " must lie in [0,1]", key);
  };
  prob(jitter_probability, "jitter_probability");
  prob(flip_probability, "flip_probability");
  auto range = [](double r, double hi, const char* key) {
    if (!(r >= 0 && r < hi)) throw ConfigError(std::string(key) + " out of range", key);
  };
  range(brightness, 1.0, "brightness");
  range(contrast, 1.0, "contrast");
  range(saturation, 1.0, "saturation");
  range(hue, 0.5 + 1e-12, "hue");
}

int TrainConfig::real_per_batch() const { return static_cast<int>(std::lround(batch_size * real_fraction)); }
int TrainConfig::virtual_per_batch() const { return batch_size - real_per_batch(); }

void TrainConfig::validate() const {
  if (!(lr > 0)) throw ConfigError("lr must be positive", "lr");
  if (batch_size < 2) throw ConfigError("batch_size must be at least 2", "batch_size");
  if (!(real_fraction > 0 && real_fraction < 1)) throw ConfigError("real_fraction must lie in (0,1)", "real_fraction");
  const double r = batch_size * real_fraction;
  if (std::abs(r - std::round(r)) > 1e-9)
    throw ConfigError("batch_size * real_fraction must be integral", "real_fraction");
  if (!(smoothness_weight >= 0)) throw ConfigError("smoothness_weight must be non-negative", "smoothness_weight");
  if (!(beta_da >= 0)) throw ConfigError("beta_da must be non-negative", "beta_da");
  if (!(reversal_scale >= 0)) throw ConfigError("reversal_scale must be non-negative", "reversal_scale");
  if (!(d_max > 0)) throw ConfigError("d_max must be positive", "d_max");
  if (steps < 0) throw ConfigError("steps must be non-negative", "steps");
  if (log_every < 1) throw ConfigError("log_every must be at least 1", "log_every");
  if (checkpoint_every < 0) throw ConfigError("checkpoint_every must be non-negative", "checkpoint_every");
  for (const auto& [name, w] : class_weights)
    if (!(w >= 0 && w <= 1)) throw ConfigError("class weight for '" + name + "' must lie in [0,1]", "class_weights");
  augment.validate();
}

double loss_equalizer(double l_sp, double l_sf) {
  return std::clamp(l_sp / std::max(l_sf, kSelfSupervisedFloor), kBetaSfMin, kBetaSfMax);
}

EpochSampler::EpochSampler(size_t population, size_t per_step, uint64_t seed, uint64_t stream)
    : population_(population), per_step_(per_step), seed_(seed), stream_(stream) {
  if (per_step_ > population_)
    throw InvalidInput("dataset of " + std::to_string(population_) + " samples is smaller than one batch share of " +
                       std::to_string(per_step_));
}

std::vector<size_t> EpochSampler::permutation(int64_t epoch) const {
  std::vector<size_t> p(population_);
  for (size_t i = 0; i < p.size(); ++i) p[i] = i;
  std::mt19937_64 rng(hash3(seed_, stream_, static_cast<uint64_t>(epoch)));
  for (size_t i = p.size(); i > 1; --i) {
    const size_t j = static_cast<size_t>(rng() % i);
    std::swap(p[i - 1], p[j]);
  }
  return p;
}

std::vector<size_t> EpochSampler::draw(int64_t step) const {
  std::vector<size_t> out;
  out.reserve(per_step_);
  // Each epoch is consumed in whole batches; a partial tail is skipped so no
  // batch repeats a sample.
  const int64_t per_epoch = static_cast<int64_t>(population_ / per_step_);
  const int64_t epoch = step / per_epoch;
  const int64_t slot = step % per_epoch;
  const auto perm = permutation(epoch);
  for (size_t k = 0; k < per_step_; ++k) out.push_back(perm[static_cast<size_t>(slot) * per_step_ + k]);
  return out;
}

BatchIndices sample_batch(const Dataset& real, const Dataset& virtual_, const TrainConfig& cfg, int64_t step) {
  if (real.empty() || virtual_.empty()) throw InvalidInput("both datasets must contain triplets");
  const EpochSampler rs(real.size(), static_cast<size_t>(cfg.real_per_batch()), cfg.seed, 1);
  const EpochSampler vs(virtual_.size(), static_cast<size_t>(cfg.virtual_per_batch()), cfg.seed, 2);
  return {rs.draw(step), vs.draw(step)};
}

ColorJitter sample_jitter(const AugmentConfig& cfg, std::mt19937_64& rng) {
  ColorJitter j;
  if (uniform(rng, 0, 1) >= cfg.jitter_probability) return j;
  j.active = true;
  j.brightness = uniform(rng, 1 - cfg.brightness, 1 + cfg.brightness);
  j.contrast = uniform(rng, 1 - cfg.contrast, 1 + cfg.contrast);
  j.saturation = uniform(rng, 1 - cfg.saturation, 1 + cfg.saturation);
  j.hue = uniform(rng, -cfg.hue, cfg.hue);
  return j;
}

torch::Tensor apply_jitter(const torch::Tensor& image, const ColorJitter& j) {
  if (!j.active) return image;
  auto x = (image * j.brightness).clamp(0, 1);
  const auto m = gray(x).mean({-2, -1}, true).unsqueeze(-3);
  x = ((x - m) * j.contrast + m).clamp(0, 1);
  const auto g = gray(x).unsqueeze(-3);
  x = (g + (x - g) * j.saturation).clamp(0, 1);
  if (j.hue != 0) {
    // Rotation of the chroma plane in YIQ space.
    const double a = 2 * kPi * j.hue, c = std::cos(a), s = std::sin(a);
    const auto to_yiq = torch::tensor({0.299, 0.587, 0.114, 0.596, -0.274, -0.322, 0.211, -0.523, 0.312},
                                      torch::kFloat64).view({3, 3});
    const auto rot = torch::tensor({1.0, 0.0, 0.0, 0.0, c, -s, 0.0, s, c}, torch::kFloat64).view({3, 3});
    const auto m3 = torch::linalg_inv(to_yiq).matmul(rot).matmul(to_yiq).to(x.dtype());
    x = torch::einsum("ij,...jhw->...ihw", {m3, x}).clamp(0, 1);
  }
  return x;
}

RealBatch assemble_real(const Dataset& ds, const std::vector<size_t>& idx, const AugmentConfig& aug,
                        std::mt19937_64& rng) {
  RealBatch b;
  std::vector<torch::Tensor> p, c, n, pi, ci, ni;
  for (size_t i : idx) {
    const ImageTriplet t = ds.triplet(i);
    const bool flip = uniform(rng, 0, 1) < aug.flip_probability;
    const ColorJitter j = sample_jitter(aug, rng);
    auto f = [&](const torch::Tensor& x) { return flip ? x.flip({-1}) : x; };
    p.push_back(f(t.frames[0]));
    c.push_back(f(t.frames[1]));
    n.push_back(f(t.frames[2]));
    pi.push_back(apply_jitter(p.back(), j));
    ci.push_back(apply_jitter(c.back(), j));
    ni.push_back(apply_jitter(n.back(), j));
    b.intrinsics.push_back(flip ? t.intrinsics.flipped_horizontally() : t.intrinsics);
  }
  b.prev = torch::stack(p);
  b.center = torch::stack(c);
  b.next = torch::stack(n);
  b.prev_in = torch::stack(pi);
  b.center_in = torch::stack(ci);
  b.next_in = torch::stack(ni);
  return b;
}

SelfSupervisedTerms real_path_loss(const RealBatch& b, const DepthOutput& out, PoseNetwork& pose,
                                   const ModelConfig& m, double smoothness_weight) {
  const auto to_next = pose_forward(pose, b.center_in, b.next_in);
  const auto to_prev = pose_forward(pose, b.prev_in, b.center_in).inverse();
  return grouped_self_supervised(b, out.disparities, to_prev, to_next, m, smoothness_weight);
}

MixedBatch assemble_batch(const Dataset& real, const Dataset& virtual_, const BatchIndices& idx,
                          const TrainConfig& cfg, std::mt19937_64& rng) {
  MixedBatch b;
  b.real = assemble_real(real, idx.real, cfg.augment, rng);

  std::vector<torch::Tensor> img, depth, mask;
  for (size_t i : idx.virtual_) {
    const ImageTriplet t = virtual_.triplet(i);
    if (!t.gt_depth || !t.gt_semantics) throw InvalidInput("virtual triplet without ground truth");
    const bool flip = uniform(rng, 0, 1) < cfg.augment.flip_probability;
    const ColorJitter j = sample_jitter(cfg.augment, rng);
    auto f = [&](const torch::Tensor& x) { return flip ? x.flip({-1}) : x; };
    auto m = build_supervision_mask(t.gt_depth->values, *t.gt_semantics, cfg.d_max, cfg.class_weights);
    img.push_back(apply_jitter(f(t.center()), j));
    depth.push_back(f(t.gt_depth->values).to(torch::kFloat32).unsqueeze(0));
    mask.push_back(f(m).to(torch::kFloat32).unsqueeze(0));
  }
  b.virtual_.image = torch::stack(img);
  b.virtual_.depth = torch::stack(depth);
  b.virtual_.mask = torch::stack(mask);
  return b;
}

Models Models::create(const ModelConfig& cfg, uint64_t seed) {
  torch::manual_seed(seed);
  Models m;
  m.depth = DepthNetwork(cfg);
  m.pose = PoseNetwork(cfg);
  m.classifier = DomainClassifier(m.depth->encoder()->channels().back(), cfg.classifier_hidden);
  kaiming_init(*m.depth);
  kaiming_init(*m.pose);
  kaiming_init(*m.classifier);
  return m;
}

void Models::train(bool on) {
  depth->train(on);
  pose->train(on);
  classifier->train(on);
}

std::vector<torch::Tensor> Models::parameters() const {
  const auto w = WeightGroups::of(*this);
  std::vector<torch::Tensor> all;
  for (const auto* g : {&w.enc, &w.pyde, &w.sf, &w.da}) all.insert(all.end(), g->begin(), g->end());
  return all;
}

WeightGroups WeightGroups::of(const Models& m) {
  return {m.depth->encoder()->parameters(), m.depth->pyramid_decoder_parameters(), m.pose->parameters(),
          m.classifier->parameters()};
}

torch::Tensor GradientSet::flat(const std::vector<torch::Tensor>& g) {
  if (g.empty()) return torch::zeros({0});
  std::vector<torch::Tensor> parts;
  for (const auto& t : g) parts.push_back(t.reshape({-1}));
  return torch::cat(parts);
}

bool GradientSet::all_finite() const {
  for (const auto* g : {&g_enc, &g_pyde, &g_sf_aux, &g_da_aux})
    for (const auto& t : *g)
      if (!torch::isfinite(t).all().item<bool>()) return false;
  return true;
}

PathGradients backpropagate(const torch::Tensor& task_loss, const torch::Tensor& da_loss, double beta_da,
                            const WeightGroups& w) {
  auto total = task_loss;
  if (da_loss.defined()) total = total + beta_da * da_loss;
  std::vector<torch::Tensor> params;
  for (const auto* g : {&w.enc, &w.pyde, &w.sf, &w.da}) params.insert(params.end(), g->begin(), g->end());
  auto grads = torch::autograd::grad({total}, params, /*grad_outputs=*/{}, /*retain_graph=*/false,
                                     /*create_graph=*/false, /*allow_unused=*/true);
  PathGradients out;
  size_t k = 0;
  auto take = [&](const std::vector<torch::Tensor>& group, std::vector<torch::Tensor>& dst) {
    for (const auto& p : group) {
      auto g = grads[k++];
      dst.push_back(g.defined() ? g : torch::zeros_like(p));
    }
  };
  take(w.enc, out.enc);
  take(w.pyde, out.pyde);
  take(w.sf, out.sf);
  take(w.da, out.da);
  return out;
}

GradientSet combine_gradients(const PathGradients& s, const PathGradients& r, double beta_sf) {
  GradientSet g;
  for (size_t i = 0; i < s.pyde.size(); ++i) g.g_pyde.push_back(s.pyde[i] + beta_sf * r.pyde[i]);
  for (size_t i = 0; i < s.enc.size(); ++i) g.g_enc.push_back(s.enc[i] + beta_sf * r.enc[i]);
  g.g_sf_aux = r.sf;
  for (size_t i = 0; i < s.da.size(); ++i) g.g_da_aux.push_back(s.da[i] + r.da[i]);
  return g;
}

StepResult compute_gradients(const MixedBatch& batch, Models& models, const ModelConfig& mcfg,
                             const TrainConfig& cfg) {
  const auto w = WeightGroups::of(models);
  StepResult res;

  // Virtual path: supervision and domain loss on virtual frames.
  auto vout = models.depth->forward(batch.virtual_.image);
  auto vdepth = disparity_to_depth(vout.disparities[0], mcfg.min_depth, mcfg.max_depth);
  auto l_sp = supervised_loss(vdepth, batch.virtual_.depth, batch.virtual_.mask);
  auto v_logits = domain_forward(models.classifier, vout.features, cfg.reversal_scale);
  auto da_v = domain_loss({}, v_logits).virtual_;
  require_finite(l_sp, "supervised");
  require_finite(da_v, "virtual domain");
  const auto gs = backpropagate(l_sp, da_v, cfg.beta_da, w);

  // Real path: self-supervision and domain loss on real frames.
  const auto& rb = batch.real;
  auto rout = models.depth->forward(rb.center_in);
  auto terms = real_path_loss(rb, rout, models.pose, mcfg, cfg.smoothness_weight);
  auto r_logits = domain_forward(models.classifier, rout.features, cfg.reversal_scale);
  auto da_r = domain_loss(r_logits, {}).real;
  require_finite(terms.loss, "self-supervised");
  require_finite(da_r, "real domain");
  const auto gr = backpropagate(terms.loss, da_r, cfg.beta_da, w);

  auto& L = res.losses;
  L.l_sp = l_sp.item<double>();
  L.l_sf = terms.loss.item<double>();
  L.l_da_virtual = da_v.item<double>();
  L.l_da_real = da_r.item<double>();
  L.beta_sf = loss_equalizer(L.l_sp, L.l_sf);
  L.mask_fraction = terms.mask_fraction;
  const auto correct = (v_logits.detach() < 0).sum() + (r_logits.detach() > 0).sum();
  L.da_accuracy = correct.item<double>() / static_cast<double>(v_logits.size(0) + r_logits.size(0));

  res.gradients = combine_gradients(gs, gr, L.beta_sf);
  if (!res.gradients.all_finite()) throw NumericalError("non-finite gradient; step aborted");
  return res;
}

void install_gradients(const GradientSet& g, const WeightGroups& w) {
  auto put = [](const std::vector<torch::Tensor>& params, const std::vector<torch::Tensor>& grads) {
    if (params.size() != grads.size()) throw InvalidInput("gradient set does not match weight group");
    for (size_t i = 0; i < params.size(); ++i) {
      auto p = params[i];
      p.mutable_grad() = grads[i].detach().clone();
    }
  };
  put(w.enc, g.g_enc);
  put(w.pyde, g.g_pyde);
  put(w.sf, g.g_sf_aux);
  put(w.da, g.g_da_aux);
}

void save_checkpoint(const fs::path& file, Models& models, torch::optim::Optimizer& opt, const Checkpoint& meta) {
  torch::serialize::OutputArchive root;
  auto put = [&](const char* key, torch::nn::Module& m) {
    torch::serialize::OutputArchive a;
    m.save(a);
    root.write(key, a);
  };
  put("enc", *models.depth->encoder());
  put("pyr", *models.depth->pyramid());
  put("dec", *models.depth->decoder());
  put("sf", *models.pose);
  put("da", *models.classifier);
  torch::serialize::OutputArchive oa;
  opt.save(oa);
  root.write("optimizer", oa);
  root.write("step", torch::tensor(meta.step, torch::kInt64));
  root.write("psi", meta.psi ? torch::tensor(*meta.psi, torch::kFloat64) : torch::empty({0}, torch::kFloat64));
  root.write("config", c10::IValue(meta.config_json));
  if (file.has_parent_path()) fs::create_directories(file.parent_path());
  const auto tmp = file.string() + ".tmp";
  root.save_to(tmp);
  fs::rename(tmp, file);
}

namespace {

Checkpoint read_meta(torch::serialize::InputArchive& root) {
  Checkpoint c;
  torch::Tensor step, psi;
  root.read("step", step);
  root.read("psi", psi);
  c10::IValue cfg;
  root.read("config", cfg);
  c.step = step.item<int64_t>();
  if (psi.numel() == 1) c.psi = psi.item<double>();
  c.config_json = cfg.toStringRef();
  return c;
}

torch::serialize::InputArchive open_archive(const fs::path& file) {
  if (!fs::exists(file)) throw InvalidInput("checkpoint not found: " + file.string());
  torch::serialize::InputArchive root;
  try {
    root.load_from(file.string());
  } catch (const c10::Error& e) {
    throw InvalidInput("cannot read checkpoint " + file.string() + ": " + e.what_without_backtrace());
  }
  return root;
}

}  // namespace

Checkpoint load_checkpoint(const fs::path& file, Models& models, torch::optim::Optimizer* opt) {
  auto root = open_archive(file);
  auto get = [&](const char* key, torch::nn::Module& m) {
    torch::serialize::InputArchive a;
    root.read(key, a);
    m.load(a);
  };
  try {
    get("enc", *models.depth->encoder());
    get("pyr", *models.depth->pyramid());
    get("dec", *models.depth->decoder());
    get("sf", *models.pose);
    get("da", *models.classifier);
    if (opt) {
      torch::serialize::InputArchive oa;
      root.read("optimizer", oa);
      opt->load(oa);
    }
    return read_meta(root);
  } catch (const c10::Error& e) {
    throw InvalidInput("checkpoint " + file.string() + " does not match the model: " + e.what_without_backtrace());
  }
}

Checkpoint read_checkpoint_meta(const fs::path& file) {
  auto root = open_archive(file);
  try {
    return read_meta(root);
  } catch (const c10::Error& e) {
    throw InvalidInput("checkpoint " + file.string() + " lacks metadata: " + e.what_without_backtrace());
  }
}

std::string to_log_line(const LossBundle& b) {
  nlohmann::ordered_json j;
  j["step"] = b.step;
  j["l_sp"] = b.l_sp;
  j["l_sf"] = b.l_sf;
  j["l_da_real"] = b.l_da_real;
  j["l_da_virtual"] = b.l_da_virtual;
  j["beta_sf"] = b.beta_sf;
  j["da_accuracy"] = b.da_accuracy;
  j["mask_fraction"] = b.mask_fraction;
  return j.dump();
}

LossBundle parse_log_line(const std::string& line) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(line);
    LossBundle b;
    b.step = j.at("step").get<int64_t>();
    b.l_sp = j.at("l_sp").get<double>();
    b.l_sf = j.at("l_sf").get<double>();
    b.l_da_real = j.at("l_da_real").get<double>();
    b.l_da_virtual = j.at("l_da_virtual").get<double>();
    b.beta_sf = j.at("beta_sf").get<double>();
    b.da_accuracy = j.at("da_accuracy").get<double>();
    b.mask_fraction = j.value("mask_fraction", 0.0);
    return b;
  } catch (const nlohmann::json::exception& e) {
    throw InvalidInput(std::string("malformed log line: ") + e.what());
  }
}

TrainResult train(const Dataset& real, const Dataset& virtual_, const ModelConfig& mcfg, const TrainConfig& cfg,
                  const TrainOptions& opts) {
  mcfg.validate();
  cfg.validate();
  TrainResult result;
  result.models = Models::create(mcfg, cfg.seed);
  auto& models = result.models;
  torch::optim::Adam opt(models.parameters(), torch::optim::AdamOptions(cfg.lr));
  const auto groups = WeightGroups::of(models);

  int64_t start = 0;
  if (opts.resume) start = load_checkpoint(*opts.resume, models, &opt).step;

  std::ofstream log;
  if (!opts.out_dir.empty()) {
    fs::create_directories(opts.out_dir);
    log.open(opts.out_dir / "log.jsonl", opts.resume ? std::ios::app : std::ios::trunc);
  }
  auto checkpoint = [&](int64_t step, const std::string& name) {
    if (opts.out_dir.empty()) return;
    result.checkpoint = opts.out_dir / name;
    save_checkpoint(result.checkpoint, models, opt, {step, opts.psi, opts.config_json});
  };

  for (int64_t step = start; step < cfg.steps; ++step) {
    const auto idx = sample_batch(real, virtual_, cfg, step);
    std::mt19937_64 rng(hash3(cfg.seed, 0xA11C, static_cast<uint64_t>(step)));
    const auto batch = assemble_batch(real, virtual_, idx, cfg, rng);
    models.train(true);
    auto res = compute_gradients(batch, models, mcfg, cfg);
    res.losses.step = step;
    opt.zero_grad();
    install_gradients(res.gradients, groups);
    opt.step();
    result.history.push_back(res.losses);
    if (log.is_open() && step % cfg.log_every == 0) log << to_log_line(res.losses) << '\n' << std::flush;
    if (opts.on_step) opts.on_step(res.losses);
    if (cfg.checkpoint_every > 0 && (step + 1) % cfg.checkpoint_every == 0 && step + 1 < cfg.steps)
      checkpoint(step + 1, "ckpt_" + std::to_string(step + 1) + ".pt");
  }
  checkpoint(std::max(start, cfg.steps), "final.pt");
  models.train(false);
  return result;
}

double domain_classifier_accuracy(Models& models, const Dataset& real, const Dataset& virtual_) {
  torch::NoGradGuard no_grad;
  const bool was_training = models.depth->is_training();
  models.train(false);
  int64_t correct = 0, total = 0;
  auto run = [&](const Dataset& ds, bool is_real) {
    for (size_t i = 0; i < ds.size(); i += 16) {
      std::vector<torch::Tensor> frames;
      for (size_t k = i; k < std::min(ds.size(), i + 16); ++k) frames.push_back(ds.triplet(k).center());
      const auto feats = models.depth->encoder()->forward(torch::stack(frames));
      const auto logits = models.classifier->forward(feats.back());
      correct += (is_real ? (logits > 0) : (logits < 0)).sum().item<int64_t>();
      total += logits.size(0);
    }
  };
  run(real, true);
  run(virtual_, false);
  models.train(was_training);
  if (total == 0) throw InvalidInput("no frames to classify");
  return static_cast<double>(correct) / static_cast<double>(total);
}

}  // namespace vsdepth
