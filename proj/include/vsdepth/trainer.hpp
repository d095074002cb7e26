#pragma once

// Mixed real/virtual mini-batches, per-weight-group gradient composition with
// the adaptive supervised/self-supervised equalizer, and the optimization
// loop with logging, checkpoints and resume.

#include <torch/torch.h>

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "vsdepth/data.hpp"
#include "vsdepth/losses.hpp"
#include "vsdepth/networks.hpp"

namespace vsdepth {

inline constexpr double kBetaSfMin = 1e-3;
inline constexpr double kBetaSfMax = 1e3;
inline constexpr double kSelfSupervisedFloor = 1e-8;

struct AugmentConfig {
  double jitter_probability = 0.5;
  double brightness = 0.2;
  double contrast = 0.2;
  double saturation = 0.2;
  double hue = 0.1;
  double flip_probability = 0.5;

  void validate() const;
};

struct TrainConfig {
  double lr = 1e-4;
  int batch_size = 16;
  double real_fraction = 0.5;
  double smoothness_weight = 1e-3;
  double beta_da = 10.0;
  double reversal_scale = 1.0;  // 0 disables the adversarial signal into the encoder
  double d_max = 80.0;
  int64_t steps = 20000;
  uint64_t seed = 0;
  int64_t log_every = 1;
  int64_t checkpoint_every = 0;  // 0: only at the end
  AugmentConfig augment;
  std::map<std::string, double> class_weights{{"sky", 0.0}, {"ground", 0.5}, {"building", 0.5}, {"object", 1.0}};

  int real_per_batch() const;
  int virtual_per_batch() const;
  void validate() const;
};

/// Clamped ratio l_sp / max(l_sf, floor). The value is computed from the
/// same doubles that are logged, so it can be replayed bit-exactly.
double loss_equalizer(double l_sp, double l_sf);

/// Sampling without replacement within an epoch. Stateless: the draw at a
/// given step depends only on (seed, stream, step), which makes resumed runs
/// reproduce uninterrupted ones.
class EpochSampler {
 public:
  EpochSampler(size_t population, size_t per_step, uint64_t seed, uint64_t stream);
  std::vector<size_t> draw(int64_t step) const;

 private:
  std::vector<size_t> permutation(int64_t epoch) const;
  size_t population_, per_step_;
  uint64_t seed_, stream_;
};

struct BatchIndices {
  std::vector<size_t> real, virtual_;
};

/// Triplet indices for one step. Throws InvalidInput when a dataset is
/// smaller than its share of a batch.
BatchIndices sample_batch(const Dataset& real, const Dataset& virtual_, const TrainConfig& cfg, int64_t step);

struct ColorJitter {
  double brightness = 1, contrast = 1, saturation = 1, hue = 0;
  bool active = false;
};

/// Brightness, contrast, saturation, then hue rotation; clamped to [0,1].
torch::Tensor apply_jitter(const torch::Tensor& image, const ColorJitter& j);
ColorJitter sample_jitter(const AugmentConfig& cfg, std::mt19937_64& rng);

struct RealBatch {
  torch::Tensor prev, center, next;           // loss targets, [B,3,H,W]
  torch::Tensor prev_in, center_in, next_in;  // network inputs (jittered)
  std::vector<Intrinsics> intrinsics;
};

struct VirtualBatch {
  torch::Tensor image;  // network input (jittered)
  torch::Tensor depth;  // [B,1,H,W]
  torch::Tensor mask;   // [B,1,H,W] supervision weights
};

struct MixedBatch {
  RealBatch real;
  VirtualBatch virtual_;
};

RealBatch assemble_real(const Dataset& ds, const std::vector<size_t>& idx, const AugmentConfig& aug,
                        std::mt19937_64& rng);

/// Builds augmented tensors for the sampled triplets. The same flip and
/// jitter are applied to every frame of a triplet.
MixedBatch assemble_batch(const Dataset& real, const Dataset& virtual_, const BatchIndices& idx,
                          const TrainConfig& cfg, std::mt19937_64& rng);

struct Models {
  DepthNetwork depth{nullptr};
  PoseNetwork pose{nullptr};
  DomainClassifier classifier{nullptr};

  static Models create(const ModelConfig& cfg, uint64_t seed);
  void train(bool on = true);
  std::vector<torch::Tensor> parameters() const;
};

/// Self-supervised loss of a real batch given the depth network's output on
/// the (jittered) center frames; poses come from `pose`.
SelfSupervisedTerms real_path_loss(const RealBatch& b, const DepthOutput& out, PoseNetwork& pose,
                                   const ModelConfig& m, double smoothness_weight);

/// theta^pyde joins pyramid and decoder.
struct WeightGroups {
  std::vector<torch::Tensor> enc, pyde, sf, da;

  static WeightGroups of(const Models& m);
};

struct GradientSet {
  std::vector<torch::Tensor> g_enc, g_pyde, g_sf_aux, g_da_aux;

  static torch::Tensor flat(const std::vector<torch::Tensor>& g);
  bool all_finite() const;
};

/// Gradients of one back-propagation: task loss plus beta_da times the DA
/// loss (whose graph contains the reversal boundary), per weight group.
/// Groups not reached by the graph get zeros.
struct PathGradients {
  std::vector<torch::Tensor> enc, pyde, sf, da;
};

PathGradients backpropagate(const torch::Tensor& task_loss, const torch::Tensor& da_loss, double beta_da,
                            const WeightGroups& w);

/// g_pyde = g^s + b g^r, g_enc = g^s + b g^r, g_sf = g^r, g_da = g^s + g^r.
GradientSet combine_gradients(const PathGradients& s, const PathGradients& r, double beta_sf);

struct LossBundle {
  int64_t step = 0;
  double l_sp = 0, l_sf = 0;
  double l_da_real = 0, l_da_virtual = 0;  // before the beta_da factor
  double beta_sf = 0;
  double da_accuracy = 0;  // classifier accuracy on this batch, both domains
  double mask_fraction = 0;
};

struct StepResult {
  GradientSet gradients;
  LossBundle losses;
};

/// One pass of the gradient algorithm: virtual forward and back-propagation,
/// then real forward and back-propagation, then composition.
StepResult compute_gradients(const MixedBatch& batch, Models& models, const ModelConfig& mcfg, const TrainConfig& cfg);

/// Writes the composed gradients into the parameters' .grad fields.
void install_gradients(const GradientSet& g, const WeightGroups& w);

struct Checkpoint {
  int64_t step = 0;
  std::optional<double> psi;
  std::string config_json;
};

void save_checkpoint(const std::filesystem::path& file, Models& models, torch::optim::Optimizer& opt,
                     const Checkpoint& meta);
/// Restores weights (and optimizer state when `opt` is given).
Checkpoint load_checkpoint(const std::filesystem::path& file, Models& models, torch::optim::Optimizer* opt);
/// Reads only the metadata.
Checkpoint read_checkpoint_meta(const std::filesystem::path& file);

struct TrainOptions {
  std::filesystem::path out_dir;          // log.jsonl and checkpoints go here; empty keeps everything in memory
  std::optional<std::filesystem::path> resume;
  std::optional<double> psi;              // embedded in checkpoints
  std::string config_json;                // embedded in checkpoints
  std::function<void(const LossBundle&)> on_step;
};

struct TrainResult {
  Models models;
  std::vector<LossBundle> history;
  std::filesystem::path checkpoint;  // last checkpoint written, empty when none
};

TrainResult train(const Dataset& real, const Dataset& virtual_, const ModelConfig& mcfg, const TrainConfig& cfg,
                  const TrainOptions& opts = {});

/// Share of center frames the domain classifier assigns to the right
/// domain (logit > 0 means real), evaluated without gradients.
double domain_classifier_accuracy(Models& models, const Dataset& real, const Dataset& virtual_);

/// Line-delimited JSON record for one step.
std::string to_log_line(const LossBundle& b);
LossBundle parse_log_line(const std::string& line);

}  // namespace vsdepth
