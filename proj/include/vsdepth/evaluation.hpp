#pragma once

// Depth metrics (abs-rel, sq-rel, rms, rms-log, threshold accuracies), the
// dataset-level evaluation in relative or absolute scale, and breakdowns by
// GT depth range and by semantic class.

#include <nlohmann/json.hpp>
#include <torch/torch.h>

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "vsdepth/data.hpp"
#include "vsdepth/scalecal.hpp"

namespace vsdepth {

enum class ScalingMode { kRelative, kAbsolute };

std::string to_string(ScalingMode m);
ScalingMode scaling_mode_from_string(const std::string& s);

struct MetricsRecord {
  double abs_rel = 0, sq_rel = 0, rms = 0, rms_log = 0;
  double delta1 = 0, delta2 = 0, delta3 = 0;
  int64_t n_pixels = 0;
  int64_t n_images = 0;
  ScalingMode mode = ScalingMode::kRelative;
  std::optional<double> psi;
};

/// Metrics over GT in (min_depth, cap) after clamping pred to [min_depth, cap].
/// delta_n uses a strict threshold. Throws InvalidInput without valid pixels.
MetricsRecord compute_metrics(const DepthMap& pred, const DepthMap& gt, double cap = kDefaultCap,
                              double min_depth = kEvalMinDepth);

/// Fractions of the image size, top/left inclusive, bottom/right exclusive.
struct Crop {
  double top = 0, bottom = 1, left = 0, right = 1;
  void validate() const;
  torch::Tensor mask(int64_t height, int64_t width) const;
};

struct EvalConfig {
  double cap = kDefaultCap;
  double min_depth = kEvalMinDepth;
  std::vector<double> bin_edges;  // empty: no depth breakdown
  bool per_class = false;
  std::optional<Crop> crop;

  void validate() const;
};

/// One entry per depth bin or class. `abs_rel` is empty when no valid pixel
/// falls in it. Occupancy is the share of the valid pixels.
struct BreakdownEntry {
  std::string label;
  double lo = 0, hi = 0;  // bin range; class id in `lo` for classes
  std::optional<double> abs_rel;
  double occupancy = 0;
  int64_t n_pixels = 0;
};

/// Bins [e_i, e_{i+1}) of GT depth. Edges must be strictly increasing.
std::vector<BreakdownEntry> binned_metrics(const DepthMap& pred, const DepthMap& gt,
                                           const std::vector<double>& bin_edges, double cap = kDefaultCap,
                                           double min_depth = kEvalMinDepth);

/// abs-rel restricted to each listed class id. Unknown ids raise ConfigError.
std::vector<BreakdownEntry> masked_metrics(const DepthMap& pred, const DepthMap& gt, const ClassMap& classes,
                                           const std::vector<int>& class_set, double cap = kDefaultCap,
                                           double min_depth = kEvalMinDepth);

struct EvaluationReport {
  MetricsRecord overall;  // averaged over images
  std::vector<BreakdownEntry> bins;     // pixels pooled over the dataset
  std::vector<BreakdownEntry> classes;  // pixels pooled over the dataset
  EvalConfig config;
};

/// Relative mode scales each prediction by its per-image median ratio;
/// absolute mode multiplies by psi (required).
EvaluationReport evaluate_report(const DepthPredictor& model, const Dataset& ds, ScalingMode mode,
                                 std::optional<double> psi, const EvalConfig& cfg = {});
MetricsRecord evaluate(const DepthPredictor& model, const Dataset& ds, ScalingMode mode, std::optional<double> psi,
                       const EvalConfig& cfg = {});

nlohmann::ordered_json to_json(const MetricsRecord& m);
nlohmann::ordered_json to_json(const EvaluationReport& r);
std::string format_table(const EvaluationReport& r);

}  // namespace vsdepth
