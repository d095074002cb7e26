#include "vsdepth/evaluation.hpp"

#include <cmath>
#include <iomanip>
#include <sstream>

#include "vsdepth/error.hpp"

namespace vsdepth {

std::string to_string(ScalingMode m) { return m == ScalingMode::kRelative ? "relative" : "absolute"; }

ScalingMode scaling_mode_from_string(const std::string& s) {
  if (s == "relative") return ScalingMode::kRelative;
  if (s == "absolute") return ScalingMode::kAbsolute;
  throw ConfigError("mode must be 'relative' or 'absolute', got '" + s + "'", "mode");
}

namespace {

torch::Tensor eval_pixels(const DepthMap& pred, const DepthMap& gt, double cap, double min_depth) {
  if (pred.values.sizes() != gt.values.sizes()) throw InvalidInput("prediction and GT sizes differ");
  if (!(min_depth > 0) || !(min_depth < cap)) throw InvalidInput("need 0 < min_depth < cap");
  return gt.valid & (gt.values > min_depth) & (gt.values < cap);
}

torch::Tensor clamped(const DepthMap& pred, const torch::Tensor& m, double cap, double min_depth) {
  auto p = pred.values.to(torch::kFloat64).masked_select(m);
  if (torch::isnan(p).any().item<bool>()) throw InvalidInput("prediction contains NaN");
  return p.clamp(min_depth, cap);
}

// Sums of |p-g|/g and pixel counts per entry.
struct Tally {
  std::vector<double> err;
  std::vector<int64_t> count;
  int64_t total = 0;

  explicit Tally(size_t n = 0) : err(n, 0.0), count(n, 0) {}

  void add(size_t k, const torch::Tensor& p, const torch::Tensor& g) {
    err[k] += ((p - g).abs() / g).sum().item<double>();
    count[k] += g.numel();
  }

  void fill(std::vector<BreakdownEntry>& out) const {
    for (size_t k = 0; k < out.size(); ++k) {
      out[k].n_pixels = count[k];
      out[k].occupancy = total > 0 ? static_cast<double>(count[k]) / static_cast<double>(total) : 0.0;
      out[k].abs_rel = count[k] > 0 ? std::optional<double>(err[k] / static_cast<double>(count[k])) : std::nullopt;
    }
  }
};

void check_edges(const std::vector<double>& edges) {
  if (edges.size() < 2) throw ConfigError("need at least two bin edges", "bins");
  for (size_t i = 0; i + 1 < edges.size(); ++i)
    if (!(edges[i] < edges[i + 1])) throw ConfigError("bin edges must be strictly increasing", "bins");
}

std::string edge_label(double lo, double hi) {
  std::ostringstream s;
  s << "[" << lo << ", " << hi << ")";
  return s.str();
}

std::vector<BreakdownEntry> bin_entries(const std::vector<double>& edges) {
  std::vector<BreakdownEntry> out;
  for (size_t i = 0; i + 1 < edges.size(); ++i) {
    BreakdownEntry e;
    e.lo = edges[i];
    e.hi = edges[i + 1];
    e.label = edge_label(e.lo, e.hi);
    out.push_back(e);
  }
  return out;
}

std::vector<BreakdownEntry> class_entries(const ClassLegend& legend, const std::vector<int>& class_set) {
  std::vector<BreakdownEntry> out;
  for (int id : class_set) {
    auto it = legend.find(id);
    if (it == legend.end()) throw ConfigError("unknown class id " + std::to_string(id), "classes");
    BreakdownEntry e;
    e.label = it->second;
    e.lo = e.hi = id;
    out.push_back(e);
  }
  return out;
}

void tally_bins(Tally& t, const std::vector<double>& edges, const torch::Tensor& p, const torch::Tensor& g) {
  t.total += g.numel();
  for (size_t i = 0; i + 1 < edges.size(); ++i) {
    const auto in = (g >= edges[i]) & (g < edges[i + 1]);
    t.add(i, p.masked_select(in), g.masked_select(in));
  }
}

void tally_classes(Tally& t, const std::vector<int>& class_set, const torch::Tensor& p, const torch::Tensor& g,
                   const torch::Tensor& ids) {
  t.total += g.numel();
  for (size_t k = 0; k < class_set.size(); ++k) {
    const auto in = ids == class_set[k];
    t.add(k, p.masked_select(in), g.masked_select(in));
  }
}

}  // namespace

MetricsRecord compute_metrics(const DepthMap& pred, const DepthMap& gt, double cap, double min_depth) {
  const auto m = eval_pixels(pred, gt, cap, min_depth);
  const auto g = gt.values.to(torch::kFloat64).masked_select(m);
  if (g.numel() == 0) throw InvalidInput("compute_metrics: no valid pixels");
  const auto p = clamped(pred, m, cap, min_depth);

  MetricsRecord r;
  const auto diff = p - g;
  r.abs_rel = (diff.abs() / g).mean().item<double>();
  r.sq_rel = (diff * diff / g).mean().item<double>();
  r.rms = std::sqrt((diff * diff).mean().item<double>());
  const auto dlog = p.log() - g.log();
  r.rms_log = std::sqrt((dlog * dlog).mean().item<double>());
  const auto ratio = torch::maximum(p / g, g / p);
  r.delta1 = (ratio < 1.25).to(torch::kFloat64).mean().item<double>();
  r.delta2 = (ratio < 1.25 * 1.25).to(torch::kFloat64).mean().item<double>();
  r.delta3 = (ratio < 1.25 * 1.25 * 1.25).to(torch::kFloat64).mean().item<double>();
  r.n_pixels = g.numel();
  r.n_images = 1;
  return r;
}

void Crop::validate() const {
  if (!(0 <= top && top < bottom && bottom <= 1 && 0 <= left && left < right && right <= 1))
    throw ConfigError("crop must satisfy 0 <= top < bottom <= 1 and 0 <= left < right <= 1", "crop");
}

torch::Tensor Crop::mask(int64_t height, int64_t width) const {
  auto m = torch::zeros({height, width}, torch::kBool);
  const auto r0 = static_cast<int64_t>(std::floor(top * height)), r1 = static_cast<int64_t>(std::floor(bottom * height));
  const auto c0 = static_cast<int64_t>(std::floor(left * width)), c1 = static_cast<int64_t>(std::floor(right * width));
  using torch::indexing::Slice;
  m.index_put_({Slice(r0, r1), Slice(c0, c1)}, true);
  return m;
}

void EvalConfig::validate() const {
  if (!(min_depth > 0)) throw ConfigError("min_depth must be positive", "min_depth");
  if (!(cap > min_depth)) throw ConfigError("cap must exceed min_depth", "cap");
  if (!bin_edges.empty()) check_edges(bin_edges);
  if (crop) crop->validate();
}

std::vector<BreakdownEntry> binned_metrics(const DepthMap& pred, const DepthMap& gt,
                                           const std::vector<double>& bin_edges, double cap, double min_depth) {
  check_edges(bin_edges);
  const auto m = eval_pixels(pred, gt, cap, min_depth);
  const auto g = gt.values.to(torch::kFloat64).masked_select(m);
  const auto p = clamped(pred, m, cap, min_depth);
  auto out = bin_entries(bin_edges);
  Tally t(out.size());
  tally_bins(t, bin_edges, p, g);
  t.fill(out);
  return out;
}

std::vector<BreakdownEntry> masked_metrics(const DepthMap& pred, const DepthMap& gt, const ClassMap& classes,
                                           const std::vector<int>& class_set, double cap, double min_depth) {
  if (classes.ids.sizes() != gt.values.sizes()) throw InvalidInput("class map and GT sizes differ");
  auto out = class_entries(classes.legend, class_set);
  const auto m = eval_pixels(pred, gt, cap, min_depth);
  const auto g = gt.values.to(torch::kFloat64).masked_select(m);
  const auto p = clamped(pred, m, cap, min_depth);
  Tally t(out.size());
  tally_classes(t, class_set, p, g, classes.ids.masked_select(m));
  t.fill(out);
  return out;
}

EvaluationReport evaluate_report(const DepthPredictor& model, const Dataset& ds, ScalingMode mode,
                                 std::optional<double> psi, const EvalConfig& cfg) {
  cfg.validate();
  if (mode == ScalingMode::kAbsolute && !psi) throw InvalidInput("absolute evaluation needs psi");
  if (ds.empty()) throw InvalidInput("evaluation dataset is empty");

  EvaluationReport rep;
  rep.config = cfg;
  rep.overall.mode = mode;
  rep.overall.psi = mode == ScalingMode::kAbsolute ? psi : std::nullopt;

  std::vector<int> class_set;
  for (const auto& [id, name] : ds.legend()) class_set.push_back(id);
  if (!cfg.bin_edges.empty()) rep.bins = bin_entries(cfg.bin_edges);
  if (cfg.per_class) rep.classes = class_entries(ds.legend(), class_set);
  Tally bins(rep.bins.size()), classes(rep.classes.size());

  auto& o = rep.overall;
  for (size_t i = 0; i < ds.size(); ++i) {
    const auto t = ds.triplet(i);
    if (!t.gt_depth) throw InvalidInput("evaluation triplet without depth GT");
    DepthMap gt = *t.gt_depth;
    if (cfg.crop) gt.valid = gt.valid & cfg.crop->mask(gt.height(), gt.width());
    const auto m = eval_pixels(gt, gt, cfg.cap, cfg.min_depth);
    if (!m.any().item<bool>()) continue;

    const DepthMap pred = model(t);
    const ScaleFactor s = mode == ScalingMode::kRelative ? per_image_scale(pred, gt, cfg.cap, cfg.min_depth)
                                                         : ScaleFactor{*psi, ScaleSource::kGlobalVirtual, 0, 0};
    const DepthMap scaled = apply_scale(pred, s, cfg.cap, cfg.min_depth);
    const auto r = compute_metrics(scaled, gt, cfg.cap, cfg.min_depth);
    o.abs_rel += r.abs_rel;
    o.sq_rel += r.sq_rel;
    o.rms += r.rms;
    o.rms_log += r.rms_log;
    o.delta1 += r.delta1;
    o.delta2 += r.delta2;
    o.delta3 += r.delta3;
    o.n_pixels += r.n_pixels;
    o.n_images += 1;

    if (rep.bins.empty() && rep.classes.empty()) continue;
    const auto g = gt.values.masked_select(m);
    const auto p = clamped(scaled, m, cfg.cap, cfg.min_depth);
    if (!rep.bins.empty()) tally_bins(bins, cfg.bin_edges, p, g);
    if (!rep.classes.empty()) {
      if (!t.gt_semantics) throw InvalidInput("per-class evaluation needs semantic GT");
      tally_classes(classes, class_set, p, g, t.gt_semantics->ids.masked_select(m));
    }
  }
  if (o.n_images == 0) throw InvalidInput("no image has valid GT pixels");
  const double n = static_cast<double>(o.n_images);
  for (double* v : {&o.abs_rel, &o.sq_rel, &o.rms, &o.rms_log, &o.delta1, &o.delta2, &o.delta3}) *v /= n;
  bins.fill(rep.bins);
  classes.fill(rep.classes);
  return rep;
}

MetricsRecord evaluate(const DepthPredictor& model, const Dataset& ds, ScalingMode mode, std::optional<double> psi,
                       const EvalConfig& cfg) {
  return evaluate_report(model, ds, mode, psi, cfg).overall;
}

nlohmann::ordered_json to_json(const MetricsRecord& m) {
  nlohmann::ordered_json j;
  j["abs_rel"] = m.abs_rel;
  j["sq_rel"] = m.sq_rel;
  j["rms"] = m.rms;
  j["rms_log"] = m.rms_log;
  j["delta1"] = m.delta1;
  j["delta2"] = m.delta2;
  j["delta3"] = m.delta3;
  j["n_pixels"] = m.n_pixels;
  j["n_images"] = m.n_images;
  j["mode"] = to_string(m.mode);
  j["psi"] = m.psi ? nlohmann::ordered_json(*m.psi) : nlohmann::ordered_json(nullptr);
  return j;
}

namespace {

nlohmann::ordered_json breakdown_json(const std::vector<BreakdownEntry>& v, bool is_class) {
  auto arr = nlohmann::ordered_json::array();
  for (const auto& e : v) {
    nlohmann::ordered_json j;
    j["label"] = e.label;
    if (is_class) {
      j["class_id"] = static_cast<int>(e.lo);
    } else {
      j["lo"] = e.lo;
      j["hi"] = e.hi;
    }
    j["abs_rel"] = e.abs_rel ? nlohmann::ordered_json(*e.abs_rel) : nlohmann::ordered_json(nullptr);
    j["present"] = e.abs_rel.has_value();
    j["occupancy"] = e.occupancy;
    j["n_pixels"] = e.n_pixels;
    arr.push_back(j);
  }
  return arr;
}

}  // namespace

nlohmann::ordered_json to_json(const EvaluationReport& r) {
  nlohmann::ordered_json j;
  j["metrics"] = to_json(r.overall);
  j["cap"] = r.config.cap;
  j["min_depth"] = r.config.min_depth;
  if (!r.bins.empty()) j["bins"] = breakdown_json(r.bins, false);
  if (!r.classes.empty()) j["classes"] = breakdown_json(r.classes, true);
  return j;
}

std::string format_table(const EvaluationReport& r) {
  std::ostringstream s;
  const auto& m = r.overall;
  s << "mode " << to_string(m.mode);
  if (m.psi) s << "  psi " << std::setprecision(6) << *m.psi;
  s << "  images " << m.n_images << "  cap " << r.config.cap << " m\n";
  s << std::fixed << std::setprecision(4);
  s << std::setw(10) << "abs_rel" << std::setw(10) << "sq_rel" << std::setw(10) << "rms" << std::setw(10)
    << "rms_log" << std::setw(10) << "d<1.25" << std::setw(10) << "d<1.25^2" << std::setw(10) << "d<1.25^3" << '\n';
  s << std::setw(10) << m.abs_rel << std::setw(10) << m.sq_rel << std::setw(10) << m.rms << std::setw(10)
    << m.rms_log << std::setw(10) << m.delta1 << std::setw(10) << m.delta2 << std::setw(10) << m.delta3 << '\n';
  auto rows = [&](const char* title, const std::vector<BreakdownEntry>& v) {
    if (v.empty()) return;
    s << '\n' << title << '\n' << std::setw(16) << "" << std::setw(10) << "abs_rel" << std::setw(11) << "share" << '\n';
    for (const auto& e : v) {
      s << std::setw(16) << e.label;
      if (e.abs_rel)
        s << std::setw(10) << *e.abs_rel;
      else
        s << std::setw(10) << "absent";
      s << std::setw(10) << 100.0 * e.occupancy << "%\n";
    }
  };
  rows("by GT depth (m)", r.bins);
  rows("by class", r.classes);
  return s.str();
}

}  // namespace vsdepth
