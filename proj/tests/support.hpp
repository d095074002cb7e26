#pragma once

// Helpers shared by the unit tests and the acceptance runner.

#include <torch/torch.h>

#include <functional>
#include <vector>

#include "vsdepth/data.hpp"

namespace vsdepth::testing {

/// max_i |analytic_i - numeric_i| / max_i |numeric_i| for the gradient of a
/// scalar function, with central differences of step h. Double precision.
inline double gradient_relative_error(const std::function<torch::Tensor(const torch::Tensor&)>& f,
                                      const torch::Tensor& x0, double h = 1e-6) {
  auto x = x0.detach().to(torch::kFloat64).clone().requires_grad_(true);
  auto y = f(x);
  const auto analytic = torch::autograd::grad({y}, {x})[0].detach().reshape({-1});

  auto flat = x0.detach().to(torch::kFloat64).clone().reshape({-1});
  std::vector<double> numeric(static_cast<size_t>(flat.numel()));
  torch::NoGradGuard no_grad;
  for (int64_t i = 0; i < flat.numel(); ++i) {
    const double v = flat[i].item<double>();
    flat[i] = v + h;
    const double up = f(flat.view(x0.sizes())).item<double>();
    flat[i] = v - h;
    const double down = f(flat.view(x0.sizes())).item<double>();
    flat[i] = v;
    numeric[static_cast<size_t>(i)] = (up - down) / (2 * h);
  }
  const auto n = torch::tensor(numeric, torch::kFloat64);
  const double scale = n.abs().max().item<double>();
  return (analytic - n).abs().max().item<double>() / std::max(scale, 1e-300);
}

/// Relative difference of two tensors, max-norm.
inline double relative_difference(const torch::Tensor& a, const torch::Tensor& b) {
  const double scale = std::max(a.abs().max().item<double>(), b.abs().max().item<double>());
  if (scale == 0) return 0;
  return (a - b).abs().max().item<double>() / scale;
}

/// One virtual sequence with random frames, given depth maps and a single
/// class everywhere.
inline Dataset virtual_dataset_from_depths(const std::vector<torch::Tensor>& depths, int class_id = 1,
                                           uint64_t seed = 0) {
  ClassLegend legend{{0, "sky"}, {1, "ground"}, {2, "building"}, {3, "object"}};
  Dataset ds(Domain::kVirtual, legend);
  Sequence s;
  s.name = "seq_0000";
  const auto h = depths.front().size(0), w = depths.front().size(1);
  s.intrinsics = {0.6 * w, 0.6 * w, (w - 1) / 2.0, (h - 1) / 2.0, static_cast<int>(w), static_cast<int>(h)};
  torch::manual_seed(seed);
  for (const auto& d : depths) {
    s.frames.push_back(torch::rand({3, h, w}));
    s.depth.push_back(DepthMap::from_values(d));
    s.semantics.push_back(torch::full({h, w}, class_id, torch::kInt64));
  }
  ds.add_sequence(std::move(s));
  return ds;
}

}  // namespace vsdepth::testing
