#pragma once

// Real (unsupervised triplets) and virtual (depth + semantics) datasets and
// their canonical on-disk layout:
//
//   root/classes.txt                         class name -> id (JSON object)
//   root/{real|virtual}/seq_NNNN/intrinsics.txt  "fx fy cx cy" at native size
//   root/{real|virtual}/seq_NNNN/rgb_%06d.png
//   root/virtual/seq_NNNN/depth_%06d.png     uint16 centimeters, 0 = invalid
//   root/virtual/seq_NNNN/sem_%06d.png       uint8 class index

#include <torch/torch.h>

#include <array>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "vsdepth/geometry.hpp"

namespace vsdepth {

enum class Domain { kReal, kVirtual };

std::string to_string(Domain d);
Domain domain_from_string(const std::string& s);

using ClassLegend = std::map<int, std::string>;

struct ClassMap {
  torch::Tensor ids;  // [H,W] int64
  ClassLegend legend;
};

/// Frames at t-1, t, t+1. Virtual samples carry ground truth for the center
/// frame; real samples carry none.
struct ImageTriplet {
  std::array<torch::Tensor, 3> frames;  // [3,H,W] float32 in [0,1]
  Intrinsics intrinsics;
  Domain domain = Domain::kReal;
  std::optional<DepthMap> gt_depth;
  std::optional<ClassMap> gt_semantics;
  std::string sequence;
  int center_index = 0;

  const torch::Tensor& center() const { return frames[1]; }
};

struct Sequence {
  std::string name;
  Intrinsics intrinsics;
  std::vector<torch::Tensor> frames;    // [3,H,W] float32
  std::vector<DepthMap> depth;          // empty for real sequences
  std::vector<torch::Tensor> semantics; // [H,W] int64, empty for real sequences

  size_t triplet_count() const { return frames.size() >= 3 ? frames.size() - 2 : 0; }
};

class Dataset {
 public:
  Dataset() = default;
  Dataset(Domain domain, ClassLegend legend) : domain_(domain), legend_(std::move(legend)) {}

  void add_sequence(Sequence seq);

  Domain domain() const { return domain_; }
  const ClassLegend& legend() const { return legend_; }
  const std::vector<Sequence>& sequences() const { return sequences_; }

  /// Number of triplets over all sequences; triplets never straddle sequences.
  size_t size() const { return index_.size(); }
  bool empty() const { return index_.empty(); }
  ImageTriplet triplet(size_t i) const;

  /// Keeps the listed sequences only (by position).
  Dataset subset(const std::vector<size_t>& sequence_positions) const;

  /// (training part, last `count` sequences). Throws InvalidInput when fewer
  /// than count + 1 sequences exist.
  std::pair<Dataset, Dataset> split_last(size_t count) const;

 private:
  Domain domain_ = Domain::kReal;
  ClassLegend legend_;
  std::vector<Sequence> sequences_;
  std::vector<std::pair<size_t, size_t>> index_;  // (sequence, center frame)
};

struct LoadOptions {
  int width = 0;             // processing resolution; 0 keeps the native size
  int height = 0;
  double max_depth = 80.0;   // ground truth is clipped to this on load
};

ClassLegend read_legend(const std::filesystem::path& classes_file);
void write_legend(const std::filesystem::path& classes_file, const ClassLegend& legend);

/// Loads one seq_NNNN directory. Frames are LANCZOS-resampled to the
/// processing resolution and intrinsics rescaled proportionally; depth and
/// class maps use nearest-neighbour resampling.
Sequence load_sequence(const std::filesystem::path& dir, Domain domain, const LoadOptions& opts);

/// Loads root/{real|virtual}/seq_* in lexical order.
Dataset load_dataset(const std::filesystem::path& root, Domain domain, const LoadOptions& opts);

void write_sequence(const std::filesystem::path& dir, const Sequence& seq, Domain domain);

/// Image tensor helpers. PNG pixel values map to [0,1] by /255.
torch::Tensor read_rgb(const std::filesystem::path& file);
void write_rgb(const std::filesystem::path& file, const torch::Tensor& image);
DepthMap read_depth(const std::filesystem::path& file, double max_depth);
void write_depth(const std::filesystem::path& file, const DepthMap& depth);

}  // namespace vsdepth
