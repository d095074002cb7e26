#include "vsdepth/data.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <nlohmann/json.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>
#include <regex>
#include <sstream>

#include "vsdepth/error.hpp"

namespace vsdepth {

namespace fs = std::filesystem;

std::string to_string(Domain d) { return d == Domain::kReal ? "real" : "virtual"; }

Domain domain_from_string(const std::string& s) {
  if (s == "real") return Domain::kReal;
  if (s == "virtual") return Domain::kVirtual;
  throw InvalidInput("unknown domain '" + s + "'");
}

void Dataset::add_sequence(Sequence seq) {
  if (domain_ == Domain::kVirtual && (seq.depth.size() != seq.frames.size() || seq.semantics.size() != seq.frames.size()))
    throw InvalidInput("virtual sequence '" + seq.name + "' lacks depth or semantic ground truth");
  const size_t s = sequences_.size();
  for (size_t c = 1; c + 1 < seq.frames.size(); ++c) index_.emplace_back(s, c);
  sequences_.push_back(std::move(seq));
}

ImageTriplet Dataset::triplet(size_t i) const {
  const auto [s, c] = index_.at(i);
  const Sequence& seq = sequences_[s];
  ImageTriplet t;
  t.frames = {seq.frames[c - 1], seq.frames[c], seq.frames[c + 1]};
  t.intrinsics = seq.intrinsics;
  t.domain = domain_;
  t.sequence = seq.name;
  t.center_index = static_cast<int>(c);
  if (domain_ == Domain::kVirtual) {
    t.gt_depth = seq.depth[c];
    t.gt_semantics = ClassMap{seq.semantics[c], legend_};
  }
  return t;
}

Dataset Dataset::subset(const std::vector<size_t>& sequence_positions) const {
  Dataset out(domain_, legend_);
  for (size_t p : sequence_positions) out.add_sequence(sequences_.at(p));
  return out;
}

std::pair<Dataset, Dataset> Dataset::split_last(size_t count) const {
  if (sequences_.size() < count + 1)
    throw InvalidInput("need more than " + std::to_string(count) + " sequences to hold some out");
  std::vector<size_t> head, tail;
  for (size_t i = 0; i < sequences_.size(); ++i) (i + count < sequences_.size() ? head : tail).push_back(i);
  return {subset(head), subset(tail)};
}

ClassLegend read_legend(const fs::path& classes_file) {
  std::ifstream in(classes_file);
  if (!in) throw InvalidInput("cannot open class legend " + classes_file.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw InvalidInput("malformed class legend " + classes_file.string() + ": " + e.what());
  }
  ClassLegend legend;
  for (const auto& [name, id] : j.items()) legend[id.get<int>()] = name;
  return legend;
}

void write_legend(const fs::path& classes_file, const ClassLegend& legend) {
  nlohmann::ordered_json j;
  for (const auto& [id, name] : legend) j[name] = id;
  std::ofstream(classes_file) << j.dump(2) << '\n';
}

torch::Tensor read_rgb(const fs::path& file) {
  cv::Mat bgr = cv::imread(file.string(), cv::IMREAD_COLOR);
  if (bgr.empty()) throw InvalidInput("cannot read image " + file.string());
  cv::Mat rgb;
  cv::cvtColor(bgr, rgb, cv::COLOR_BGR2RGB);
  auto t = torch::from_blob(rgb.data, {rgb.rows, rgb.cols, 3}, torch::kUInt8).clone();
  return t.permute({2, 0, 1}).to(torch::kFloat32).div_(255.0f).contiguous();
}

void write_rgb(const fs::path& file, const torch::Tensor& image) {
  auto hwc = image.detach().to(torch::kFloat32).clamp(0, 1).mul(255.0f).round().to(torch::kUInt8).permute({1, 2, 0}).contiguous();
  cv::Mat rgb(static_cast<int>(hwc.size(0)), static_cast<int>(hwc.size(1)), CV_8UC3, hwc.data_ptr<uint8_t>());
  cv::Mat bgr;
  cv::cvtColor(rgb, bgr, cv::COLOR_RGB2BGR);
  if (!cv::imwrite(file.string(), bgr)) throw InvalidInput("cannot write " + file.string());
}

DepthMap read_depth(const fs::path& file, double max_depth) {
  cv::Mat raw = cv::imread(file.string(), cv::IMREAD_ANYDEPTH);
  if (raw.empty() || raw.depth() != CV_16U) throw InvalidInput("cannot read 16-bit depth " + file.string());
  auto cm = torch::from_blob(raw.data, {raw.rows, raw.cols}, torch::kInt16).clone().to(torch::kInt32).bitwise_and(0xFFFF);
  auto meters = cm.to(torch::kFloat64) / 100.0;
  meters = torch::where(meters > max_depth, torch::full_like(meters, max_depth), meters);
  return DepthMap::from_values(meters);
}

void write_depth(const fs::path& file, const DepthMap& depth) {
  auto cm = (depth.values * 100.0).round().clamp(0, 65535).masked_fill(~depth.valid, 0).to(torch::kInt32).contiguous();
  cv::Mat out(static_cast<int>(cm.size(0)), static_cast<int>(cm.size(1)), CV_16UC1);
  const auto* src = cm.data_ptr<int32_t>();
  for (int r = 0; r < out.rows; ++r)
    for (int c = 0; c < out.cols; ++c) out.at<uint16_t>(r, c) = static_cast<uint16_t>(src[r * out.cols + c]);
  if (!cv::imwrite(file.string(), out)) throw InvalidInput("cannot write " + file.string());
}

namespace {

torch::Tensor read_classes(const fs::path& file) {
  cv::Mat raw = cv::imread(file.string(), cv::IMREAD_GRAYSCALE);
  if (raw.empty()) throw InvalidInput("cannot read class map " + file.string());
  return torch::from_blob(raw.data, {raw.rows, raw.cols}, torch::kUInt8).clone().to(torch::kInt64);
}

void write_classes(const fs::path& file, const torch::Tensor& ids) {
  auto u8 = ids.clamp(0, 255).to(torch::kUInt8).contiguous();
  cv::Mat out(static_cast<int>(u8.size(0)), static_cast<int>(u8.size(1)), CV_8UC1, u8.data_ptr<uint8_t>());
  if (!cv::imwrite(file.string(), out)) throw InvalidInput("cannot write " + file.string());
}

torch::Tensor resample_rgb(const torch::Tensor& chw, int width, int height) {
  auto hwc = chw.permute({1, 2, 0}).contiguous();
  cv::Mat src(static_cast<int>(hwc.size(0)), static_cast<int>(hwc.size(1)), CV_32FC3, hwc.data_ptr<float>());
  cv::Mat dst;
  cv::resize(src, dst, cv::Size(width, height), 0, 0, cv::INTER_LANCZOS4);
  auto t = torch::from_blob(dst.data, {height, width, 3}, torch::kFloat32).clone();
  return t.permute({2, 0, 1}).clamp(0, 1).contiguous();
}

template <typename T>
torch::Tensor resample_nearest(const torch::Tensor& hw, int width, int height, int cv_type, torch::ScalarType st) {
  auto src_t = hw.to(st).contiguous();
  cv::Mat src(static_cast<int>(src_t.size(0)), static_cast<int>(src_t.size(1)), cv_type, src_t.data_ptr<T>());
  cv::Mat dst;
  cv::resize(src, dst, cv::Size(width, height), 0, 0, cv::INTER_NEAREST);
  return torch::from_blob(dst.data, {height, width}, st).clone();
}

std::string frame_name(const char* prefix, int index) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%s_%06d.png", prefix, index);
  return buf;
}

}  // namespace

Sequence load_sequence(const fs::path& dir, Domain domain, const LoadOptions& opts) {
  if (!fs::is_directory(dir)) throw InvalidInput("not a sequence directory: " + dir.string());
  static const std::regex rgb_re(R"(rgb_(\d{6})\.png)");
  std::vector<int> indices;
  for (const auto& entry : fs::directory_iterator(dir)) {
    std::smatch m;
    const std::string name = entry.path().filename().string();
    if (std::regex_match(name, m, rgb_re)) indices.push_back(std::stoi(m[1]));
  }
  std::sort(indices.begin(), indices.end());
  for (size_t i = 1; i < indices.size(); ++i)
    if (indices[i] != indices[i - 1] + 1)
      throw InvalidInput("non-consecutive frame numbering in " + dir.string() + " after frame " +
                         std::to_string(indices[i - 1]));

  Sequence seq;
  seq.name = dir.filename().string();
  for (int idx : indices) seq.frames.push_back(read_rgb(dir / frame_name("rgb", idx)));
  if (seq.frames.empty()) throw InvalidInput("sequence without frames: " + dir.string());
  const int native_w = static_cast<int>(seq.frames.front().size(2));
  const int native_h = static_cast<int>(seq.frames.front().size(1));

  std::ifstream kin(dir / "intrinsics.txt");
  if (!kin) throw InvalidInput("missing intrinsics.txt in " + dir.string());
  std::stringstream kbuf;
  kbuf << kin.rdbuf();
  seq.intrinsics = Intrinsics::parse(kbuf.str(), native_w, native_h);

  if (domain == Domain::kVirtual) {
    for (int idx : indices) {
      const auto dpath = dir / frame_name("depth", idx);
      const auto spath = dir / frame_name("sem", idx);
      if (!fs::exists(dpath) || !fs::exists(spath))
        throw InvalidInput("virtual frame " + std::to_string(idx) + " in " + dir.string() + " lacks ground truth");
      seq.depth.push_back(read_depth(dpath, opts.max_depth));
      seq.semantics.push_back(read_classes(spath));
    }
  }

  const int w = opts.width > 0 ? opts.width : native_w;
  const int h = opts.height > 0 ? opts.height : native_h;
  if (w != native_w || h != native_h) {
    for (auto& f : seq.frames) f = resample_rgb(f, w, h);
    for (auto& d : seq.depth) d = DepthMap::from_values(resample_nearest<double>(d.values, w, h, CV_64FC1, torch::kFloat64));
    for (auto& s : seq.semantics)
      s = resample_nearest<int32_t>(s, w, h, CV_32SC1, torch::kInt32).to(torch::kInt64);
    seq.intrinsics = seq.intrinsics.scaled_to(w, h);
  }
  return seq;
}

Dataset load_dataset(const fs::path& root, Domain domain, const LoadOptions& opts) {
  ClassLegend legend;
  if (fs::exists(root / "classes.txt")) legend = read_legend(root / "classes.txt");
  else if (domain == Domain::kVirtual) throw InvalidInput("missing classes.txt under " + root.string());

  const fs::path base = root / to_string(domain);
  if (!fs::is_directory(base)) throw InvalidInput("missing domain directory " + base.string());
  std::vector<fs::path> dirs;
  for (const auto& entry : fs::directory_iterator(base))
    if (entry.is_directory() && entry.path().filename().string().rfind("seq_", 0) == 0) dirs.push_back(entry.path());
  std::sort(dirs.begin(), dirs.end());

  Dataset ds(domain, legend);
  for (const auto& d : dirs) ds.add_sequence(load_sequence(d, domain, opts));
  return ds;
}

void write_sequence(const fs::path& dir, const Sequence& seq, Domain domain) {
  fs::create_directories(dir);
  std::ofstream(dir / "intrinsics.txt") << seq.intrinsics.to_string();
  for (size_t i = 0; i < seq.frames.size(); ++i) {
    write_rgb(dir / frame_name("rgb", static_cast<int>(i)), seq.frames[i]);
    if (domain == Domain::kVirtual) {
      write_depth(dir / frame_name("depth", static_cast<int>(i)), seq.depth.at(i));
      write_classes(dir / frame_name("sem", static_cast<int>(i)), seq.semantics.at(i));
    }
  }
}

}  // namespace vsdepth
