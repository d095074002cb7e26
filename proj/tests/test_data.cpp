#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "support.hpp"
#include "vsdepth/data.hpp"
#include "vsdepth/error.hpp"
#include "vsdepth/toyworld.hpp"

using namespace vsdepth;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  auto p = fs::temp_directory_path() / ("vsdepth_data_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

Sequence quantized_sequence(int frames, int h, int w, uint64_t seed) {
  torch::manual_seed(seed);
  Sequence s;
  s.name = "seq_0000";
  s.intrinsics = {0.6 * w, 0.6 * w, (w - 1) / 2.0, (h - 1) / 2.0, w, h};
  for (int i = 0; i < frames; ++i) {
    s.frames.push_back(torch::randint(0, 256, {3, h, w}).to(torch::kFloat32) / 255);
    auto d = torch::rand({h, w}, torch::kFloat64) * 70 + 0.5;
    d[0][0] = 0;  // one invalid pixel
    s.depth.push_back(DepthMap::from_values(d));
    s.semantics.push_back(torch::randint(0, 4, {h, w}, torch::kInt64));
  }
  return s;
}

SceneSpec small_spec() {
  SceneSpec s;
  s.scenes = 2;
  s.frames = 5;
  s.width = 64;
  s.height = 48;
  s.supersample = 1;
  return s;
}

}  // namespace

TEST(Dataset, TripletsStayInsideSequences) {
  Dataset ds(Domain::kReal, {});
  auto a = quantized_sequence(5, 8, 8, 0);
  auto b = quantized_sequence(2, 8, 8, 1);
  b.name = "seq_0001";
  a.depth.clear();
  a.semantics.clear();
  b.depth.clear();
  b.semantics.clear();
  EXPECT_EQ(a.triplet_count(), 3u);
  EXPECT_EQ(b.triplet_count(), 0u);
  ds.add_sequence(a);
  ds.add_sequence(b);
  EXPECT_EQ(ds.size(), 3u);
  const auto t = ds.triplet(2);
  EXPECT_EQ(t.center_index, 3);
  EXPECT_TRUE(torch::equal(t.frames[2], a.frames[4]));
  EXPECT_FALSE(t.gt_depth.has_value());
}

TEST(Dataset, VirtualSequencesNeedGroundTruth) {
  Dataset ds(Domain::kVirtual, toy_legend());
  auto s = quantized_sequence(3, 8, 8, 0);
  s.depth.pop_back();
  EXPECT_THROW(ds.add_sequence(s), InvalidInput);
}

TEST(Dataset, SplitLastHoldsOutTrailingSequences) {
  Dataset ds(Domain::kReal, {});
  for (int i = 0; i < 3; ++i) {
    auto s = quantized_sequence(4, 8, 8, i);
    s.name = "seq_000" + std::to_string(i);
    s.depth.clear();
    s.semantics.clear();
    ds.add_sequence(s);
  }
  const auto [train, held] = ds.split_last(1);
  EXPECT_EQ(train.sequences().size(), 2u);
  ASSERT_EQ(held.sequences().size(), 1u);
  EXPECT_EQ(held.sequences()[0].name, "seq_0002");
  EXPECT_THROW(ds.split_last(3), InvalidInput);
}

TEST(DataIo, WriteLoadRoundTrip) {
  const auto root = scratch("roundtrip");
  write_legend(root / "classes.txt", toy_legend());
  const auto s = quantized_sequence(4, 12, 16, 2);
  write_sequence(root / "virtual" / "seq_0000", s, Domain::kVirtual);
  const auto ds = load_dataset(root, Domain::kVirtual, {});
  EXPECT_EQ(ds.legend(), toy_legend());
  ASSERT_EQ(ds.sequences().size(), 1u);
  const auto& r = ds.sequences()[0];
  ASSERT_EQ(r.frames.size(), 4u);
  for (size_t i = 0; i < 4; ++i) {
    EXPECT_TRUE(torch::equal(r.frames[i], s.frames[i])) << "rgb " << i;
    EXPECT_LE((r.depth[i].values - s.depth[i].values).abs().max().item<double>(), 0.005 + 1e-12);
    EXPECT_TRUE(torch::equal(r.depth[i].valid, s.depth[i].valid));
    EXPECT_TRUE(torch::equal(r.semantics[i], s.semantics[i]));
  }
  EXPECT_NEAR(r.intrinsics.fx, s.intrinsics.fx, 1e-9);
}

TEST(DataIo, ResizeRescalesIntrinsics) {
  const auto root = scratch("resize");
  Sequence s;
  s.name = "seq_0000";
  s.intrinsics = {720.0, 720.0, 320.0, 96.0, 640, 192};
  for (int i = 0; i < 3; ++i) s.frames.push_back(torch::full({3, 192, 640}, 0.5f));
  write_sequence(root / "real" / "seq_0000", s, Domain::kReal);
  LoadOptions o;
  o.width = 128;
  o.height = 96;
  const auto ds = load_dataset(root, Domain::kReal, o);
  const auto& k = ds.sequences()[0].intrinsics;
  EXPECT_DOUBLE_EQ(k.fx, 144.0);
  EXPECT_DOUBLE_EQ(k.cx, 64.0);
  EXPECT_DOUBLE_EQ(k.fy, 360.0);
  EXPECT_DOUBLE_EQ(k.cy, 48.0);
  EXPECT_EQ(ds.sequences()[0].frames[0].sizes(), (std::vector<int64_t>{3, 96, 128}));
}

TEST(DataIo, MissingGroundTruthIsReported) {
  const auto root = scratch("missing");
  write_legend(root / "classes.txt", toy_legend());
  const auto dir = root / "virtual" / "seq_0000";
  write_sequence(dir, quantized_sequence(3, 8, 8, 3), Domain::kVirtual);
  fs::remove(dir / "depth_000001.png");
  try {
    load_dataset(root, Domain::kVirtual, {});
    FAIL() << "expected InvalidInput";
  } catch (const InvalidInput& e) {
    EXPECT_NE(std::string(e.what()).find("frame 1"), std::string::npos) << e.what();
  }
}

TEST(DataIo, GapInNumberingIsReported) {
  const auto root = scratch("gap");
  const auto dir = root / "real" / "seq_0000";
  auto s = quantized_sequence(4, 8, 8, 4);
  write_sequence(dir, s, Domain::kReal);
  fs::remove(dir / "rgb_000002.png");
  EXPECT_THROW(load_dataset(root, Domain::kReal, {}), InvalidInput);
}

TEST(DataIo, MissingLegendOrDomainIsReported) {
  const auto root = scratch("empty");
  EXPECT_THROW(load_dataset(root, Domain::kVirtual, {}), InvalidInput);
  EXPECT_THROW(load_dataset(root, Domain::kReal, {}), InvalidInput);
}

TEST(ToyWorld, GroundTruthIsPositiveAndSkyInvalid) {
  const auto w = generate_toy_world(small_spec());
  EXPECT_EQ(w.real.sequences().size(), 2u);
  EXPECT_EQ(w.virtual_.size(), 6u);
  int sky_id = -1;
  for (const auto& [id, name] : w.legend)
    if (name == "sky") sky_id = id;
  ASSERT_GE(sky_id, 0);
  for (const auto& s : w.virtual_.sequences())
    for (size_t i = 0; i < s.depth.size(); ++i) {
      const auto& d = s.depth[i];
      EXPECT_GT(d.values.masked_select(d.valid).min().item<double>(), 0.0);
      const auto sky = s.semantics[i] == sky_id;
      ASSERT_TRUE(sky.any().item<bool>());
      EXPECT_FALSE((d.valid & sky).any().item<bool>());
      EXPECT_TRUE(d.valid.logical_or(sky).all().item<bool>());
    }
}

TEST(ToyWorld, StationaryCameraRendersIdenticalFrames) {
  auto spec = small_spec();
  spec.speed = 0;
  spec.yaw_amplitude = 0;
  const auto w = generate_toy_world(spec);
  for (const auto* ds : {&w.real, &w.virtual_})
    for (const auto& s : ds->sequences())
      for (size_t i = 1; i < s.frames.size(); ++i) EXPECT_TRUE(torch::equal(s.frames[i], s.frames[0]));
}

TEST(ToyWorld, SameSeedSameWorld) {
  const auto a = generate_toy_world(small_spec());
  const auto b = generate_toy_world(small_spec());
  EXPECT_TRUE(torch::equal(a.real.sequences()[1].frames[3], b.real.sequences()[1].frames[3]));
  auto other = small_spec();
  other.seed = 2;
  const auto c = generate_toy_world(other);
  EXPECT_FALSE(torch::equal(a.real.sequences()[1].frames[3], c.real.sequences()[1].frames[3]));
}

TEST(ToyWorld, WrittenLayoutLoadsBack) {
  const auto root = scratch("toy");
  const auto w = generate_toy_world(small_spec());
  write_toy_world(w, root);
  EXPECT_TRUE(fs::exists(root / "classes.txt"));
  const auto v = load_dataset(root, Domain::kVirtual, {});
  const auto r = load_dataset(root, Domain::kReal, {});
  EXPECT_EQ(v.size(), w.virtual_.size());
  EXPECT_EQ(r.size(), w.real.size());
  EXPECT_TRUE(torch::equal(r.sequences()[0].frames[2], w.real.sequences()[0].frames[2]));
}
