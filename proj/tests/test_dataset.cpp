#include <gtest/gtest.h>

#include <filesystem>
#include <random>

#include "aeanet/dataset.hpp"
#include "aeanet/error.hpp"
#include "aeanet/metrics.hpp"
#include "aeanet/tiling.hpp"
#include "oracles.hpp"

using namespace aeanet;

namespace {
ImagePair indexed_pair(std::size_t h, std::size_t w) {
  ImagePair p{"p", Image(h, w), Image(h, w)};
  for (std::size_t i = 0; i < h * w; ++i) p.hr.pixels[i] = p.lr_up.pixels[i] = double(i);
  return p;
}
}  // namespace

TEST(Split3x4, CountsAndCroppedGeometry) {
  auto s = split_3x4(indexed_pair(944, 1280));
  EXPECT_EQ(s.train_patches.size(), 9u);
  EXPECT_EQ(s.test_patches.size(), 3u);
  EXPECT_EQ(s.crop_height, 942u);
  EXPECT_EQ(s.crop_top, 1u);
  EXPECT_EQ(s.train_patches[0].hr.height, 314u);
  EXPECT_EQ(s.train_patches[0].hr.width, 320u);
}

TEST(Split3x4, IsAPartitionOfTheCroppedArea) {
  ImagePair p = indexed_pair(12, 16);
  auto s = split_3x4(p);
  std::vector<int> hits(12 * 16, 0);
  for (auto* group : {&s.train_patches, &s.test_patches})
    for (const ImagePair& q : *group)
      for (double v : q.hr.pixels) hits[std::size_t(v)]++;
  for (int h : hits) EXPECT_EQ(h, 1);
  // The test column is the rightmost one.
  for (const ImagePair& q : s.test_patches) EXPECT_GE(std::size_t(q.hr.pixels[0]) % 16, 12u);
  EXPECT_THROW(split_3x4(indexed_pair(2, 10)), UsageError);
}

TEST(Tiling, IdentityModelIsBitExact) {
  std::mt19937_64 g(1);
  ImageFunction identity = [](const Image& t) { return t; };
  for (auto [h, w, p] : std::vector<std::tuple<int, int, int>>{{128, 128, 64}, {37, 53, 16}, {10, 7, 64}}) {
    Image img = oracle::random_image(h, w, g);
    TilingStats st;
    Image out = tile_and_stitch(img, identity, p, PadMode::reflect, &st);
    EXPECT_EQ(out.pixels, img.pixels);
    if (h == 128) EXPECT_EQ(st.tiles(), 4u);
    if (h == 10) EXPECT_EQ(st.tiles(), 1u);
  }
  Image img = oracle::random_image(8, 8, g);
  EXPECT_THROW(tile_and_stitch(img, identity, 6), ConfigError);
}

TEST(Tiling, EveryPixelWrittenOnce) {
  // Each tile writes its tile index; the output must show a clean tiling.
  int next = 0;
  ImageFunction tag = [&](const Image& t) { return Image(t.height, t.width, double(next++)); };
  Image out = tile_and_stitch(Image(20, 28, 0.0), tag, 8);
  EXPECT_EQ(next, 12);
  EXPECT_EQ(out.at(0, 0), 0.0);
  EXPECT_EQ(out.at(19, 27), 11.0);
  EXPECT_EQ(out.at(8, 8), 5.0);
}

TEST(Synth, DeterministicAndWellFormed) {
  SynthOptions o;
  o.count = 3;
  o.size = 32;
  auto a = synth_generate(o), b = synth_generate(o);
  ASSERT_EQ(a.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(a[i].hr.pixels, b[i].hr.pixels);
    EXPECT_EQ(a[i].lr_up.pixels, b[i].lr_up.pixels);
    EXPECT_TRUE(a[i].hr.same_shape(a[i].lr_up));
    for (double v : a[i].hr.pixels) ASSERT_TRUE(v >= 0 && v <= 1);
  }
  o.seed = 1;
  EXPECT_NE(synth_generate(o)[0].hr.pixels, a[0].hr.pixels);
  o.size = 30;
  EXPECT_THROW(synth_generate(o), ConfigError);
}

TEST(Synth, NoiselessPairLimitedByResampling) {
  SynthOptions o;
  o.count = 4;
  o.size = 96;
  o.noise_sigma = 0;
  o.blur_sigma = 0;
  for (const ImagePair& p : synth_generate(o)) {
    const double db = psnr(p.lr_up, p.hr);
    EXPECT_TRUE(std::isfinite(db));
    EXPECT_GT(db, 20.0);
  }
}

TEST(DatasetDir, WriteReadRoundTrip) {
  SynthOptions o;
  o.count = 2;
  o.size = 16;
  auto pairs = synth_generate(o);
  const auto root = std::filesystem::temp_directory_path() / "aeanet_ds_rt";
  std::filesystem::remove_all(root);
  write_dataset(pairs, root);
  EXPECT_TRUE(std::filesystem::exists(root / "manifest.txt"));
  auto back = read_dataset(root);
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[1].id, pairs[1].id);
  for (std::size_t i = 0; i < back[0].hr.size(); ++i) {
    EXPECT_EQ(back[0].hr.pixels[i], quantize_8bit(pairs[0].hr.pixels[i]) / 255.0);
  }
  EXPECT_THROW(read_dataset(root / "missing"), IoError);
}
