#include <gtest/gtest.h>

#include <random>
#include <sstream>

#include "aeanet/error.hpp"
#include "aeanet/metrics.hpp"
#include "aeanet/otsu.hpp"
#include "oracles.hpp"

using namespace aeanet;

TEST(Psnr, ClosedForms) {
  Image a(8, 8, 0.3), b(8, 8, 0.4);
  EXPECT_TRUE(std::isinf(psnr(a, a)));
  EXPECT_NEAR(psnr(a, b), 20.0, 1e-12);
  EXPECT_THROW(psnr(a, Image(8, 7)), DimensionError);
  EXPECT_EQ(format_metric(psnr(a, a)), "inf");
}

TEST(Psnr, MatchesNaiveOracleAndIsSymmetric) {
  std::mt19937_64 g(1);
  for (int t = 0; t < 100; ++t) {
    Image a = oracle::random_image(13, 17, g), b = oracle::random_image(13, 17, g);
    EXPECT_EQ(psnr(a, b), oracle::psnr(a, b));
    EXPECT_EQ(psnr(a, b), psnr(b, a));
  }
}

TEST(Ssim, IdentityAndBounds) {
  std::mt19937_64 g(2);
  Image a = oracle::random_image(20, 24, g);
  EXPECT_NEAR(ssim(a, a), 1.0, 1e-12);
  Image inv = a;
  for (double& v : inv.pixels) v = 1 - v;
  EXPECT_LT(ssim(a, inv), 1.0);
  EXPECT_THROW(ssim(Image(10, 30), Image(10, 30)), UsageError);
}

TEST(Ssim, MatchesSlidingWindowOracle) {
  std::mt19937_64 g(3);
  std::uniform_int_distribution<std::size_t> sz(11, 30);
  for (int t = 0; t < 100; ++t) {
    const std::size_t h = sz(g), w = sz(g);
    Image a = oracle::random_image(h, w, g), b = a;
    for (double& v : b.pixels) v = std::clamp(v + std::normal_distribution<double>(0, 0.1)(g), 0.0, 1.0);
    EXPECT_NEAR(ssim(a, b), oracle::ssim(a, b), 1e-9);
  }
}

TEST(Deltas, IdentityCases) {
  std::mt19937_64 g(4);
  Image hr = oracle::random_image(16, 16, g), lr = oracle::random_image(16, 16, g);
  auto same = delta_metrics(lr, hr, lr);
  EXPECT_EQ(same.delta_psnr, 0.0);
  EXPECT_EQ(same.delta_ssim, 0.0);
  auto perfect = delta_metrics(hr, hr, lr);
  EXPECT_TRUE(std::isinf(perfect.delta_psnr));
  EXPECT_NEAR(perfect.delta_ssim, 1.0 - ssim(lr, hr), 1e-12);
}

TEST(RegionPsnr, FullMaskEqualsGlobalAndEmptyIsNa) {
  std::mt19937_64 g(5);
  Image hr = oracle::random_image(16, 16, g), lr = oracle::random_image(16, 16, g),
        pred = oracle::random_image(16, 16, g);
  std::vector<std::uint8_t> all(hr.size(), 1);
  auto r = region_psnr(pred, hr, lr, all);
  ASSERT_TRUE(r.foreground);
  EXPECT_NEAR(*r.foreground, psnr(pred, hr) - psnr(lr, hr), 1e-12);
  EXPECT_FALSE(r.background);
  EXPECT_EQ(format_metric(r.background), "n/a");
}

TEST(RegionPsnr, RegionsPartitionThePixels) {
  std::mt19937_64 g(6);
  Image hr = oracle::random_image(20, 20, g);
  auto mask = otsu_threshold(hr).mask;
  std::size_t fg = 0;
  for (auto m : mask) fg += m;
  std::vector<std::uint8_t> inv(mask.size());
  for (std::size_t i = 0; i < mask.size(); ++i) inv[i] = !mask[i];
  std::size_t bg = 0;
  for (auto m : inv) bg += m;
  EXPECT_EQ(fg + bg, hr.size());
}

TEST(Report, AggregateAndCsv) {
  MetricsReport r;
  PatchMetrics a{"a", 30, 0.8, 1.0, 0.01, 0.5, std::nullopt};
  PatchMetrics b{"b", 32, 0.9, 2.0, 0.03, 1.5, 2.5};
  r.patches = {a, b};
  auto m = r.aggregate();
  EXPECT_DOUBLE_EQ(m.delta_psnr, 1.5);
  EXPECT_DOUBLE_EQ(*m.fg_delta_psnr, 1.0);
  EXPECT_DOUBLE_EQ(*m.bg_delta_psnr, 2.5);
  MetricsReport swapped;
  swapped.patches = {b, a};
  EXPECT_DOUBLE_EQ(swapped.aggregate().delta_ssim, m.delta_ssim);
  std::ostringstream csv;
  r.write_csv(csv);
  EXPECT_EQ(csv.str().substr(0, csv.str().find('\n')), MetricsReport::csv_header());
  EXPECT_NE(csv.str().find("n/a"), std::string::npos);
}
