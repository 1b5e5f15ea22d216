#include <gtest/gtest.h>

#include <random>

#include "aeanet/error.hpp"
#include "aeanet/gradcheck.hpp"
#include "aeanet/model.hpp"
#include "aeanet/ops.hpp"
#include "aeanet/permutation.hpp"
#include "oracles.hpp"

using namespace aeanet;

namespace {

ModelConfig small_config(AttentionVariant v = AttentionVariant::aea) {
  ModelConfig c;
  c.base_channels = 4;
  c.ref_size = 8;
  c.variant = v;
  return c;
}

Tensor<float> random_image_tensor(std::size_t h, std::size_t w, std::mt19937_64& g) {
  std::uniform_real_distribution<float> u(0.f, 1.f);
  std::vector<float> v(h * w);
  for (float& x : v) x = u(g);
  return Tensor<float>({h, w, 1}, std::move(v));
}

// Make the refs non-trivial so the shared-reference path matters.
Model<float> with_random_refs(const Model<float>& m, std::uint64_t seed) {
  auto params = m.parameters();
  std::mt19937_64 g(seed);
  params["attn.refs"] = oracle::random_tensor<float>(params["attn.refs"].shape(), g, 0.5);
  return Model<float>(m.config(), params);
}

}  // namespace

TEST(Model, ShapeContract) {
  std::mt19937_64 g(1);
  for (auto v : {AttentionVariant::aea, AttentionVariant::self_only, AttentionVariant::none}) {
    Model<float> m(small_config(v), 1);
    auto y = m.forward({random_image_tensor(64, 64, g)}, BlockMode::predict);
    EXPECT_EQ(y[0].shape(), (Shape{64, 64, 1})) << to_string(v);
  }
  Model<float> m(small_config(), 1);
  EXPECT_THROW(m.forward({random_image_tensor(30, 32, g)}, BlockMode::predict), DimensionError);
  EXPECT_THROW(m.forward({}, BlockMode::predict), UsageError);
}

TEST(Model, LearnedQueryVariantNeedsMatchingGrid) {
  auto c = small_config(AttentionVariant::learned_query);
  EXPECT_THROW(c.validate(), ConfigError);
  c.query_size = 16;
  Model<float> m(c, 2);
  std::mt19937_64 g(2);
  EXPECT_EQ(m.forward({random_image_tensor(16, 16, g)}, BlockMode::predict)[0].shape(), (Shape{16, 16, 1}));
  EXPECT_THROW(m.forward({random_image_tensor(32, 16, g)}, BlockMode::predict), DimensionError);
}

TEST(Model, ParameterLayout) {
  Model<float> m(small_config(), 3);
  const auto shapes = parameter_shapes(m.config());
  EXPECT_EQ(m.parameters().size(), shapes.size());
  EXPECT_EQ(m.parameters().at("attn.refs").shape(), (Shape{8, 16}));
  EXPECT_EQ(m.parameters().at("attn.query.weight").shape(), (Shape{16, 8}));
  EXPECT_EQ(m.parameters().at("attn.value.weight").shape(), (Shape{16, 16}));
  EXPECT_EQ(m.parameters().at("up2.weight").shape(), (Shape{3, 3, 8, 16}));
  EXPECT_EQ(m.parameters().at("dec1.conv1.weight").shape(), (Shape{3, 3, 8, 4}));
  // Rebuilding from the same parameters is exact; a missing one is rejected.
  auto params = m.parameters();
  params.erase("out.bias");
  EXPECT_THROW(Model<float>(m.config(), params), DimensionError);
  Model<float> none(small_config(AttentionVariant::none), 3);
  EXPECT_TRUE(none.parameters().count("mid.conv1.weight"));
  EXPECT_FALSE(none.parameters().count("attn.refs"));
}

TEST(Model, SameSeedSameInit) {
  Model<float> a(small_config(), 9), b(small_config(), 9), c(small_config(), 10);
  EXPECT_EQ(a.parameters().at("enc1.conv1.weight").to_vector(),
            b.parameters().at("enc1.conv1.weight").to_vector());
  EXPECT_NE(a.parameters().at("enc1.conv1.weight").to_vector(),
            c.parameters().at("enc1.conv1.weight").to_vector());
}

TEST(AttentionBlock, TrainSplitSizes) {
  EXPECT_EQ(training_branch_split(5).shared_reference, 2u);
  EXPECT_EQ(training_branch_split(5).batch_aware, 3u);
  EXPECT_EQ(training_branch_split(8).shared_reference, 4u);
  EXPECT_EQ(training_branch_split(1).shared_reference, 1u);
  EXPECT_EQ(training_branch_split(1).batch_aware, 0u);
}

TEST(AttentionBlock, TrainModeRoutesBranchesInOrder) {
  Rng rng(4);
  auto p = make_attention_params<double>(3, 2, 3, 4, NormMode::division, rng, 0.8);
  std::mt19937_64 g(5);
  std::vector<Tensor<double>> xs;
  for (int i = 0; i < 5; ++i) xs.push_back(oracle::random_tensor<double>({2, 3, 3}, g));
  auto ys = attention_block_forward(xs, p, BlockMode::train, true);
  ASSERT_EQ(ys.size(), 5u);
  for (int i = 0; i < 2; ++i) {
    auto ref = ops::add(xs[i], ops::fold_spatial(shared_reference_attention(ops::flatten_spatial(xs[i]), p), {2, 3}));
    EXPECT_LE(ops::max_abs_diff(ys[i], ref), 1e-14);
  }
  std::vector<Tensor<double>> group;
  for (int i = 2; i < 5; ++i) group.push_back(ops::flatten_spatial(xs[i]));
  auto ba = batch_aware_attention(group, p);
  for (int i = 2; i < 5; ++i) {
    auto ref = ops::add(xs[i], ops::fold_spatial(ba[i - 2], {2, 3}));
    EXPECT_LE(ops::max_abs_diff(ys[i], ref), 1e-14);
  }
  EXPECT_THROW(attention_block_forward<double>({}, p, BlockMode::train, true), UsageError);

  auto with_refs = attention_block_forward(xs, p, BlockMode::train, true, true);
  auto ba_refs = batch_aware_attention(group, p, true);
  for (int i = 2; i < 5; ++i) {
    EXPECT_LE(ops::max_abs_diff(with_refs[i], ops::add(xs[i], ops::fold_spatial(ba_refs[i - 2], {2, 3}))),
              1e-14);
  }
  EXPECT_EQ(ops::max_abs_diff(with_refs[0], ys[0]), 0.0);
}

TEST(AttentionBlock, SingleInstanceTrainEqualsPredict) {
  Rng rng(6);
  auto p = make_attention_params<double>(3, 2, 3, 4, NormMode::softmax, rng, 0.8);
  std::mt19937_64 g(7);
  auto x = oracle::random_tensor<double>({3, 3, 3}, g);
  auto t = attention_block_forward<double>({x}, p, BlockMode::train, true);
  auto q = attention_block_forward<double>({x}, p, BlockMode::predict, true);
  EXPECT_EQ(ops::max_abs_diff(t[0], q[0]), 0.0);
}

TEST(Model, PredictMatchesTrainSharedReferenceBranch) {
  std::mt19937_64 g(8);
  Model<float> m = with_random_refs(Model<float>(small_config(), 8), 8);
  std::vector<Tensor<float>> batch;
  for (int i = 0; i < 4; ++i) batch.push_back(random_image_tensor(16, 16, g));
  auto train = m.forward(batch, BlockMode::train);
  for (int i = 0; i < 2; ++i) {
    auto pred = m.forward({batch[i]}, BlockMode::predict);
    EXPECT_LE(ops::max_abs_diff(train[i], pred[0]), 1e-6f);
  }
}

TEST(Model, PredictIndependentOfBatchMembers) {
  std::mt19937_64 g(9);
  Model<float> m = with_random_refs(Model<float>(small_config(), 9), 9);
  auto x = random_image_tensor(16, 16, g);
  auto alone = m.forward({x}, BlockMode::predict)[0];
  for (int trial = 0; trial < 3; ++trial) {
    std::vector<Tensor<float>> batch{random_image_tensor(16, 16, g), x, random_image_tensor(16, 16, g)};
    EXPECT_LE(ops::max_abs_diff(m.forward(batch, BlockMode::predict)[1], alone), 1e-6f);
  }
}

TEST(Model, PeriodicModeIsShiftEquivariant) {
  auto c = small_config();
  c.boundary = ops::Boundary::periodic;
  Model<float> m = with_random_refs(Model<float>(c, 10), 10);
  std::mt19937_64 g(10);
  const std::size_t h = 32, w = 32;
  auto x = ops::flatten_spatial(random_image_tensor(h, w, g));
  SpatialOperator<float> f = [&](const Tensor<float>& flat) {
    return ops::flatten_spatial(m.forward({ops::fold_spatial(flat, {h, w})}, BlockMode::predict)[0]);
  };
  auto shift = make_permutation(PermutationKind::cyclic_shift, w, h, {8, 4});
  auto r = check_equivariance(f, x, shift, 1e-4);
  EXPECT_TRUE(r.pass) << r.max_abs_error;
  // Zero padding is only equivariant away from the borders.
  auto zc = small_config();
  Model<float> zm = with_random_refs(Model<float>(zc, 10), 10);
  SpatialOperator<float> fz = [&](const Tensor<float>& flat) {
    return ops::flatten_spatial(zm.forward({ops::fold_spatial(flat, {h, w})}, BlockMode::predict)[0]);
  };
  EXPECT_GT(check_equivariance(fz, x, shift, 1e-4).max_abs_error, 1e-4);
}

TEST(Heatmap, ShapeRangeAndDeterminism) {
  Model<float> m = with_random_refs(Model<float>(small_config(), 11), 11);
  std::mt19937_64 g(11);
  Image img = oracle::random_image(20, 24, g);
  auto maps = relevance_heatmap(img, m, {0, 3, 7});
  ASSERT_EQ(maps.size(), 3u);
  for (const Image& h : maps) {
    EXPECT_EQ(h.height, 20u);
    EXPECT_EQ(h.width, 24u);
    EXPECT_NEAR(*std::min_element(h.pixels.begin(), h.pixels.end()), 0.0, 1e-12);
    EXPECT_NEAR(*std::max_element(h.pixels.begin(), h.pixels.end()), 1.0, 1e-12);
  }
  EXPECT_EQ(relevance_heatmap(img, m, {3})[0].pixels, maps[1].pixels);
  EXPECT_THROW(relevance_heatmap(img, m, {8}), UsageError);
}

TEST(Heatmap, ZeroRefsGiveZeroMap) {
  Model<float> m(small_config(), 12);
  auto params = m.parameters();
  params["attn.refs"] = Tensor<float>::zeros(params["attn.refs"].shape());
  Model<float> z(m.config(), params);
  std::mt19937_64 g(12);
  auto raw = raw_relevance(oracle::random_image(16, 16, g), z, {0});
  for (double v : raw[0].pixels) EXPECT_EQ(v, 0.0);
  EXPECT_EQ(raw[0].height, 4u);
}

TEST(Model, GradientsMatchFiniteDifferencesSmall) {
  ModelConfig c = small_config();
  c.base_channels = 2;
  c.ref_size = 2;
  Model<double> m = Model<float>(c, 13).cast<double>();
  std::mt19937_64 g(13);
  std::vector<Tensor<double>> batch{oracle::random_tensor<double>({8, 8, 1}, g),
                                    oracle::random_tensor<double>({8, 8, 1}, g)};
  auto target = oracle::random_tensor<double>({8, 8, 1}, g);
  std::vector<std::string> names;
  std::vector<Tensor<double>> params;
  for (const auto& [n, t] : m.parameters()) names.push_back(n), params.push_back(t);
  params[std::find(names.begin(), names.end(), "attn.refs") - names.begin()] =
      oracle::random_tensor<double>({2, 8}, g);
  ScalarFunction<double> f = [&](const std::vector<Tensor<double>>& p) {
    ParameterSet<double> set;
    for (std::size_t i = 0; i < p.size(); ++i) set.emplace(names[i], p[i]);
    auto y = m.forward(set, batch, BlockMode::train);
    auto d = ops::sub(ops::add(y[0], y[1]), target);
    return ops::mean(ops::mul(d, d));
  };
  GradCheckOptions o;
  o.sample_count = 60;
  o.seed = 1;
  auto r = finite_diff_check(f, params, o);
  EXPECT_TRUE(r.pass) << r.max_rel_error;
}
