#include <gtest/gtest.h>

#include <random>

#include "aeanet/error.hpp"
#include "aeanet/gradcheck.hpp"
#include "aeanet/ops.hpp"
#include "oracles.hpp"

using namespace aeanet;

TEST(Matmul, MatchesTripleLoopOracle) {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 100; ++trial) {
    std::uniform_int_distribution<std::size_t> d(1, 24);
    const std::size_t m = d(rng), k = d(rng), n = d(rng);
    auto a = oracle::random_tensor<double>({m, k}, rng);
    auto b = oracle::random_tensor<double>({k, n}, rng);
    EXPECT_LE(oracle::max_abs(oracle::matmul(a, b), ops::matmul(a, b)), 1e-12);
  }
}

TEST(Matmul, ShapeMismatch) {
  Tensor<float> a({2, 3}, std::vector<float>(6)), b({2, 2}, std::vector<float>(4));
  EXPECT_THROW(ops::matmul(a, b), DimensionError);
}

TEST(Matmul, TwoByTwo) {
  Tensor<double> a({2, 2}, {1, 2, 3, 4}), b({2, 2}, {5, 6, 7, 8});
  auto c = ops::matmul(a, b);
  EXPECT_EQ(c.to_vector(), (std::vector<double>{19, 22, 43, 50}));
}

TEST(Conv2d, MatchesNestedLoopOracle) {
  std::mt19937_64 rng(2);
  std::uniform_int_distribution<std::size_t> sz(3, 12), ch(1, 4), ks(1, 4), st(1, 3);
  for (int trial = 0; trial < 120; ++trial) {
    const std::size_t h = sz(rng), w = sz(rng), ci = ch(rng), co = ch(rng);
    const std::size_t kh = std::min(ks(rng), h), kw = std::min(ks(rng), w), s = st(rng);
    const bool same = trial % 2 == 0, periodic = same && trial % 4 == 0;
    auto x = oracle::random_tensor<double>({h, w, ci}, rng);
    auto k = oracle::random_tensor<double>({kh, kw, ci, co}, rng);
    ops::ConvOptions opt{s, same ? ops::Padding::same : ops::Padding::valid,
                         periodic ? ops::Boundary::periodic : ops::Boundary::zero};
    std::size_t oh, ow;
    auto ref = oracle::conv2d(x, k, s, same, periodic, &oh, &ow);
    auto y = ops::conv2d(x, k, opt);
    ASSERT_EQ(y.shape(), (Shape{oh, ow, co}));
    EXPECT_LE(oracle::max_abs(ref, y), 1e-12) << "trial " << trial;
  }
}

TEST(Conv2d, SameKeepsSizeAndStrideHalves) {
  auto x = Tensor<float>::zeros({64, 64, 1});
  auto k = Tensor<float>::zeros({3, 3, 1, 4});
  EXPECT_EQ(ops::conv2d(x, k).shape(), (Shape{64, 64, 4}));
  EXPECT_EQ(ops::conv2d(x, k, {2}).shape(), (Shape{32, 32, 4}));
  EXPECT_THROW(ops::conv2d(x, k, {0}), ConfigError);
  auto bad = Tensor<float>::zeros({3, 3, 2, 4});
  EXPECT_THROW(ops::conv2d(x, bad), DimensionError);
}

TEST(Conv2dTranspose, IsAdjointOfConv) {
  // <conv(x), y> == <x, conv_t(y)>
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 40; ++trial) {
    const std::size_t s = 1 + trial % 2, h = 4 + trial % 5 * 2, w = 6 + trial % 3 * 2;
    const bool periodic = trial % 3 == 0;
    ops::ConvOptions opt{s, ops::Padding::same,
                         periodic ? ops::Boundary::periodic : ops::Boundary::zero};
    auto x = oracle::random_tensor<double>({h, w, 2}, rng);
    auto k = oracle::random_tensor<double>({3, 3, 2, 3}, rng);
    auto cx = ops::conv2d(x, k, opt);
    auto y = oracle::random_tensor<double>(cx.shape(), rng);
    auto ty = ops::conv2d_transpose(y, k, opt);
    ASSERT_EQ(ty.shape(), x.shape());
    double lhs = 0, rhs = 0;
    for (std::size_t i = 0; i < cx.numel(); ++i) lhs += cx[i] * y[i];
    for (std::size_t i = 0; i < x.numel(); ++i) rhs += x[i] * ty[i];
    EXPECT_NEAR(lhs, rhs, 1e-10 * std::max(1.0, std::abs(lhs)));
  }
}

TEST(Conv2dTranspose, StrideTwoDoublesSize) {
  auto x = Tensor<float>::zeros({16, 16, 8});
  auto k = Tensor<float>::zeros({3, 3, 4, 8});
  EXPECT_EQ(ops::conv2d_transpose(x, k, {2}).shape(), (Shape{32, 32, 4}));
}

TEST(Spatial, FlattenFoldRoundTrip) {
  std::mt19937_64 rng(4);
  auto x = oracle::random_tensor<float>({4, 5, 3}, rng);
  auto f = ops::flatten_spatial(x);
  EXPECT_EQ(f.shape(), (Shape{20, 3}));
  auto back = ops::fold_spatial(f, {4, 5});
  EXPECT_EQ(back.shape(), x.shape());
  EXPECT_EQ(back.to_vector(), x.to_vector());
  EXPECT_THROW(ops::fold_spatial(f, {3, 5}), DimensionError);
  EXPECT_THROW(ops::flatten_spatial(Tensor<float>({3}, {1, 2, 3})), DimensionError);
}

TEST(Softmax, RowsSumToOne) {
  std::mt19937_64 rng(5);
  auto x = oracle::random_tensor<double>({5, 7}, rng, 10.0);
  auto y = ops::softmax_rows(x);
  for (std::size_t i = 0; i < 5; ++i) {
    double s = 0;
    for (std::size_t j = 0; j < 7; ++j) s += y.at(i, j);
    EXPECT_NEAR(s, 1.0, 1e-12);
  }
}

// Finite-difference checks of every differentiable op, in double.
namespace {
GradCheckReport check(const ScalarFunction<double>& f, const std::vector<Tensor<double>>& params) {
  GradCheckOptions o;
  o.tolerance = 1e-6;
  return finite_diff_check(f, params, o);
}
}  // namespace

TEST(OpGradients, Elementwise) {
  std::mt19937_64 rng(6);
  auto a = oracle::random_tensor<double>({3, 4}, rng), b = oracle::random_tensor<double>({3, 4}, rng);
  auto bias = oracle::random_tensor<double>({4}, rng);
  auto r = check(
      [](const std::vector<Tensor<double>>& p) {
        auto t = ops::add_bias(ops::sub(ops::mul(p[0], p[1]), ops::scale(p[1], 0.5)), p[2]);
        return ops::mean(ops::mul(t, ops::add(t, p[0])));
      },
      {a, b, bias});
  EXPECT_TRUE(r.pass) << r.max_rel_error;
}

TEST(OpGradients, MatmulTransposeSoftmax) {
  std::mt19937_64 rng(7);
  auto a = oracle::random_tensor<double>({4, 3}, rng), b = oracle::random_tensor<double>({5, 3}, rng);
  auto w = oracle::random_tensor<double>({4, 5}, rng);
  auto r = check(
      [&](const std::vector<Tensor<double>>& p) {
        auto s = ops::softmax_rows(ops::matmul(p[0], ops::transpose(p[1])));
        return ops::sum(ops::mul(s, w));
      },
      {a, b});
  EXPECT_TRUE(r.pass) << r.max_rel_error;
}

TEST(OpGradients, ConcatReshapeRelu) {
  std::mt19937_64 rng(8);
  auto a = oracle::random_tensor<double>({2, 3, 2}, rng), b = oracle::random_tensor<double>({2, 3, 1}, rng);
  auto w = oracle::random_tensor<double>({10, 3}, rng);
  auto r = check(
      [&](const std::vector<Tensor<double>>& p) {
        auto f = ops::flatten_spatial(ops::concat_last(p[0], p[1]));         // [6 3]
        auto g = ops::concat_rows<double>({f, ops::reshape(p[0], {4, 3})});  // [10 3]
        auto h = ops::fold_spatial(ops::relu(g), {2, 5});                    // [2 5 3]
        return ops::sum(ops::mul(ops::reshape(h, {10, 3}), w));
      },
      {a, b});
  EXPECT_TRUE(r.pass) << r.max_rel_error;
}

TEST(OpGradients, ConvAndTransposedConv) {
  std::mt19937_64 rng(9);
  for (auto boundary : {ops::Boundary::zero, ops::Boundary::periodic}) {
    auto x = oracle::random_tensor<double>({6, 4, 2}, rng);
    auto k = oracle::random_tensor<double>({3, 3, 2, 3}, rng);
    auto kt = oracle::random_tensor<double>({3, 3, 2, 3}, rng);
    auto r = check(
        [&](const std::vector<Tensor<double>>& p) {
          auto y = ops::conv2d(p[0], p[1], {2, ops::Padding::same, boundary});  // [3 2 3]
          auto z = ops::conv2d_transpose(y, p[2], {2, ops::Padding::same, boundary});  // [6 4 2]
          return ops::sum(ops::mul(z, p[0]));
        },
        {x, k, kt});
    EXPECT_TRUE(r.pass) << r.max_rel_error;
  }
}
