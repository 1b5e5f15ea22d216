#include <gtest/gtest.h>

#include <random>

#include "aeanet/attention.hpp"
#include "aeanet/error.hpp"
#include "aeanet/gradcheck.hpp"
#include "aeanet/ops.hpp"
#include "aeanet/permutation.hpp"
#include "oracles.hpp"

using namespace aeanet;

namespace {

// Attention written out with plain loops: keys/values from `kv_rows`.
std::vector<double> naive_attention(const std::vector<std::vector<double>>& q_in,
                                    const std::vector<std::vector<double>>& kv_in,
                                    const AttentionParams<double>& p, bool softmax) {
  auto proj = [](const std::vector<double>& x, const Projection<double>& pr) {
    const std::size_t ci = pr.weight.dim(0), co = pr.weight.dim(1);
    std::vector<double> y(co);
    for (std::size_t j = 0; j < co; ++j) {
      y[j] = pr.bias[j];
      for (std::size_t i = 0; i < ci; ++i) y[j] += x[i] * pr.weight[i * co + j];
    }
    return y;
  };
  const std::size_t sk = kv_in.size();
  std::vector<double> out;
  for (const auto& xi : q_in) {
    const auto q = proj(xi, p.query);
    std::vector<double> sc(sk);
    for (std::size_t j = 0; j < sk; ++j) {
      const auto k = proj(kv_in[j], p.key);
      for (std::size_t d = 0; d < q.size(); ++d) sc[j] += q[d] * k[d];
    }
    if (softmax) {
      double mx = *std::max_element(sc.begin(), sc.end()), z = 0;
      for (double& v : sc) z += (v = std::exp(v - mx));
      for (double& v : sc) v /= z;
    } else {
      for (double& v : sc) v /= double(sk);
    }
    std::vector<double> y(p.value_features(), 0.0);
    for (std::size_t j = 0; j < sk; ++j) {
      const auto v = proj(kv_in[j], p.value);
      for (std::size_t d = 0; d < y.size(); ++d) y[d] += sc[j] * v[d];
    }
    out.insert(out.end(), y.begin(), y.end());
  }
  return out;
}

std::vector<std::vector<double>> rows(const Tensor<double>& t) {
  std::vector<std::vector<double>> r(t.dim(0));
  for (std::size_t i = 0; i < t.dim(0); ++i)
    r[i].assign(t.ptr() + i * t.dim(1), t.ptr() + (i + 1) * t.dim(1));
  return r;
}

}  // namespace

TEST(Normalize, DivisionAndSoftmax) {
  Tensor<double> s({1, 4}, {1, 2, 3, 4});
  auto d = normalize(s, NormMode::division, 4);
  EXPECT_DOUBLE_EQ(d[3], 1.0);
  auto m = normalize(s, NormMode::softmax, 4);
  double sum = 0;
  for (double v : m.data()) sum += v;
  EXPECT_NEAR(sum, 1.0, 1e-15);
  EXPECT_THROW(normalize(s, NormMode::division, 0), DimensionError);
  EXPECT_EQ(parse_norm_mode("softmax"), NormMode::softmax);
  EXPECT_THROW(parse_norm_mode("l2"), ConfigError);
}

TEST(SelfAttention, MatchesLoopOracle) {
  Rng rng(1);
  for (auto norm : {NormMode::division, NormMode::softmax}) {
    auto p = make_attention_params<double>(5, 3, 4, 0, norm, rng, 0.7);
    std::mt19937_64 g(2);
    auto x = oracle::random_tensor<double>({9, 5}, g);
    auto y = self_attention(x, p);
    EXPECT_EQ(y.shape(), (Shape{9, 4}));
    EXPECT_LE(oracle::max_abs(naive_attention(rows(x), rows(x), p, norm == NormMode::softmax), y), 1e-12);
  }
}

TEST(SelfAttention, IdentityParamsAndShapeErrors) {
  auto p = identity_attention_params<double>(3, 0, NormMode::division);
  Tensor<double> x({4, 3}, std::vector<double>(12, 1.0));
  auto y = self_attention(x, p);
  // Q K^T entries are 3, divided by 4 keys, times 4 identical value rows of ones.
  for (double v : y.data()) EXPECT_DOUBLE_EQ(v, 3.0);
  EXPECT_THROW(self_attention(Tensor<double>({4, 2}, std::vector<double>(8)), p), DimensionError);
}

TEST(LearnedQuery, OutputRowsFollowQuery) {
  Rng rng(3);
  auto p = make_attention_params<double>(4, 3, 2, 0, NormMode::division, rng, 0.5);
  std::mt19937_64 g(4);
  LearnedQuery<double> lq{oracle::random_tensor<double>({6, 3}, g)};
  for (std::size_t s : {2u, 9u, 30u}) {
    auto y = learned_query_attention(oracle::random_tensor<double>({s, 4}, g), p, lq);
    EXPECT_EQ(y.shape(), (Shape{6, 2}));
  }
}

TEST(SharedReference, KeysIncludeReferences) {
  Rng rng(5);
  auto p = make_attention_params<double>(4, 3, 4, 7, NormMode::division, rng, 0.6);
  std::mt19937_64 g(6);
  auto x = oracle::random_tensor<double>({10, 4}, g);
  auto kv = rows(p.refs);
  for (auto& r : rows(x)) kv.push_back(r);
  auto y = shared_reference_attention(x, p);
  EXPECT_EQ(y.shape(), (Shape{10, 4}));
  EXPECT_LE(oracle::max_abs(naive_attention(rows(x), kv, p, false), y), 1e-12);
}

TEST(SharedReference, ZeroRefsIsSelfAttention) {
  Rng rng(7);
  auto p = make_attention_params<double>(3, 2, 3, 0, NormMode::softmax, rng, 0.8);
  std::mt19937_64 g(8);
  auto x = oracle::random_tensor<double>({6, 3}, g);
  EXPECT_EQ(ops::max_abs_diff(shared_reference_attention(x, p), self_attention(x, p)), 0.0);
}

TEST(SharedReference, ZeroReferencesDiluteIdentityAttention) {
  // Identity projections, zero refs: the two zero keys add nothing to the
  // numerator but still count in the division denominator.
  auto p = identity_attention_params<double>(3, 2, NormMode::division);
  Tensor<double> x({2, 3}, {0.3, -0.1, 0.5, 0.2, 0.4, -0.6});
  auto y = shared_reference_attention(x, p);
  for (std::size_t i = 0; i < 2; ++i) {
    for (std::size_t d = 0; d < 3; ++d) {
      double num = 0;
      for (std::size_t j = 0; j < 2; ++j) {
        double dot = 0;
        for (std::size_t e = 0; e < 3; ++e) dot += x[i * 3 + e] * x[j * 3 + e];
        num += dot * x[j * 3 + d];
      }
      EXPECT_NEAR(y[i * 3 + d], num / 4.0, 1e-15);
    }
  }
}

TEST(SharedReference, BlockPermutationForm) {
  // [R; P X] = diag(I_r, P) [R; X], and A_R(P X) = P A_R(X).
  Rng rng(9);
  auto p = make_attention_params<double>(3, 2, 3, 4, NormMode::division, rng, 1.0);
  std::mt19937_64 g(10);
  auto x = oracle::random_tensor<double>({9, 3}, g);
  auto pi = make_permutation(PermutationKind::rotation90, 3, 3);
  auto stacked = ops::concat_rows<double>({p.refs, x});
  auto lhs = ops::concat_rows<double>({p.refs, apply_permutation(pi, x)});
  auto rhs = ops::matmul(block_permutation_matrix<double>(pi, 4), stacked);
  EXPECT_LE(ops::max_abs_diff(lhs, rhs), 1e-15);
  EXPECT_LE(ops::max_abs_diff(shared_reference_attention(apply_permutation(pi, x), p),
                              apply_permutation(pi, shared_reference_attention(x, p))),
            1e-12);
}

TEST(BatchAware, SpansWholeBatch) {
  Rng rng(11);
  auto p = make_attention_params<double>(3, 2, 3, 5, NormMode::division, rng, 0.9);
  std::mt19937_64 g(12);
  std::vector<Tensor<double>> xs;
  std::vector<std::vector<double>> kv;
  for (int i = 0; i < 3; ++i) {
    xs.push_back(oracle::random_tensor<double>({4, 3}, g));
    for (auto& r : rows(xs.back())) kv.push_back(r);
  }
  auto ys = batch_aware_attention(xs, p);
  ASSERT_EQ(ys.size(), 3u);
  for (int i = 0; i < 3; ++i) {
    EXPECT_LE(oracle::max_abs(naive_attention(rows(xs[i]), kv, p, false), ys[i]), 1e-12);
  }
}

TEST(BatchAware, OptionalReferencesStackedOnce) {
  Rng rng(21);
  auto p = make_attention_params<double>(3, 2, 3, 4, NormMode::softmax, rng, 0.9);
  std::mt19937_64 g(22);
  std::vector<Tensor<double>> xs{oracle::random_tensor<double>({5, 3}, g),
                                 oracle::random_tensor<double>({5, 3}, g)};
  auto kv = rows(p.refs);
  for (const auto& x : xs)
    for (auto& r : rows(x)) kv.push_back(r);
  auto ys = batch_aware_attention(xs, p, true);
  for (int i = 0; i < 2; ++i) {
    EXPECT_LE(oracle::max_abs(naive_attention(rows(xs[i]), kv, p, true), ys[i]), 1e-12);
  }
  EXPECT_LE(ops::max_abs_diff(batch_aware_attention<double>({xs[0]}, p, true)[0],
                              shared_reference_attention(xs[0], p)),
            1e-12);
}

TEST(BatchAware, SingletonEqualsSelfAttention) {
  Rng rng(13);
  auto p = make_attention_params<double>(4, 3, 4, 2, NormMode::softmax, rng, 1.0);
  std::mt19937_64 g(14);
  auto x = oracle::random_tensor<double>({7, 4}, g);
  EXPECT_LE(ops::max_abs_diff(batch_aware_attention<double>({x}, p)[0], self_attention(x, p)), 1e-12);
  EXPECT_THROW(batch_aware_attention<double>({}, p), UsageError);
}

TEST(BatchAware, MismatchedInstancesRejected) {
  Rng rng(15);
  auto p = make_attention_params<double>(2, 2, 2, 0, NormMode::division, rng);
  std::vector<Tensor<double>> xs{Tensor<double>::zeros({3, 2}), Tensor<double>::zeros({4, 3})};
  EXPECT_THROW(batch_aware_attention(xs, p), DimensionError);
}

TEST(AttentionGradients, AllOperatorsMatchFiniteDifferences) {
  Rng rng(16);
  auto p = make_attention_params<double>(3, 2, 3, 2, NormMode::softmax, rng, 0.8);
  std::mt19937_64 g(17);
  auto x = oracle::random_tensor<double>({5, 3}, g);
  auto x2 = oracle::random_tensor<double>({5, 3}, g);
  auto lq = oracle::random_tensor<double>({2, 2}, g);
  auto w = oracle::random_tensor<double>({5, 3}, g);
  ScalarFunction<double> f = [&](const std::vector<Tensor<double>>& v) {
    AttentionParams<double> q = p;
    q.query = {v[1], v[2]};
    q.key = {v[3], v[4]};
    q.value = {v[5], v[6]};
    q.refs = v[7];
    auto a = shared_reference_attention(v[0], q);
    auto b = batch_aware_attention<double>({v[0], x2}, q)[1];
    auto c = learned_query_attention(v[0], q, LearnedQuery<double>{v[8]});
    return ops::add(ops::sum(ops::mul(ops::add(a, b), w)), ops::sum(ops::mul(c, c)));
  };
  GradCheckOptions o;
  o.tolerance = 1e-6;
  auto r = finite_diff_check<double>(f, {x, p.query.weight, p.query.bias, p.key.weight, p.key.bias,
                                         p.value.weight, p.value.bias, p.refs, lq},
                                     o);
  EXPECT_TRUE(r.pass) << r.max_rel_error;
}
