#include <gtest/gtest.h>

#include <random>

#include "aeanet/attention.hpp"
#include "aeanet/error.hpp"
#include "aeanet/ops.hpp"
#include "aeanet/permutation.hpp"
#include "aeanet/property_suite.hpp"
#include "oracles.hpp"

using namespace aeanet;

TEST(Permutation, AllKindsAreBijections) {
  for (auto kind : {PermutationKind::identity, PermutationKind::rotation90, PermutationKind::flip_h,
                    PermutationKind::flip_v, PermutationKind::cyclic_shift, PermutationKind::random}) {
    auto spec = make_permutation(kind, 5, 5, {2, -1, 9});
    EXPECT_TRUE(spec.is_bijection()) << to_string(kind);
    EXPECT_EQ(spec.size, 25u);
  }
}

TEST(Permutation, RotationNeedsSquareGrid) {
  EXPECT_THROW(make_permutation(PermutationKind::rotation90, 4, 3), ConfigError);
  EXPECT_THROW(make_permutation(PermutationKind::identity, 0, 3), ConfigError);
  EXPECT_THROW(parse_permutation_kind("shear"), ConfigError);
}

TEST(Permutation, RotationFourTimesIsIdentity) {
  auto r = make_permutation(PermutationKind::rotation90, 4, 4);
  std::mt19937_64 g(1);
  auto x = oracle::random_tensor<double>({16, 2}, g);
  auto y = x;
  for (int i = 0; i < 4; ++i) y = apply_permutation(r, y);
  EXPECT_EQ(y.to_vector(), x.to_vector());
  EXPECT_NE(apply_permutation(r, x).to_vector(), x.to_vector());
}

TEST(Permutation, FlipsAndShiftsOnAGrid) {
  // 3 wide, 2 tall grid holding its own index.
  Tensor<double> x({6, 1}, {0, 1, 2, 3, 4, 5});
  EXPECT_EQ(apply_permutation(make_permutation(PermutationKind::flip_h, 3, 2), x).to_vector(),
            (std::vector<double>{2, 1, 0, 5, 4, 3}));
  EXPECT_EQ(apply_permutation(make_permutation(PermutationKind::flip_v, 3, 2), x).to_vector(),
            (std::vector<double>{3, 4, 5, 0, 1, 2}));
  EXPECT_EQ(apply_permutation(make_permutation(PermutationKind::cyclic_shift, 3, 2, {1, 0}), x).to_vector(),
            (std::vector<double>{2, 0, 1, 5, 3, 4}));
}

TEST(Permutation, MatrixFormAgreesAndIsOrthogonal) {
  auto spec = random_permutation(12, 7);
  auto P = permutation_matrix<double>(spec);
  std::mt19937_64 g(2);
  auto x = oracle::random_tensor<double>({12, 3}, g);
  EXPECT_EQ(ops::max_abs_diff(ops::matmul(P, x), apply_permutation(spec, x)), 0.0);
  auto PtP = ops::matmul(ops::transpose(P), P);
  for (std::size_t i = 0; i < 12; ++i)
    for (std::size_t j = 0; j < 12; ++j) EXPECT_EQ(PtP.at(i, j), i == j ? 1.0 : 0.0);
  auto inv = spec.inverse();
  EXPECT_EQ(apply_permutation(inv, apply_permutation(spec, x)).to_vector(), x.to_vector());
}

TEST(Permutation, SizeMismatchRejected) {
  auto spec = random_permutation(5, 1);
  EXPECT_THROW(apply_permutation(spec, Tensor<double>::zeros({4, 2})), DimensionError);
}

TEST(PropertyChecks, PointwiseOpIsEquivariantNotInvariant) {
  std::mt19937_64 g(3);
  auto x = oracle::random_tensor<double>({10, 2}, g);
  auto spec = random_permutation(10, 4);
  SpatialOperator<double> relu = [](const Tensor<double>& t) { return ops::relu(t); };
  EXPECT_TRUE(check_equivariance(relu, x, spec, 0.0).pass);
  EXPECT_FALSE(check_invariance(relu, x, spec, 1e-6).pass);
}

TEST(PropertyChecks, ShapeChangingOpIsRejected) {
  std::mt19937_64 g(5);
  auto x = oracle::random_tensor<double>({6, 2}, g);
  SpatialOperator<double> pool = [](const Tensor<double>& t) { return ops::reshape(t, {3, 4}); };
  EXPECT_THROW(check_equivariance(pool, x, random_permutation(6, 1), 1e-9), UsageError);
}

TEST(PropertySuite, EquivarianceInvarianceAndNegativeControl) {
  PropertySuiteOptions o;
  o.trials = 30;
  auto self = run_property_suite(AttentionOp::self_attention, o);
  EXPECT_LE(self.equivariance_max_err, 1e-10);
  EXPECT_GT(self.invariance_max_err, 1e-3);
  auto lq = run_property_suite(AttentionOp::learned_query, o);
  EXPECT_LE(lq.invariance_max_err, 1e-10);
  EXPECT_GT(lq.equivariance_max_err, 1e-3);
  EXPECT_GT(lq.positive_control_min_diff, 1e-6);
  o.norm = NormMode::softmax;
  auto sr = run_property_suite(AttentionOp::shared_reference, o);
  EXPECT_LE(sr.equivariance_max_err, 1e-10);
  auto ba = run_property_suite(AttentionOp::batch_aware, o);
  EXPECT_LE(ba.equivariance_max_err, 1e-10);
  EXPECT_LE(ba.batch_reorder_max_err, 1e-10);
  EXPECT_LE(ba.singleton_max_err, 1e-12);
  EXPECT_THROW(parse_attention_op("cross-attention"), UsageError);
}
