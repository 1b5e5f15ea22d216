#include "aeanet/property_suite.hpp"

#include <algorithm>
#include <chrono>
#include <limits>
#include <numeric>

#include "aeanet/error.hpp"
#include "aeanet/ops.hpp"
#include "aeanet/permutation.hpp"
#include "aeanet/random.hpp"

namespace aeanet {

AttentionOp parse_attention_op(const std::string& text) {
  if (text == "self-attention") return AttentionOp::self_attention;
  if (text == "learned-query") return AttentionOp::learned_query;
  if (text == "shared-reference") return AttentionOp::shared_reference;
  if (text == "batch-aware") return AttentionOp::batch_aware;
  throw UsageError("unknown attention op '" + text +
                   "' (expected self-attention|learned-query|shared-reference|batch-aware)");
}

std::string to_string(AttentionOp op) {
  switch (op) {
    case AttentionOp::self_attention: return "self-attention";
    case AttentionOp::learned_query: return "learned-query";
    case AttentionOp::shared_reference: return "shared-reference";
    case AttentionOp::batch_aware: return "batch-aware";
  }
  return "unknown";
}

namespace {

using T = double;

Tensor<T> random_tensor(Shape shape, Rng& rng, double sd = 1.0) {
  std::vector<T> v(shape_numel(shape));
  for (T& x : v) x = rng.normal(0.0, sd);
  return Tensor<T>(std::move(shape), std::move(v));
}

std::size_t pick(Rng& rng, std::size_t lo, std::size_t hi) { return lo + rng.index(hi - lo + 1); }

double diff(const Tensor<T>& a, const Tensor<T>& b) { return ops::max_abs_diff(a, b); }

}  // namespace

PropertySuiteReport run_property_suite(AttentionOp op, const PropertySuiteOptions& o) {
  if (o.trials == 0) throw UsageError("property suite needs at least one trial");
  if (o.min_positions < 1 || o.min_positions > o.max_positions || o.max_features < 1) {
    throw ConfigError("property suite: invalid sampling ranges");
  }
  const auto started = std::chrono::steady_clock::now();
  PropertySuiteReport rep;
  rep.op = op;
  rep.trials = o.trials;
  rep.positive_control_min_diff = std::numeric_limits<double>::infinity();

  for (std::size_t t = 0; t < o.trials; ++t) {
    Rng rng(mix_seed(o.seed, t));
    const std::size_t s = pick(rng, o.min_positions, o.max_positions);
    const std::size_t c = pick(rng, 1, o.max_features);
    const std::size_t c1 = pick(rng, 1, o.max_features);
    std::size_t c2 = pick(rng, 1, o.max_features);
    std::size_t r = 0;
    if (op == AttentionOp::shared_reference && !o.ref_sizes.empty()) {
      r = o.ref_sizes[t % o.ref_sizes.size()];
    }
    const AttentionParams<T> p = make_attention_params<T>(c, c1, c2, r, o.norm, rng, o.init_std);
    const PermutationSpec pi = random_permutation(s, rng.engine()());
    const Tensor<T> x = random_tensor({s, c}, rng);
    const Tensor<T> x2 = random_tensor({s, c}, rng);

    SpatialOperator<T> f;
    switch (op) {
      case AttentionOp::self_attention:
        f = [&](const Tensor<T>& in) { return self_attention(in, p); };
        break;
      case AttentionOp::shared_reference:
        f = [&](const Tensor<T>& in) { return shared_reference_attention(in, p); };
        break;
      case AttentionOp::learned_query: {
        auto lq = std::make_shared<LearnedQuery<T>>(LearnedQuery<T>{random_tensor({s, c1}, rng)});
        f = [&p, lq](const Tensor<T>& in) { return learned_query_attention(in, p, *lq); };
        break;
      }
      case AttentionOp::batch_aware: {
        // The property operator is instance 0 of a batch whose other members
        // stay fixed; permuting one instance must permute only its output.
        const std::size_t n = pick(rng, 1, std::max<std::size_t>(1, o.max_batch));
        std::vector<Tensor<T>> others;
        for (std::size_t i = 1; i < n; ++i) others.push_back(random_tensor({s, c}, rng));
        f = [&p, others](const Tensor<T>& in) {
          std::vector<Tensor<T>> batch{in};
          batch.insert(batch.end(), others.begin(), others.end());
          return batch_aware_attention(batch, p).front();
        };

        std::vector<Tensor<T>> batch{x};
        batch.insert(batch.end(), others.begin(), others.end());
        const auto out = batch_aware_attention(batch, p);
        std::vector<std::size_t> order(n);
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::shuffle(order.begin(), order.end(), rng.engine());
        std::vector<Tensor<T>> shuffled;
        for (std::size_t i : order) shuffled.push_back(batch[i]);
        const auto out_shuffled = batch_aware_attention(shuffled, p);
        for (std::size_t i = 0; i < n; ++i) {
          rep.batch_reorder_max_err =
              std::max(rep.batch_reorder_max_err, diff(out_shuffled[i], out[order[i]]));
        }
        rep.singleton_max_err = std::max(
            rep.singleton_max_err, diff(batch_aware_attention<T>({x}, p).front(), self_attention(x, p)));
        break;
      }
    }

    const Tensor<T> y = f(x);
    const Tensor<T> y_perm = f(apply_permutation(pi, x));
    rep.invariance_max_err = std::max(rep.invariance_max_err, diff(y_perm, y));
    rep.equivariance_max_err =
        std::max(rep.equivariance_max_err, diff(y_perm, apply_permutation(pi, y)));
    rep.positive_control_min_diff = std::min(rep.positive_control_min_diff, diff(f(x2), y));
  }
  rep.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return rep;
}

}  // namespace aeanet
