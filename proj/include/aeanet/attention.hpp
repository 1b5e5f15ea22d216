#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "aeanet/random.hpp"
#include "aeanet/tensor.hpp"

namespace aeanet {

enum class NormMode { division, softmax };

NormMode parse_norm_mode(const std::string& text);
std::string to_string(NormMode mode);

// Per-position linear map (a 1x1 convolution): x[s x c] -> x*W + b.
template <typename T>
struct Projection {
  Tensor<T> weight;  // [c_in x c_out]
  Tensor<T> bias;    // [c_out]

  Tensor<T> apply(const Tensor<T>& x) const;
  std::size_t in_features() const { return weight.dim(0); }
  std::size_t out_features() const { return weight.dim(1); }
};

// Projections q, k, v shared by every attention operator, plus the learnable
// shared references (r rows of c features; r may be zero).
template <typename T>
struct AttentionParams {
  Projection<T> query;
  Projection<T> key;
  Projection<T> value;
  Tensor<T> refs;
  NormMode norm = NormMode::division;

  std::size_t features() const { return query.in_features(); }        // c
  std::size_t key_features() const { return query.out_features(); }   // c1
  std::size_t value_features() const { return value.out_features(); } // c2
  std::size_t ref_count() const { return refs.dim(0); }               // r

  // Throws DimensionError unless the projections and refs are consistent.
  void validate() const;
};

// Weights and refs drawn i.i.d. N(0, init_std^2), biases zero.
template <typename T>
AttentionParams<T> make_attention_params(std::size_t c, std::size_t c1, std::size_t c2,
                                         std::size_t r, NormMode norm, Rng& rng,
                                         double init_std = 0.02);

// q, k, v are identity maps (requires c1 = c2 = c), biases zero, refs zero.
template <typename T>
AttentionParams<T> identity_attention_params(std::size_t c, std::size_t r, NormMode norm);

template <typename T>
struct LearnedQuery {
  Tensor<T> query;  // [s_q x c1]
};

// division: scores / key_count. softmax: row-wise softmax.
template <typename T>
Tensor<T> normalize(const Tensor<T>& scores, NormMode mode, std::size_t key_count);

// Y = normalize(q(x) k(x)^T) v(x); x is [s x c].
template <typename T>
Tensor<T> self_attention(const Tensor<T>& x, const AttentionParams<T>& p);

// Y = normalize(Q k(x)^T) v(x) with Q learned; output has s_q rows for any s.
template <typename T>
Tensor<T> learned_query_attention(const Tensor<T>& x, const AttentionParams<T>& p,
                                  const LearnedQuery<T>& lq);

// Keys and values come from [refs; x]; the query from x alone.
template <typename T>
Tensor<T> shared_reference_attention(const Tensor<T>& x, const AttentionParams<T>& p);

// Every instance queries keys/values spanning the whole batch. Refs are left
// out unless include_refs is set, in which case they are stacked on top once.
template <typename T>
std::vector<Tensor<T>> batch_aware_attention(const std::vector<Tensor<T>>& xs,
                                             const AttentionParams<T>& p,
                                             bool include_refs = false);

}  // namespace aeanet
