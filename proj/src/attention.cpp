#include "aeanet/attention.hpp"

#include "aeanet/ops.hpp"

namespace aeanet {

NormMode parse_norm_mode(const std::string& text) {
  if (text == "division") return NormMode::division;
  if (text == "softmax") return NormMode::softmax;
  throw ConfigError("unknown normalization mode '" + text + "' (expected division|softmax)");
}

std::string to_string(NormMode mode) {
  return mode == NormMode::division ? "division" : "softmax";
}

template <typename T>
Tensor<T> Projection<T>::apply(const Tensor<T>& x) const {
  return ops::add_bias(ops::matmul(x, weight), bias);
}

template <typename T>
void AttentionParams<T>::validate() const {
  const std::size_t c = features();
  auto check = [&](const Projection<T>& p, const char* name) {
    if (p.weight.rank() != 2 || p.bias.rank() != 1 || p.bias.dim(0) != p.weight.dim(1)) {
      throw DimensionError(std::string("attention: malformed ") + name + " projection");
    }
    if (p.weight.dim(0) != c) {
      throw DimensionError(std::string("attention: ") + name + " projection expects " +
                           std::to_string(p.weight.dim(0)) + " features, query expects " +
                           std::to_string(c));
    }
  };
  check(query, "query");
  check(key, "key");
  check(value, "value");
  if (key.out_features() != query.out_features()) {
    throw DimensionError("attention: query and key feature sizes differ");
  }
  if (refs.rank() != 2 || refs.dim(1) != c) {
    throw DimensionError("attention: refs " + shape_to_string(refs.shape()) +
                         " must have " + std::to_string(c) + " features");
  }
}

template <typename T>
AttentionParams<T> make_attention_params(std::size_t c, std::size_t c1, std::size_t c2,
                                         std::size_t r, NormMode norm, Rng& rng,
                                         double init_std) {
  auto normal = [&](Shape shape) {
    std::vector<T> v(shape_numel(shape));
    for (T& x : v) x = static_cast<T>(rng.normal(0.0, init_std));
    return Tensor<T>(std::move(shape), std::move(v));
  };
  AttentionParams<T> p;
  p.query = {normal({c, c1}), Tensor<T>::zeros({c1})};
  p.key = {normal({c, c1}), Tensor<T>::zeros({c1})};
  p.value = {normal({c, c2}), Tensor<T>::zeros({c2})};
  p.refs = normal({r, c});
  p.norm = norm;
  return p;
}

template <typename T>
AttentionParams<T> identity_attention_params(std::size_t c, std::size_t r, NormMode norm) {
  std::vector<T> eye(c * c, T(0));
  for (std::size_t i = 0; i < c; ++i) eye[i * c + i] = T(1);
  Tensor<T> w({c, c}, eye);
  AttentionParams<T> p;
  p.query = {w, Tensor<T>::zeros({c})};
  p.key = {w, Tensor<T>::zeros({c})};
  p.value = {w, Tensor<T>::zeros({c})};
  p.refs = Tensor<T>::zeros({r, c});
  p.norm = norm;
  return p;
}

template <typename T>
Tensor<T> normalize(const Tensor<T>& scores, NormMode mode, std::size_t key_count) {
  if (key_count == 0) throw DimensionError("normalize: key spatial size must be positive");
  if (mode == NormMode::softmax) return ops::softmax_rows(scores);
  return ops::scale(scores, T(1) / static_cast<T>(key_count));
}

namespace {

template <typename T>
void require_features(const Tensor<T>& x, const AttentionParams<T>& p) {
  p.validate();
  if (x.rank() != 2 || x.dim(1) != p.features()) {
    throw DimensionError("attention: input " + shape_to_string(x.shape()) +
                         " does not match " + std::to_string(p.features()) + " features");
  }
}

template <typename T>
Tensor<T> attend(const Tensor<T>& query, const Tensor<T>& keys, const Tensor<T>& values,
                 NormMode mode) {
  Tensor<T> scores = ops::matmul(query, ops::transpose(keys));
  return ops::matmul(normalize(scores, mode, keys.dim(0)), values);
}

}  // namespace

template <typename T>
Tensor<T> self_attention(const Tensor<T>& x, const AttentionParams<T>& p) {
  require_features(x, p);
  return attend(p.query.apply(x), p.key.apply(x), p.value.apply(x), p.norm);
}

template <typename T>
Tensor<T> learned_query_attention(const Tensor<T>& x, const AttentionParams<T>& p,
                                  const LearnedQuery<T>& lq) {
  require_features(x, p);
  if (lq.query.rank() != 2 || lq.query.dim(1) != p.key_features()) {
    throw DimensionError("learned query " + shape_to_string(lq.query.shape()) +
                         " must have " + std::to_string(p.key_features()) + " features");
  }
  return attend(lq.query, p.key.apply(x), p.value.apply(x), p.norm);
}

template <typename T>
Tensor<T> shared_reference_attention(const Tensor<T>& x, const AttentionParams<T>& p) {
  require_features(x, p);
  if (p.ref_count() == 0) return self_attention(x, p);
  Tensor<T> augmented = ops::concat_rows<T>({p.refs, x});
  return attend(p.query.apply(x), p.key.apply(augmented), p.value.apply(augmented), p.norm);
}

template <typename T>
std::vector<Tensor<T>> batch_aware_attention(const std::vector<Tensor<T>>& xs,
                                             const AttentionParams<T>& p, bool include_refs) {
  if (xs.empty()) throw UsageError("batch_aware_attention: empty batch");
  for (const Tensor<T>& x : xs) {
    require_features(x, p);
    if (x.shape() != xs.front().shape()) {
      throw DimensionError("batch_aware_attention: heterogeneous instance shapes " +
                           shape_to_string(x.shape()) + " vs " +
                           shape_to_string(xs.front().shape()));
    }
  }
  std::vector<Tensor<T>> sources;
  if (include_refs && p.ref_count() > 0) sources.push_back(p.refs);
  sources.insert(sources.end(), xs.begin(), xs.end());
  Tensor<T> all = sources.size() == 1 ? sources.front() : ops::concat_rows(sources);
  Tensor<T> keys = p.key.apply(all);
  Tensor<T> values = p.value.apply(all);
  std::vector<Tensor<T>> out;
  out.reserve(xs.size());
  for (const Tensor<T>& x : xs) out.push_back(attend(p.query.apply(x), keys, values, p.norm));
  return out;
}

#define AEANET_INSTANTIATE_ATTENTION(T)                                                     \
  template struct Projection<T>;                                                           \
  template struct AttentionParams<T>;                                                      \
  template AttentionParams<T> make_attention_params(std::size_t, std::size_t, std::size_t, \
                                                    std::size_t, NormMode, Rng&, double);  \
  template AttentionParams<T> identity_attention_params(std::size_t, std::size_t, NormMode); \
  template Tensor<T> normalize(const Tensor<T>&, NormMode, std::size_t);                   \
  template Tensor<T> self_attention(const Tensor<T>&, const AttentionParams<T>&);          \
  template Tensor<T> learned_query_attention(const Tensor<T>&, const AttentionParams<T>&,  \
                                             const LearnedQuery<T>&);                      \
  template Tensor<T> shared_reference_attention(const Tensor<T>&, const AttentionParams<T>&); \
  template std::vector<Tensor<T>> batch_aware_attention(const std::vector<Tensor<T>>&,     \
                                                        const AttentionParams<T>&, bool);

AEANET_INSTANTIATE_ATTENTION(float)
AEANET_INSTANTIATE_ATTENTION(double)

}  // namespace aeanet
