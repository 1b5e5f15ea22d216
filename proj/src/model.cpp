#include "aeanet/model.hpp"

#include <cmath>

#include "aeanet/random.hpp"

namespace aeanet {

AttentionVariant parse_variant(const std::string& text) {
  if (text == "aea") return AttentionVariant::aea;
  if (text == "self_only") return AttentionVariant::self_only;
  if (text == "learned_query") return AttentionVariant::learned_query;
  if (text == "none") return AttentionVariant::none;
  throw ConfigError("unknown attention variant '" + text +
                    "' (expected aea|self_only|learned_query|none)");
}

std::string to_string(AttentionVariant variant) {
  switch (variant) {
    case AttentionVariant::aea: return "aea";
    case AttentionVariant::self_only: return "self_only";
    case AttentionVariant::learned_query: return "learned_query";
    case AttentionVariant::none: return "none";
  }
  return "unknown";
}

void ModelConfig::validate() const {
  if (base_channels < 2 || base_channels % 2 != 0) {
    throw ConfigError("model.base_channels must be an even number >= 2");
  }
  if (variant == AttentionVariant::learned_query && query_size == 0) {
    throw ConfigError("learned_query variant needs model.query_size > 0");
  }
}

KeyValues ModelConfig::to_key_values() const {
  KeyValues kv;
  kv.set("model.base_channels", std::to_string(base_channels));
  kv.set("model.ref_size", std::to_string(ref_size));
  kv.set("model.variant", to_string(variant));
  kv.set("model.norm", to_string(norm));
  kv.set("model.batch_aware", batch_aware ? "true" : "false");
  kv.set("model.batch_refs", batch_refs ? "true" : "false");
  kv.set("model.boundary", boundary == ops::Boundary::zero ? "zero" : "periodic");
  kv.set("model.query_size", std::to_string(query_size));
  return kv;
}

ModelConfig ModelConfig::from_key_values(const KeyValues& kv) {
  ModelConfig c;
  c.base_channels = kv.get_u64("model.base_channels", c.base_channels);
  c.ref_size = kv.get_u64("model.ref_size", c.ref_size);
  c.variant = parse_variant(kv.get_string("model.variant", to_string(c.variant)));
  c.norm = parse_norm_mode(kv.get_string("model.norm", to_string(c.norm)));
  c.batch_aware = kv.get_bool("model.batch_aware", c.batch_aware);
  c.batch_refs = kv.get_bool("model.batch_refs", c.batch_refs);
  const std::string boundary = kv.get_string("model.boundary", "zero");
  if (boundary == "zero") {
    c.boundary = ops::Boundary::zero;
  } else if (boundary == "periodic") {
    c.boundary = ops::Boundary::periodic;
  } else {
    throw ConfigError("model.boundary must be zero|periodic");
  }
  c.query_size = kv.get_u64("model.query_size", c.query_size);
  c.validate();
  return c;
}

BranchSplit training_branch_split(std::size_t n) {
  if (n <= 1) return {n, 0};
  return {n / 2, n - n / 2};
}

template <typename T>
std::vector<Tensor<T>> attention_block_forward(const std::vector<Tensor<T>>& xs,
                                               const AttentionParams<T>& p, BlockMode mode,
                                               bool batch_aware, bool batch_refs) {
  if (xs.empty()) throw UsageError("attention block: empty batch");
  std::vector<Tensor<T>> flat;
  flat.reserve(xs.size());
  for (const Tensor<T>& x : xs) flat.push_back(ops::flatten_spatial(x));

  const BranchSplit split = mode == BlockMode::train && batch_aware
                                ? training_branch_split(xs.size())
                                : BranchSplit{xs.size(), 0};
  std::vector<Tensor<T>> attended;
  attended.reserve(xs.size());
  for (std::size_t i = 0; i < split.shared_reference; ++i) {
    attended.push_back(shared_reference_attention(flat[i], p));
  }
  if (split.batch_aware > 0) {
    std::vector<Tensor<T>> group(flat.begin() + static_cast<std::ptrdiff_t>(split.shared_reference),
                                 flat.end());
    for (Tensor<T>& y : batch_aware_attention(group, p, batch_refs)) attended.push_back(std::move(y));
  }

  std::vector<Tensor<T>> out;
  out.reserve(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const Shape spatial(xs[i].shape().begin(), xs[i].shape().end() - 1);
    out.push_back(ops::add(xs[i], ops::fold_spatial(attended[i], spatial)));
  }
  return out;
}

namespace {

struct ConvSpec {
  std::string name;
  std::size_t k, cin, cout;
  bool transposed;
};

std::vector<ConvSpec> conv_specs(const ModelConfig& c) {
  const std::size_t c1 = c.base_channels, c2 = 2 * c1, c3 = 4 * c1;
  std::vector<ConvSpec> specs = {
      {"enc1.conv1", 3, 1, c1, false},  {"enc1.conv2", 3, c1, c1, false},
      {"down1", 3, c1, c2, false},      {"enc2.conv1", 3, c2, c2, false},
      {"enc2.conv2", 3, c2, c2, false}, {"down2", 3, c2, c3, false},
      {"up2", 3, c2, c3, true},         {"dec2.conv1", 3, 2 * c2, c2, false},
      {"dec2.conv2", 3, c2, c2, false}, {"up1", 3, c1, c2, true},
      {"dec1.conv1", 3, 2 * c1, c1, false}, {"dec1.conv2", 3, c1, c1, false},
      {"out", 1, c1, 1, false},
  };
  if (c.variant == AttentionVariant::none) {
    specs.push_back({"mid.conv1", 3, c3, c3, false});
    specs.push_back({"mid.conv2", 3, c3, c3, false});
  }
  return specs;
}

}  // namespace

std::map<std::string, Shape> parameter_shapes(const ModelConfig& config) {
  config.validate();
  std::map<std::string, Shape> shapes;
  for (const ConvSpec& s : conv_specs(config)) {
    // Transposed kernels are stored as the adjoint conv2d kernel [k x k x out x in].
    shapes[s.name + ".weight"] = {s.k, s.k, s.cin, s.cout};
    shapes[s.name + ".bias"] = {s.transposed ? s.cin : s.cout};
  }
  if (config.variant != AttentionVariant::none) {
    const std::size_t c = config.bottleneck_channels(), c1 = c / 2;
    for (const char* proj : {"query", "key"}) {
      shapes[std::string("attn.") + proj + ".weight"] = {c, c1};
      shapes[std::string("attn.") + proj + ".bias"] = {c1};
    }
    shapes["attn.value.weight"] = {c, c};
    shapes["attn.value.bias"] = {c};
    const std::size_t r = config.variant == AttentionVariant::aea ? config.ref_size : 0;
    shapes["attn.refs"] = {r, c};
    if (config.variant == AttentionVariant::learned_query) {
      shapes["attn.learned_query"] = {config.query_size, c1};
    }
  }
  return shapes;
}

template <typename T>
Model<T>::Model(ModelConfig config, std::uint64_t seed) : config_(std::move(config)) {
  config_.validate();
  Rng rng(mix_seed(seed, 0x41454e));
  const std::size_t c = config_.bottleneck_channels();
  const std::size_t r = config_.variant == AttentionVariant::aea ? config_.ref_size : 0;

  // Fan-in scaled uniform init for convolutions, zero biases.
  for (const ConvSpec& s : conv_specs(config_)) {
    const double fan_in = s.transposed ? static_cast<double>(s.k * s.k * s.cout) / 4.0
                                       : static_cast<double>(s.k * s.k * s.cin);
    const double bound = std::sqrt(6.0 / fan_in);
    Shape shape{s.k, s.k, s.cin, s.cout};
    std::vector<T> w(shape_numel(shape));
    for (T& v : w) v = static_cast<T>(rng.uniform(-bound, bound));
    params_[s.name + ".weight"] = Tensor<T>(shape, std::move(w));
    params_[s.name + ".bias"] = Tensor<T>::zeros({s.transposed ? s.cin : s.cout});
  }
  if (config_.variant != AttentionVariant::none) {
    AttentionParams<T> p = make_attention_params<T>(c, c / 2, c, r, config_.norm, rng);
    params_["attn.query.weight"] = p.query.weight;
    params_["attn.query.bias"] = p.query.bias;
    params_["attn.key.weight"] = p.key.weight;
    params_["attn.key.bias"] = p.key.bias;
    params_["attn.value.weight"] = p.value.weight;
    params_["attn.value.bias"] = p.value.bias;
    params_["attn.refs"] = p.refs;
    if (config_.variant == AttentionVariant::learned_query) {
      std::vector<T> q(config_.query_size * (c / 2));
      for (T& v : q) v = static_cast<T>(rng.normal(0.0, 0.02));
      params_["attn.learned_query"] = Tensor<T>({config_.query_size, c / 2}, std::move(q));
    }
  }
}

template <typename T>
Model<T>::Model(ModelConfig config, ParameterSet<T> params) : config_(std::move(config)) {
  set_parameters(std::move(params));
}

template <typename T>
void Model<T>::set_parameters(ParameterSet<T> params) {
  const auto shapes = parameter_shapes(config_);
  if (params.size() != shapes.size()) {
    throw DimensionError("model expects " + std::to_string(shapes.size()) + " parameters, got " +
                         std::to_string(params.size()));
  }
  for (const auto& [name, shape] : shapes) {
    auto it = params.find(name);
    if (it == params.end()) throw DimensionError("missing model parameter '" + name + "'");
    if (it->second.shape() != shape) {
      throw DimensionError("parameter '" + name + "' has shape " +
                           shape_to_string(it->second.shape()) + ", expected " +
                           shape_to_string(shape));
    }
    it->second = it->second.detach();
  }
  params_ = std::move(params);
}

template <typename T>
std::size_t Model<T>::parameter_count() const {
  std::size_t n = 0;
  for (const auto& [name, t] : params_) n += t.numel();
  return n;
}

template <typename T>
AttentionParams<T> Model<T>::attention_params(const ParameterSet<T>& params) const {
  if (config_.variant == AttentionVariant::none) {
    throw UsageError("variant 'none' has no attention parameters");
  }
  AttentionParams<T> p;
  p.query = {params.at("attn.query.weight"), params.at("attn.query.bias")};
  p.key = {params.at("attn.key.weight"), params.at("attn.key.bias")};
  p.value = {params.at("attn.value.weight"), params.at("attn.value.bias")};
  p.refs = params.at("attn.refs");
  p.norm = config_.norm;
  return p;
}

template <typename T>
typename Model<T>::Encoded Model<T>::encode(const ParameterSet<T>& params,
                                            const Tensor<T>& x) const {
  if (x.rank() != 3 || x.dim(2) != 1) {
    throw DimensionError("model input must be [h x w x 1], got " + shape_to_string(x.shape()));
  }
  if (x.dim(0) % 4 != 0 || x.dim(1) % 4 != 0 || x.dim(0) == 0 || x.dim(1) == 0) {
    throw DimensionError("model input " + std::to_string(x.dim(0)) + "x" +
                         std::to_string(x.dim(1)) +
                         " is not divisible by 4; pad it first (see tile_and_stitch)");
  }
  auto conv = [&](const Tensor<T>& in, const std::string& name, std::size_t stride) {
    ops::ConvOptions opt{stride, ops::Padding::same, config_.boundary};
    return ops::relu(ops::add_bias(ops::conv2d(in, params.at(name + ".weight"), opt),
                                   params.at(name + ".bias")));
  };
  Encoded e;
  e.skip1 = conv(conv(x, "enc1.conv1", 1), "enc1.conv2", 1);
  Tensor<T> d1 = conv(e.skip1, "down1", 2);
  e.skip2 = conv(conv(d1, "enc2.conv1", 1), "enc2.conv2", 1);
  e.bottom = conv(e.skip2, "down2", 2);
  return e;
}

template <typename T>
Tensor<T> Model<T>::decode(const ParameterSet<T>& params, const Encoded& enc,
                           const Tensor<T>& bottom) const {
  const ops::ConvOptions unit{1, ops::Padding::same, config_.boundary};
  const ops::ConvOptions up{2, ops::Padding::same, config_.boundary};
  auto conv = [&](const Tensor<T>& in, const std::string& name) {
    return ops::relu(ops::add_bias(ops::conv2d(in, params.at(name + ".weight"), unit),
                                   params.at(name + ".bias")));
  };
  auto upsample = [&](const Tensor<T>& in, const std::string& name) {
    return ops::relu(ops::add_bias(ops::conv2d_transpose(in, params.at(name + ".weight"), up),
                                   params.at(name + ".bias")));
  };
  Tensor<T> u2 = upsample(bottom, "up2");
  Tensor<T> d2 = conv(conv(ops::concat_last(u2, enc.skip2), "dec2.conv1"), "dec2.conv2");
  Tensor<T> u1 = upsample(d2, "up1");
  Tensor<T> d1 = conv(conv(ops::concat_last(u1, enc.skip1), "dec1.conv1"), "dec1.conv2");
  return ops::add_bias(ops::conv2d(d1, params.at("out.weight"), unit), params.at("out.bias"));
}

template <typename T>
std::vector<Tensor<T>> Model<T>::bottleneck(const ParameterSet<T>& params,
                                            const std::vector<Tensor<T>>& xs,
                                            BlockMode mode) const {
  switch (config_.variant) {
    case AttentionVariant::aea:
      return attention_block_forward(xs, attention_params(params), mode, config_.batch_aware,
                                     config_.batch_refs);
    case AttentionVariant::self_only:
      return attention_block_forward(xs, attention_params(params), mode, false);
    case AttentionVariant::learned_query: {
      const AttentionParams<T> p = attention_params(params);
      const LearnedQuery<T> lq{params.at("attn.learned_query")};
      std::vector<Tensor<T>> out;
      for (const Tensor<T>& x : xs) {
        const Shape spatial(x.shape().begin(), x.shape().end() - 1);
        if (shape_numel(spatial) != config_.query_size) {
          throw DimensionError("learned_query variant expects " +
                               std::to_string(config_.query_size) +
                               " bottleneck positions, got " + shape_to_string(spatial));
        }
        Tensor<T> y = learned_query_attention(ops::flatten_spatial(x), p, lq);
        out.push_back(ops::add(x, ops::fold_spatial(y, spatial)));
      }
      return out;
    }
    case AttentionVariant::none: {
      const ops::ConvOptions unit{1, ops::Padding::same, config_.boundary};
      std::vector<Tensor<T>> out;
      for (const Tensor<T>& x : xs) {
        Tensor<T> h = x;
        for (const char* name : {"mid.conv1", "mid.conv2"}) {
          h = ops::relu(ops::add_bias(
              ops::conv2d(h, params.at(std::string(name) + ".weight"), unit),
              params.at(std::string(name) + ".bias")));
        }
        out.push_back(h);
      }
      return out;
    }
  }
  throw ConfigError("unhandled attention variant");
}

template <typename T>
std::vector<Tensor<T>> Model<T>::forward(const ParameterSet<T>& params,
                                         const std::vector<Tensor<T>>& batch,
                                         BlockMode mode) const {
  if (batch.empty()) throw UsageError("model forward: empty batch");
  std::vector<Encoded> encoded;
  std::vector<Tensor<T>> bottoms;
  encoded.reserve(batch.size());
  for (const Tensor<T>& x : batch) {
    encoded.push_back(encode(params, x));
    bottoms.push_back(encoded.back().bottom);
  }
  std::vector<Tensor<T>> mids = bottleneck(params, bottoms, mode);
  std::vector<Tensor<T>> out;
  out.reserve(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) out.push_back(decode(params, encoded[i], mids[i]));
  return out;
}

template <typename T>
std::vector<Tensor<T>> Model<T>::forward(const std::vector<Tensor<T>>& batch,
                                         BlockMode mode) const {
  return forward(params_, batch, mode);
}

template <typename T>
Tensor<T> Model<T>::encode_bottleneck(const Tensor<T>& image) const {
  return encode(params_, image).bottom;
}

template <typename T>
Image Model<T>::predict(const Image& image) const {
  return tensor_to_image(forward({image_to_tensor<T>(image)}, BlockMode::predict).front());
}

template <typename T>
template <typename U>
Model<U> Model<T>::cast() const {
  ParameterSet<U> out;
  for (const auto& [name, t] : params_) {
    std::vector<U> v(t.data().begin(), t.data().end());
    out.emplace(name, Tensor<U>(t.shape(), std::move(v)));
  }
  return Model<U>(config_, std::move(out));
}

template <typename T>
std::vector<Image> raw_relevance(const Image& image, const Model<T>& model,
                                 const std::vector<std::size_t>& ref_indices) {
  if (model.config().variant != AttentionVariant::aea) {
    throw UsageError("relevance heatmaps need the aea variant (shared references)");
  }
  const AttentionParams<T> p = model.attention_params(model.parameters());
  for (std::size_t j : ref_indices) {
    if (j >= p.ref_count()) {
      throw UsageError("reference index " + std::to_string(j) + " out of range (r = " +
                       std::to_string(p.ref_count()) + ")");
    }
  }
  const Tensor<T> bottom = model.encode_bottleneck(image_to_tensor<T>(image));
  const std::size_t bh = bottom.dim(0), bw = bottom.dim(1), c = bottom.dim(2);
  const Tensor<T> query = p.query.apply(ops::flatten_spatial(bottom));
  std::vector<Image> maps;
  for (std::size_t j : ref_indices) {
    std::vector<T> row(p.refs.ptr() + j * c, p.refs.ptr() + (j + 1) * c);
    Tensor<T> key = p.key.apply(Tensor<T>({1, c}, std::move(row)));
    Tensor<T> rel = ops::matmul(query, ops::transpose(key));
    Image m(bh, bw);
    for (std::size_t i = 0; i < m.size(); ++i) m.pixels[i] = static_cast<double>(rel[i]);
    maps.push_back(std::move(m));
  }
  return maps;
}

template <typename T>
std::vector<Image> relevance_heatmap(const Image& image, const Model<T>& model,
                                     const std::vector<std::size_t>& ref_indices) {
  std::vector<Image> maps = raw_relevance(image, model, ref_indices);
  for (Image& m : maps) m = normalize_min_max(resize_bilinear(m, image.height, image.width));
  return maps;
}

#define AEANET_INSTANTIATE_MODEL(T)                                                         \
  template std::vector<Tensor<T>> attention_block_forward(                                 \
      const std::vector<Tensor<T>>&, const AttentionParams<T>&, BlockMode, bool, bool);          \
  template class Model<T>;                                                                 \
  template std::vector<Image> raw_relevance(const Image&, const Model<T>&,                 \
                                            const std::vector<std::size_t>&);              \
  template std::vector<Image> relevance_heatmap(const Image&, const Model<T>&,             \
                                                const std::vector<std::size_t>&);

AEANET_INSTANTIATE_MODEL(float)
AEANET_INSTANTIATE_MODEL(double)

template Model<double> Model<float>::cast<double>() const;
template Model<float> Model<double>::cast<float>() const;
template Model<float> Model<float>::cast<float>() const;
template Model<double> Model<double>::cast<double>() const;

}  // namespace aeanet
