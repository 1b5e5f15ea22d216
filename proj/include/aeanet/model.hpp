#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "aeanet/attention.hpp"
#include "aeanet/config.hpp"
#include "aeanet/image.hpp"
#include "aeanet/ops.hpp"
#include "aeanet/tensor.hpp"

namespace aeanet {

enum class AttentionVariant { aea, self_only, learned_query, none };
enum class BlockMode { train, predict };

AttentionVariant parse_variant(const std::string& text);
std::string to_string(AttentionVariant variant);

struct ModelConfig {
  static constexpr std::size_t kDepth = 3;  // two downsamplings, two upsamplings

  std::size_t base_channels = 32;
  std::size_t ref_size = 64;
  AttentionVariant variant = AttentionVariant::aea;
  NormMode norm = NormMode::division;
  // aea only: route half of each training batch through batch-aware attention.
  bool batch_aware = true;
  // Experimental: also stack the shared references into the batch-aware keys.
  bool batch_refs = false;
  // Periodic convolution boundaries (equivariance test mode).
  ops::Boundary boundary = ops::Boundary::zero;
  // learned_query only: number of query rows, which must equal the bottleneck
  // spatial size of every input.
  std::size_t query_size = 0;

  void validate() const;
  KeyValues to_key_values() const;
  // Reads `model.*` keys; absent keys keep their defaults.
  static ModelConfig from_key_values(const KeyValues& kv);

  std::size_t bottleneck_channels() const { return 4 * base_channels; }
};

template <typename T>
using ParameterSet = std::map<std::string, Tensor<T>>;

// Residual attention block over a batch of [h x w x c] maps. In train mode with
// batch_aware set and N >= 2, instances [0, N/2) go through shared-reference
// attention and [N/2, N) through batch-aware attention over their own group;
// a single-instance batch and predict mode use shared-reference attention only.
// Output order matches input order.
template <typename T>
std::vector<Tensor<T>> attention_block_forward(const std::vector<Tensor<T>>& xs,
                                               const AttentionParams<T>& p, BlockMode mode,
                                               bool batch_aware, bool batch_refs = false);

// Indices routed to each branch for a training batch of size n.
struct BranchSplit {
  std::size_t shared_reference = 0;
  std::size_t batch_aware = 0;
};
BranchSplit training_branch_split(std::size_t n);

// Depth-3 U-Net: two 3x3 conv+ReLU layers per level (C, 2C, 4C channels),
// stride-2 conv down, stride-2 transposed conv up, concatenated skips, the
// attention block at the bottom and a 1x1 output conv without activation.
template <typename T>
class Model {
 public:
  Model(ModelConfig config, std::uint64_t seed);
  Model(ModelConfig config, ParameterSet<T> params);

  const ModelConfig& config() const { return config_; }
  const ParameterSet<T>& parameters() const { return params_; }
  void set_parameters(ParameterSet<T> params);
  std::size_t parameter_count() const;

  // batch: [h x w x 1] images, h and w divisible by 4.
  std::vector<Tensor<T>> forward(const std::vector<Tensor<T>>& batch, BlockMode mode) const;
  // Evaluates the network with substitute parameters (e.g. taped copies).
  std::vector<Tensor<T>> forward(const ParameterSet<T>& params,
                                 const std::vector<Tensor<T>>& batch, BlockMode mode) const;

  // Encoder output entering the bottleneck block: [h/4 x w/4 x 4C].
  Tensor<T> encode_bottleneck(const Tensor<T>& image) const;
  AttentionParams<T> attention_params(const ParameterSet<T>& params) const;

  // Predict-mode output for a single image.
  Image predict(const Image& image) const;

  template <typename U>
  Model<U> cast() const;

 private:
  struct Encoded {
    Tensor<T> skip1, skip2, bottom;
  };
  Encoded encode(const ParameterSet<T>& params, const Tensor<T>& x) const;
  Tensor<T> decode(const ParameterSet<T>& params, const Encoded& enc, const Tensor<T>& bottom) const;
  std::vector<Tensor<T>> bottleneck(const ParameterSet<T>& params, const std::vector<Tensor<T>>& xs,
                                    BlockMode mode) const;

  ModelConfig config_;
  ParameterSet<T> params_;
};

// Shapes of every parameter for a configuration, in name order.
std::map<std::string, Shape> parameter_shapes(const ModelConfig& config);

// Relevance of each input pixel to shared-reference rows: bottleneck query
// times the projected reference key, folded to the bottleneck grid, bilinearly
// upsampled to the input size and min-max normalised.
template <typename T>
std::vector<Image> relevance_heatmap(const Image& image, const Model<T>& model,
                                     const std::vector<std::size_t>& ref_indices);
// Same maps before upsampling and normalisation ([h/4 x w/4]).
template <typename T>
std::vector<Image> raw_relevance(const Image& image, const Model<T>& model,
                                 const std::vector<std::size_t>& ref_indices);

extern template class Model<float>;
extern template class Model<double>;

}  // namespace aeanet
