#pragma once

#include <cstddef>
#include <vector>

#include "aeanet/tensor.hpp"

// Differentiable tensor operations. Each op records itself on the tape of its
// taped inputs (if any) and otherwise runs as a plain forward computation.
namespace aeanet::ops {

enum class Padding { same, valid };
enum class Boundary { zero, periodic };

struct ConvOptions {
  std::size_t stride = 1;
  Padding padding = Padding::same;
  Boundary boundary = Boundary::zero;
};

// Index arithmetic shared by conv2d and conv2d_transpose. `in_*` always
// describes the conv2d input side (the transposed conv's output side).
struct ConvGeometry {
  std::size_t in_h = 0, in_w = 0, in_c = 0;
  std::size_t k_h = 0, k_w = 0, out_c = 0;
  std::size_t out_h = 0, out_w = 0;
  std::size_t stride = 1;
  std::size_t pad_top = 0, pad_left = 0;
  Boundary boundary = Boundary::zero;

  static ConvGeometry for_conv(std::size_t in_h, std::size_t in_w, std::size_t in_c,
                               const Shape& kernel, const ConvOptions& opt);
  // Geometry of the conv2d whose adjoint maps an out_h x out_w map back up.
  static ConvGeometry for_transpose(std::size_t out_h, std::size_t out_w, std::size_t out_c,
                                    const Shape& kernel, const ConvOptions& opt);
  std::size_t patch_size() const { return k_h * k_w * in_c; }
};

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> transpose(const Tensor<T>& a);

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> scale(const Tensor<T>& a, T factor);
// Adds a length-c vector to every slice along the last axis.
template <typename T>
Tensor<T> add_bias(const Tensor<T>& x, const Tensor<T>& bias);
template <typename T>
Tensor<T> relu(const Tensor<T>& x);

// Sign masks of the relu calls made on this thread while a scope is active, in
// call order.
struct ActivationPattern {
  std::vector<std::vector<bool>> masks;
};

// record: every relu appends its mask. replay: every relu applies the next
// recorded mask instead of its own sign test, so the network is evaluated on
// one fixed activation region; crossed() reports whether any input landed on
// the other side of a kink. Scopes nest by shadowing.
class ActivationScope {
 public:
  enum class Mode { record, replay };
  ActivationScope(ActivationPattern& pattern, Mode mode);
  ~ActivationScope();
  ActivationScope(const ActivationScope&) = delete;
  ActivationScope& operator=(const ActivationScope&) = delete;

  bool crossed() const { return crossed_; }
  // Called by relu; returns the mask to use for an input of size n.
  const std::vector<bool>& next(std::vector<bool> natural);

 private:
  ActivationPattern& pattern_;
  Mode mode_;
  std::size_t cursor_ = 0;
  bool crossed_ = false;
  ActivationScope* previous_;
};
template <typename T>
Tensor<T> sum(const Tensor<T>& x);
template <typename T>
Tensor<T> mean(const Tensor<T>& x);
template <typename T>
Tensor<T> softmax_rows(const Tensor<T>& x);

template <typename T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape);
// Stacks rank-2 tensors with equal column counts along axis 0.
template <typename T>
Tensor<T> concat_rows(const std::vector<Tensor<T>>& parts);
// Concatenates along the last axis; all other extents must agree.
template <typename T>
Tensor<T> concat_last(const Tensor<T>& a, const Tensor<T>& b);

// [s1 x ... x sk x c] -> [s x c] with s = s1*...*sk in row-major order.
template <typename T>
Tensor<T> flatten_spatial(const Tensor<T>& x);
// [s x c] -> spatial_shape + [c].
template <typename T>
Tensor<T> fold_spatial(const Tensor<T>& x, const Shape& spatial_shape);

// x: [h x w x cin], kernel: [kh x kw x cin x cout].
template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& kernel, const ConvOptions& opt = {});
// Adjoint of conv2d with the same kernel. x: [h x w x cout] -> [H x W x cin]
// with H = h*stride (same) or (h-1)*stride+kh (valid).
template <typename T>
Tensor<T> conv2d_transpose(const Tensor<T>& x, const Tensor<T>& kernel,
                           const ConvOptions& opt = {});

// Non-differentiable helper: max |a - b| over matching shapes.
template <typename T>
T max_abs_diff(const Tensor<T>& a, const Tensor<T>& b);

}  // namespace aeanet::ops
