#include "aeanet/ops.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <string>

namespace aeanet::ops {
namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using ConstMap = Eigen::Map<const RowMat<T>>;
template <typename T>
using MutMap = Eigen::Map<RowMat<T>>;

// out(m x n) = op(a) * op(b), where op transposes when requested. `a` is stored
// as (m x k) or (k x m) row-major, likewise for `b`.
template <typename T>
std::vector<T> gemm(const T* a, bool trans_a, const T* b, bool trans_b, std::size_t m,
                    std::size_t k, std::size_t n) {
  std::vector<T> out(m * n);
  auto em = static_cast<Eigen::Index>(m);
  auto ek = static_cast<Eigen::Index>(k);
  auto en = static_cast<Eigen::Index>(n);
  MutMap<T> c(out.data(), em, en);
  if (m == 0 || n == 0) return out;
  if (k == 0) {
    c.setZero();
    return out;
  }
  if (!trans_a && !trans_b) {
    c.noalias() = ConstMap<T>(a, em, ek) * ConstMap<T>(b, ek, en);
  } else if (!trans_a && trans_b) {
    c.noalias() = ConstMap<T>(a, em, ek) * ConstMap<T>(b, en, ek).transpose();
  } else if (trans_a && !trans_b) {
    c.noalias() = ConstMap<T>(a, ek, em).transpose() * ConstMap<T>(b, ek, en);
  } else {
    c.noalias() = ConstMap<T>(a, ek, em).transpose() * ConstMap<T>(b, en, ek).transpose();
  }
  return out;
}

void require_same_shape(const Shape& a, const Shape& b, const char* op) {
  if (a != b) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_to_string(a) + " vs " +
                         shape_to_string(b));
  }
}

void require_rank(const Shape& s, std::size_t rank, const char* op) {
  if (s.size() != rank) {
    throw DimensionError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
                         shape_to_string(s));
  }
}

template <typename T>
Tensor<T> finish(Tensor<T> out, std::initializer_list<const Tensor<T>*> inputs,
                 typename GradTape<T>::BackwardFn fn) {
  GradTape<T>* tape = common_tape<T>(inputs);
  if (!tape) return out;
  return tape->record(out, inputs, std::move(fn));
}

// Maps a padded coordinate onto the input grid; returns false for zero padding
// outside the grid.
inline bool resolve(std::ptrdiff_t& idx, std::size_t extent, Boundary boundary) {
  auto n = static_cast<std::ptrdiff_t>(extent);
  if (idx >= 0 && idx < n) return true;
  if (boundary == Boundary::zero) return false;
  idx = ((idx % n) + n) % n;
  return true;
}

template <typename T>
std::vector<T> im2col(const T* x, const ConvGeometry& g) {
  const std::size_t patch = g.patch_size();
  std::vector<T> cols(g.out_h * g.out_w * patch, T(0));
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t oy = 0; oy < static_cast<std::ptrdiff_t>(g.out_h); ++oy) {
    for (std::size_t ox = 0; ox < g.out_w; ++ox) {
      T* row = cols.data() + (static_cast<std::size_t>(oy) * g.out_w + ox) * patch;
      for (std::size_t ky = 0; ky < g.k_h; ++ky) {
        std::ptrdiff_t iy = oy * static_cast<std::ptrdiff_t>(g.stride) +
                            static_cast<std::ptrdiff_t>(ky) -
                            static_cast<std::ptrdiff_t>(g.pad_top);
        if (!resolve(iy, g.in_h, g.boundary)) continue;
        for (std::size_t kx = 0; kx < g.k_w; ++kx) {
          std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * g.stride + kx) -
                              static_cast<std::ptrdiff_t>(g.pad_left);
          if (!resolve(ix, g.in_w, g.boundary)) continue;
          const T* src = x + (static_cast<std::size_t>(iy) * g.in_w + static_cast<std::size_t>(ix)) * g.in_c;
          std::copy(src, src + g.in_c, row + (ky * g.k_w + kx) * g.in_c);
        }
      }
    }
  }
  return cols;
}

// Adjoint of im2col: scatter-adds patch rows back onto the input grid.
template <typename T>
std::vector<T> col2im(const T* cols, const ConvGeometry& g) {
  const std::size_t patch = g.patch_size();
  std::vector<T> x(g.in_h * g.in_w * g.in_c, T(0));
  for (std::size_t oy = 0; oy < g.out_h; ++oy) {
    for (std::size_t ox = 0; ox < g.out_w; ++ox) {
      const T* row = cols + (oy * g.out_w + ox) * patch;
      for (std::size_t ky = 0; ky < g.k_h; ++ky) {
        std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * g.stride + ky) -
                            static_cast<std::ptrdiff_t>(g.pad_top);
        if (!resolve(iy, g.in_h, g.boundary)) continue;
        for (std::size_t kx = 0; kx < g.k_w; ++kx) {
          std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * g.stride + kx) -
                              static_cast<std::ptrdiff_t>(g.pad_left);
          if (!resolve(ix, g.in_w, g.boundary)) continue;
          T* dst = x.data() + (static_cast<std::size_t>(iy) * g.in_w + static_cast<std::size_t>(ix)) * g.in_c;
          const T* src = row + (ky * g.k_w + kx) * g.in_c;
          for (std::size_t c = 0; c < g.in_c; ++c) dst[c] += src[c];
        }
      }
    }
  }
  return x;
}

}  // namespace

ConvGeometry ConvGeometry::for_conv(std::size_t in_h, std::size_t in_w, std::size_t in_c,
                                    const Shape& kernel, const ConvOptions& opt) {
  if (opt.stride == 0) throw ConfigError("conv2d: stride must be positive");
  require_rank(kernel, 4, "conv2d kernel");
  if (kernel[2] != in_c) {
    throw DimensionError("conv2d: kernel expects " + std::to_string(kernel[2]) +
                         " input channels, got " + std::to_string(in_c));
  }
  ConvGeometry g;
  g.in_h = in_h;
  g.in_w = in_w;
  g.in_c = in_c;
  g.k_h = kernel[0];
  g.k_w = kernel[1];
  g.out_c = kernel[3];
  g.stride = opt.stride;
  g.boundary = opt.boundary;
  if (g.k_h == 0 || g.k_w == 0) throw DimensionError("conv2d: empty kernel");
  if (opt.padding == Padding::same) {
    if (in_h == 0 || in_w == 0) throw DimensionError("conv2d: empty input");
    g.out_h = (in_h + opt.stride - 1) / opt.stride;
    g.out_w = (in_w + opt.stride - 1) / opt.stride;
    std::size_t need_h = (g.out_h - 1) * opt.stride + g.k_h;
    std::size_t need_w = (g.out_w - 1) * opt.stride + g.k_w;
    g.pad_top = need_h > in_h ? (need_h - in_h) / 2 : 0;
    g.pad_left = need_w > in_w ? (need_w - in_w) / 2 : 0;
  } else {
    if (g.k_h > in_h || g.k_w > in_w) {
      throw DimensionError("conv2d: kernel " + shape_to_string(kernel) +
                           " larger than valid input " + std::to_string(in_h) + "x" +
                           std::to_string(in_w));
    }
    g.out_h = (in_h - g.k_h) / opt.stride + 1;
    g.out_w = (in_w - g.k_w) / opt.stride + 1;
  }
  return g;
}

ConvGeometry ConvGeometry::for_transpose(std::size_t out_h, std::size_t out_w,
                                         std::size_t out_c, const Shape& kernel,
                                         const ConvOptions& opt) {
  if (opt.stride == 0) throw ConfigError("conv2d_transpose: stride must be positive");
  require_rank(kernel, 4, "conv2d_transpose kernel");
  if (kernel[3] != out_c) {
    throw DimensionError("conv2d_transpose: kernel expects " + std::to_string(kernel[3]) +
                         " input channels, got " + std::to_string(out_c));
  }
  if (out_h == 0 || out_w == 0) throw DimensionError("conv2d_transpose: empty input");
  std::size_t in_h = 0, in_w = 0;
  if (opt.padding == Padding::same) {
    in_h = out_h * opt.stride;
    in_w = out_w * opt.stride;
  } else {
    in_h = (out_h - 1) * opt.stride + kernel[0];
    in_w = (out_w - 1) * opt.stride + kernel[1];
  }
  ConvGeometry g = for_conv(in_h, in_w, kernel[2], kernel, opt);
  if (g.out_h != out_h || g.out_w != out_w) {
    throw DimensionError("conv2d_transpose: inconsistent geometry");
  }
  return g;
}

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  require_rank(a.shape(), 2, "matmul");
  require_rank(b.shape(), 2, "matmul");
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k) {
    throw DimensionError("matmul: inner extents differ " + shape_to_string(a.shape()) + " x " +
                         shape_to_string(b.shape()));
  }
  Tensor<T> out({m, n}, gemm(a.ptr(), false, b.ptr(), false, m, k, n));
  return finish<T>(out, {&a, &b},
                   [a = a.detach(), b = b.detach(), m, k, n](std::span<const T> g,
                                                             const std::vector<bool>& needs) {
                     std::vector<std::vector<T>> r(2);
                     if (needs[0]) r[0] = gemm(g.data(), false, b.ptr(), true, m, n, k);
                     if (needs[1]) r[1] = gemm(a.ptr(), true, g.data(), false, k, m, n);
                     return r;
                   });
}

template <typename T>
Tensor<T> transpose(const Tensor<T>& a) {
  require_rank(a.shape(), 2, "transpose");
  const std::size_t m = a.dim(0), n = a.dim(1);
  auto flip = [](const T* src, std::size_t rows, std::size_t cols) {
    std::vector<T> out(rows * cols);
    for (std::size_t i = 0; i < rows; ++i)
      for (std::size_t j = 0; j < cols; ++j) out[j * rows + i] = src[i * cols + j];
    return out;
  };
  Tensor<T> out({n, m}, flip(a.ptr(), m, n));
  return finish<T>(out, {&a}, [m, n, flip](std::span<const T> g, const std::vector<bool>&) {
    return std::vector<std::vector<T>>{flip(g.data(), n, m)};
  });
}

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a.shape(), b.shape(), "add");
  std::vector<T> v(a.numel());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = a[i] + b[i];
  return finish<T>(Tensor<T>(a.shape(), std::move(v)), {&a, &b},
                   [](std::span<const T> g, const std::vector<bool>& needs) {
                     std::vector<std::vector<T>> r(2);
                     if (needs[0]) r[0].assign(g.begin(), g.end());
                     if (needs[1]) r[1].assign(g.begin(), g.end());
                     return r;
                   });
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a.shape(), b.shape(), "sub");
  std::vector<T> v(a.numel());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = a[i] - b[i];
  return finish<T>(Tensor<T>(a.shape(), std::move(v)), {&a, &b},
                   [](std::span<const T> g, const std::vector<bool>& needs) {
                     std::vector<std::vector<T>> r(2);
                     if (needs[0]) r[0].assign(g.begin(), g.end());
                     if (needs[1]) {
                       r[1].resize(g.size());
                       for (std::size_t i = 0; i < g.size(); ++i) r[1][i] = -g[i];
                     }
                     return r;
                   });
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a.shape(), b.shape(), "mul");
  std::vector<T> v(a.numel());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = a[i] * b[i];
  return finish<T>(Tensor<T>(a.shape(), std::move(v)), {&a, &b},
                   [a = a.detach(), b = b.detach()](std::span<const T> g,
                                                    const std::vector<bool>& needs) {
                     std::vector<std::vector<T>> r(2);
                     if (needs[0]) {
                       r[0].resize(g.size());
                       for (std::size_t i = 0; i < g.size(); ++i) r[0][i] = g[i] * b[i];
                     }
                     if (needs[1]) {
                       r[1].resize(g.size());
                       for (std::size_t i = 0; i < g.size(); ++i) r[1][i] = g[i] * a[i];
                     }
                     return r;
                   });
}

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T factor) {
  std::vector<T> v(a.numel());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = a[i] * factor;
  return finish<T>(Tensor<T>(a.shape(), std::move(v)), {&a},
                   [factor](std::span<const T> g, const std::vector<bool>&) {
                     std::vector<T> d(g.size());
                     for (std::size_t i = 0; i < g.size(); ++i) d[i] = g[i] * factor;
                     return std::vector<std::vector<T>>{std::move(d)};
                   });
}

template <typename T>
Tensor<T> add_bias(const Tensor<T>& x, const Tensor<T>& bias) {
  require_rank(bias.shape(), 1, "add_bias");
  const std::size_t c = bias.dim(0);
  if (x.rank() == 0 || x.shape().back() != c) {
    throw DimensionError("add_bias: bias " + shape_to_string(bias.shape()) +
                         " does not match " + shape_to_string(x.shape()));
  }
  std::vector<T> v(x.numel());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = x[i] + bias[i % c];
  return finish<T>(Tensor<T>(x.shape(), std::move(v)), {&x, &bias},
                   [c](std::span<const T> g, const std::vector<bool>& needs) {
                     std::vector<std::vector<T>> r(2);
                     if (needs[0]) r[0].assign(g.begin(), g.end());
                     if (needs[1]) {
                       r[1].assign(c, T(0));
                       for (std::size_t i = 0; i < g.size(); ++i) r[1][i % c] += g[i];
                     }
                     return r;
                   });
}

namespace {
thread_local ActivationScope* active_scope = nullptr;
}

ActivationScope::ActivationScope(ActivationPattern& pattern, Mode mode)
    : pattern_(pattern), mode_(mode), previous_(active_scope) {
  if (mode_ == Mode::record) pattern_.masks.clear();
  active_scope = this;
}

ActivationScope::~ActivationScope() { active_scope = previous_; }

const std::vector<bool>& ActivationScope::next(std::vector<bool> natural) {
  if (mode_ == Mode::record) {
    pattern_.masks.push_back(std::move(natural));
    return pattern_.masks.back();
  }
  if (cursor_ >= pattern_.masks.size() || pattern_.masks[cursor_].size() != natural.size()) {
    throw UsageError("activation replay: call sequence differs from the recorded one");
  }
  const std::vector<bool>& mask = pattern_.masks[cursor_++];
  if (mask != natural) crossed_ = true;
  return mask;
}

template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
  std::vector<bool> mask(x.numel());
  for (std::size_t i = 0; i < mask.size(); ++i) mask[i] = x[i] > T(0);
  if (active_scope) mask = active_scope->next(std::move(mask));
  std::vector<T> v(x.numel());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = mask[i] ? x[i] : T(0);
  return finish<T>(Tensor<T>(x.shape(), std::move(v)), {&x},
                   [mask = std::move(mask)](std::span<const T> g, const std::vector<bool>&) {
                     std::vector<T> d(g.size());
                     for (std::size_t i = 0; i < g.size(); ++i) d[i] = mask[i] ? g[i] : T(0);
                     return std::vector<std::vector<T>>{std::move(d)};
                   });
}

template <typename T>
Tensor<T> sum(const Tensor<T>& x) {
  T s = T(0);
  for (T v : x.data()) s += v;
  const std::size_t n = x.numel();
  return finish<T>(Tensor<T>::scalar(s), {&x},
                   [n](std::span<const T> g, const std::vector<bool>&) {
                     return std::vector<std::vector<T>>{std::vector<T>(n, g[0])};
                   });
}

template <typename T>
Tensor<T> mean(const Tensor<T>& x) {
  if (x.numel() == 0) throw DimensionError("mean of empty tensor");
  return scale(sum(x), T(1) / static_cast<T>(x.numel()));
}

template <typename T>
Tensor<T> softmax_rows(const Tensor<T>& x) {
  require_rank(x.shape(), 2, "softmax_rows");
  const std::size_t rows = x.dim(0), cols = x.dim(1);
  std::vector<T> y(x.numel());
  for (std::size_t i = 0; i < rows; ++i) {
    const T* in = x.ptr() + i * cols;
    T* out = y.data() + i * cols;
    T mx = cols ? *std::max_element(in, in + cols) : T(0);
    T total = T(0);
    for (std::size_t j = 0; j < cols; ++j) {
      out[j] = std::exp(in[j] - mx);
      total += out[j];
    }
    for (std::size_t j = 0; j < cols; ++j) out[j] /= total;
  }
  Tensor<T> out(x.shape(), std::move(y));
  return finish<T>(out, {&x},
                   [y = out.detach(), rows, cols](std::span<const T> g, const std::vector<bool>&) {
                     std::vector<T> d(g.size());
                     for (std::size_t i = 0; i < rows; ++i) {
                       T dot = T(0);
                       for (std::size_t j = 0; j < cols; ++j) dot += g[i * cols + j] * y[i * cols + j];
                       for (std::size_t j = 0; j < cols; ++j)
                         d[i * cols + j] = y[i * cols + j] * (g[i * cols + j] - dot);
                     }
                     return std::vector<std::vector<T>>{std::move(d)};
                   });
}

template <typename T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape) {
  Tensor<T> out = x.reshaped(std::move(shape));
  return finish<T>(out, {&x}, [](std::span<const T> g, const std::vector<bool>&) {
    return std::vector<std::vector<T>>{std::vector<T>(g.begin(), g.end())};
  });
}

template <typename T>
Tensor<T> concat_rows(const std::vector<Tensor<T>>& parts) {
  if (parts.empty()) throw DimensionError("concat_rows: no inputs");
  const std::size_t cols = parts.front().rank() == 2 ? parts.front().dim(1) : 0;
  std::size_t rows = 0;
  std::vector<std::size_t> offsets;
  std::vector<const Tensor<T>*> inputs;
  for (const Tensor<T>& p : parts) {
    require_rank(p.shape(), 2, "concat_rows");
    if (p.dim(1) != cols) {
      throw DimensionError("concat_rows: column mismatch " + shape_to_string(p.shape()));
    }
    offsets.push_back(rows * cols);
    rows += p.dim(0);
    inputs.push_back(&p);
  }
  std::vector<T> v;
  v.reserve(rows * cols);
  for (const Tensor<T>& p : parts) v.insert(v.end(), p.data().begin(), p.data().end());
  Tensor<T> out({rows, cols}, std::move(v));
  GradTape<T>* tape = common_tape<T>(inputs);
  if (!tape) return out;
  std::vector<std::size_t> sizes;
  for (const Tensor<T>& p : parts) sizes.push_back(p.numel());
  return tape->record(out, inputs,
                      [offsets, sizes](std::span<const T> g, const std::vector<bool>& needs) {
                        std::vector<std::vector<T>> r(offsets.size());
                        for (std::size_t i = 0; i < offsets.size(); ++i) {
                          if (!needs[i]) continue;
                          r[i].assign(g.begin() + static_cast<std::ptrdiff_t>(offsets[i]),
                                      g.begin() + static_cast<std::ptrdiff_t>(offsets[i] + sizes[i]));
                        }
                        return r;
                      });
}

template <typename T>
Tensor<T> concat_last(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.rank() == 0 || a.rank() != b.rank() ||
      !std::equal(a.shape().begin(), a.shape().end() - 1, b.shape().begin())) {
    throw DimensionError("concat_last: incompatible " + shape_to_string(a.shape()) + " and " +
                         shape_to_string(b.shape()));
  }
  const std::size_t ca = a.shape().back(), cb = b.shape().back();
  const std::size_t outer = ca ? a.numel() / ca : b.numel() / std::max<std::size_t>(cb, 1);
  std::vector<T> v(outer * (ca + cb));
  for (std::size_t i = 0; i < outer; ++i) {
    std::copy(a.ptr() + i * ca, a.ptr() + (i + 1) * ca, v.data() + i * (ca + cb));
    std::copy(b.ptr() + i * cb, b.ptr() + (i + 1) * cb, v.data() + i * (ca + cb) + ca);
  }
  Shape shape = a.shape();
  shape.back() = ca + cb;
  return finish<T>(Tensor<T>(shape, std::move(v)), {&a, &b},
                   [outer, ca, cb](std::span<const T> g, const std::vector<bool>& needs) {
                     std::vector<std::vector<T>> r(2);
                     if (needs[0]) r[0].resize(outer * ca);
                     if (needs[1]) r[1].resize(outer * cb);
                     for (std::size_t i = 0; i < outer; ++i) {
                       const T* row = g.data() + i * (ca + cb);
                       if (needs[0]) std::copy(row, row + ca, r[0].data() + i * ca);
                       if (needs[1]) std::copy(row + ca, row + ca + cb, r[1].data() + i * cb);
                     }
                     return r;
                   });
}

template <typename T>
Tensor<T> flatten_spatial(const Tensor<T>& x) {
  if (x.rank() < 2) {
    throw DimensionError("flatten_spatial: expected [spatial... x c], got " +
                         shape_to_string(x.shape()));
  }
  const std::size_t c = x.shape().back();
  const std::size_t s = c ? x.numel() / c : shape_numel(Shape(x.shape().begin(), x.shape().end() - 1));
  return reshape(x, {s, c});
}

template <typename T>
Tensor<T> fold_spatial(const Tensor<T>& x, const Shape& spatial_shape) {
  require_rank(x.shape(), 2, "fold_spatial");
  if (shape_numel(spatial_shape) != x.dim(0)) {
    throw DimensionError("fold_spatial: " + shape_to_string(spatial_shape) +
                         " does not unfold to " + std::to_string(x.dim(0)) + " positions");
  }
  Shape shape = spatial_shape;
  shape.push_back(x.dim(1));
  return reshape(x, std::move(shape));
}

template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& kernel, const ConvOptions& opt) {
  require_rank(x.shape(), 3, "conv2d input");
  const ConvGeometry g = ConvGeometry::for_conv(x.dim(0), x.dim(1), x.dim(2), kernel.shape(), opt);
  const std::size_t rows = g.out_h * g.out_w, patch = g.patch_size();
  std::vector<T> cols = im2col(x.ptr(), g);
  Tensor<T> out({g.out_h, g.out_w, g.out_c}, gemm(cols.data(), false, kernel.ptr(), false, rows, patch, g.out_c));
  return finish<T>(out, {&x, &kernel},
                   [x = x.detach(), kernel = kernel.detach(), g, rows, patch](
                       std::span<const T> grad, const std::vector<bool>& needs) {
                     std::vector<std::vector<T>> r(2);
                     if (needs[0]) {
                       std::vector<T> gcols = gemm(grad.data(), false, kernel.ptr(), true, rows, g.out_c, patch);
                       r[0] = col2im(gcols.data(), g);
                     }
                     if (needs[1]) {
                       std::vector<T> cols = im2col(x.ptr(), g);
                       r[1] = gemm(cols.data(), true, grad.data(), false, patch, rows, g.out_c);
                     }
                     return r;
                   });
}

template <typename T>
Tensor<T> conv2d_transpose(const Tensor<T>& x, const Tensor<T>& kernel, const ConvOptions& opt) {
  require_rank(x.shape(), 3, "conv2d_transpose input");
  const ConvGeometry g =
      ConvGeometry::for_transpose(x.dim(0), x.dim(1), x.dim(2), kernel.shape(), opt);
  const std::size_t rows = g.out_h * g.out_w, patch = g.patch_size();
  std::vector<T> cols = gemm(x.ptr(), false, kernel.ptr(), true, rows, g.out_c, patch);
  Tensor<T> out({g.in_h, g.in_w, g.in_c}, col2im(cols.data(), g));
  return finish<T>(out, {&x, &kernel},
                   [x = x.detach(), kernel = kernel.detach(), g, rows, patch](
                       std::span<const T> grad, const std::vector<bool>& needs) {
                     std::vector<std::vector<T>> r(2);
                     std::vector<T> gcols = im2col(grad.data(), g);
                     if (needs[0]) r[0] = gemm(gcols.data(), false, kernel.ptr(), false, rows, patch, g.out_c);
                     if (needs[1]) r[1] = gemm(gcols.data(), true, x.ptr(), false, patch, rows, g.out_c);
                     return r;
                   });
}

template <typename T>
T max_abs_diff(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a.shape(), b.shape(), "max_abs_diff");
  T m = T(0);
  for (std::size_t i = 0; i < a.numel(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

#define AEANET_INSTANTIATE_OPS(T)                                                          \
  template Tensor<T> matmul(const Tensor<T>&, const Tensor<T>&);                          \
  template Tensor<T> transpose(const Tensor<T>&);                                         \
  template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);                             \
  template Tensor<T> sub(const Tensor<T>&, const Tensor<T>&);                             \
  template Tensor<T> mul(const Tensor<T>&, const Tensor<T>&);                             \
  template Tensor<T> scale(const Tensor<T>&, T);                                          \
  template Tensor<T> add_bias(const Tensor<T>&, const Tensor<T>&);                        \
  template Tensor<T> relu(const Tensor<T>&);                                              \
  template Tensor<T> sum(const Tensor<T>&);                                               \
  template Tensor<T> mean(const Tensor<T>&);                                              \
  template Tensor<T> softmax_rows(const Tensor<T>&);                                      \
  template Tensor<T> reshape(const Tensor<T>&, Shape);                                    \
  template Tensor<T> concat_rows(const std::vector<Tensor<T>>&);                          \
  template Tensor<T> concat_last(const Tensor<T>&, const Tensor<T>&);                     \
  template Tensor<T> flatten_spatial(const Tensor<T>&);                                   \
  template Tensor<T> fold_spatial(const Tensor<T>&, const Shape&);                        \
  template Tensor<T> conv2d(const Tensor<T>&, const Tensor<T>&, const ConvOptions&);      \
  template Tensor<T> conv2d_transpose(const Tensor<T>&, const Tensor<T>&, const ConvOptions&); \
  template T max_abs_diff(const Tensor<T>&, const Tensor<T>&);

AEANET_INSTANTIATE_OPS(float)
AEANET_INSTANTIATE_OPS(double)

}  // namespace aeanet::ops
