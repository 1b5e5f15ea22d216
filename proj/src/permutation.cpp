#include "aeanet/permutation.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "aeanet/ops.hpp"
#include "aeanet/random.hpp"

namespace aeanet {

PermutationKind parse_permutation_kind(const std::string& text) {
  if (text == "identity") return PermutationKind::identity;
  if (text == "rotation90") return PermutationKind::rotation90;
  if (text == "flip_h") return PermutationKind::flip_h;
  if (text == "flip_v") return PermutationKind::flip_v;
  if (text == "cyclic_shift") return PermutationKind::cyclic_shift;
  if (text == "random") return PermutationKind::random;
  throw ConfigError("unknown permutation kind '" + text + "'");
}

std::string to_string(PermutationKind kind) {
  switch (kind) {
    case PermutationKind::identity: return "identity";
    case PermutationKind::rotation90: return "rotation90";
    case PermutationKind::flip_h: return "flip_h";
    case PermutationKind::flip_v: return "flip_v";
    case PermutationKind::cyclic_shift: return "cyclic_shift";
    case PermutationKind::random: return "random";
  }
  return "unknown";
}

bool PermutationSpec::is_bijection() const {
  if (index_map.size() != size) return false;
  std::vector<bool> seen(size, false);
  for (std::size_t i : index_map) {
    if (i >= size || seen[i]) return false;
    seen[i] = true;
  }
  return true;
}

PermutationSpec PermutationSpec::inverse() const {
  PermutationSpec inv = *this;
  for (std::size_t i = 0; i < size; ++i) inv.index_map[index_map[i]] = i;
  return inv;
}

PermutationSpec random_permutation(std::size_t size, std::uint64_t seed) {
  PermutationSpec spec;
  spec.size = size;
  spec.kind = PermutationKind::random;
  spec.index_map.resize(size);
  std::iota(spec.index_map.begin(), spec.index_map.end(), std::size_t{0});
  Rng rng(seed);
  for (std::size_t i = size; i > 1; --i) {
    std::swap(spec.index_map[i - 1], spec.index_map[rng.index(i)]);
  }
  return spec;
}

PermutationSpec make_permutation(PermutationKind kind, std::size_t width, std::size_t height,
                                 const PermutationOptions& options) {
  if (width == 0 || height == 0) throw ConfigError("permutation grid must be non-empty");
  const std::size_t s = width * height;
  if (kind == PermutationKind::random) {
    PermutationSpec spec = random_permutation(s, options.seed);
    spec.grid = Grid{width, height};
    return spec;
  }
  if (kind == PermutationKind::rotation90 && width != height) {
    throw ConfigError("rotation90 requires a square grid, got " + std::to_string(width) + "x" +
                      std::to_string(height));
  }
  PermutationSpec spec;
  spec.size = s;
  spec.kind = kind;
  spec.grid = Grid{width, height};
  spec.index_map.resize(s);
  const auto w = static_cast<std::ptrdiff_t>(width);
  const auto h = static_cast<std::ptrdiff_t>(height);
  for (std::ptrdiff_t y = 0; y < h; ++y) {
    for (std::ptrdiff_t x = 0; x < w; ++x) {
      std::ptrdiff_t sy = y, sx = x;
      switch (kind) {
        case PermutationKind::identity: break;
        case PermutationKind::rotation90:  // counter-clockwise
          sy = x;
          sx = w - 1 - y;
          break;
        case PermutationKind::flip_h: sx = w - 1 - x; break;
        case PermutationKind::flip_v: sy = h - 1 - y; break;
        case PermutationKind::cyclic_shift:
          sy = ((y - options.dy) % h + h) % h;
          sx = ((x - options.dx) % w + w) % w;
          break;
        case PermutationKind::random: break;
      }
      spec.index_map[static_cast<std::size_t>(y * w + x)] = static_cast<std::size_t>(sy * w + sx);
    }
  }
  return spec;
}

template <typename T>
Tensor<T> apply_permutation(const PermutationSpec& spec, const Tensor<T>& x) {
  if (x.rank() == 0 || x.dim(0) != spec.size) {
    throw DimensionError("apply_permutation: permutation of " + std::to_string(spec.size) +
                         " positions applied to " + shape_to_string(x.shape()));
  }
  const std::size_t row = spec.size ? x.numel() / spec.size : 0;
  std::vector<T> out(x.numel());
  for (std::size_t i = 0; i < spec.size; ++i) {
    std::copy(x.ptr() + spec.index_map[i] * row, x.ptr() + (spec.index_map[i] + 1) * row,
              out.data() + i * row);
  }
  return Tensor<T>(x.shape(), std::move(out));
}

template <typename T>
Tensor<T> permutation_matrix(const PermutationSpec& spec) {
  std::vector<T> m(spec.size * spec.size, T(0));
  for (std::size_t i = 0; i < spec.size; ++i) m[i * spec.size + spec.index_map[i]] = T(1);
  return Tensor<T>({spec.size, spec.size}, std::move(m));
}

template <typename T>
Tensor<T> block_permutation_matrix(const PermutationSpec& spec, std::size_t ref_rows) {
  const std::size_t n = ref_rows + spec.size;
  std::vector<T> m(n * n, T(0));
  for (std::size_t i = 0; i < ref_rows; ++i) m[i * n + i] = T(1);
  for (std::size_t i = 0; i < spec.size; ++i) {
    m[(ref_rows + i) * n + ref_rows + spec.index_map[i]] = T(1);
  }
  return Tensor<T>({n, n}, std::move(m));
}

template <typename T>
PropertyReport check_equivariance(const SpatialOperator<T>& op, const Tensor<T>& x,
                                  const PermutationSpec& spec, double tol) {
  Tensor<T> base = op(x);
  if (base.rank() == 0 || base.dim(0) != x.dim(0)) {
    throw UsageError("check_equivariance: operator changes the spatial size (" +
                     shape_to_string(x.shape()) + " -> " + shape_to_string(base.shape()) +
                     "); equivariance is undefined");
  }
  Tensor<T> permuted = op(apply_permutation(spec, x));
  PropertyReport r;
  r.max_abs_error = static_cast<double>(ops::max_abs_diff(permuted, apply_permutation(spec, base)));
  r.pass = r.max_abs_error <= tol;
  return r;
}

template <typename T>
PropertyReport check_invariance(const SpatialOperator<T>& op, const Tensor<T>& x,
                                const PermutationSpec& spec, double tol) {
  Tensor<T> base = op(x);
  Tensor<T> permuted = op(apply_permutation(spec, x));
  if (base.shape() != permuted.shape()) {
    throw UsageError("check_invariance: output shapes differ (" + shape_to_string(base.shape()) +
                     " vs " + shape_to_string(permuted.shape()) + ")");
  }
  PropertyReport r;
  r.max_abs_error = static_cast<double>(ops::max_abs_diff(permuted, base));
  r.pass = r.max_abs_error <= tol;
  return r;
}

#define AEANET_INSTANTIATE_PERMUTATION(T)                                                    \
  template Tensor<T> apply_permutation(const PermutationSpec&, const Tensor<T>&);           \
  template Tensor<T> permutation_matrix(const PermutationSpec&);                            \
  template Tensor<T> block_permutation_matrix(const PermutationSpec&, std::size_t);         \
  template PropertyReport check_equivariance(const SpatialOperator<T>&, const Tensor<T>&,   \
                                             const PermutationSpec&, double);               \
  template PropertyReport check_invariance(const SpatialOperator<T>&, const Tensor<T>&,     \
                                           const PermutationSpec&, double);

AEANET_INSTANTIATE_PERMUTATION(float)
AEANET_INSTANTIATE_PERMUTATION(double)

}  // namespace aeanet
