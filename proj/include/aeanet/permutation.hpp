#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "aeanet/tensor.hpp"

namespace aeanet {

enum class PermutationKind { identity, rotation90, flip_h, flip_v, cyclic_shift, random };

PermutationKind parse_permutation_kind(const std::string& text);
std::string to_string(PermutationKind kind);

struct Grid {
  std::size_t width = 0;
  std::size_t height = 0;
};

// A spatial permutation pi of `size` positions. Applying it maps row i of the
// output to row index_map[i] of the input, i.e. T(X) = P X with
// P = [e_pi(1), ..., e_pi(s)]^T.
struct PermutationSpec {
  std::size_t size = 0;
  std::vector<std::size_t> index_map;
  PermutationKind kind = PermutationKind::identity;
  std::optional<Grid> grid;

  bool is_bijection() const;
  PermutationSpec inverse() const;
};

struct PermutationOptions {
  // cyclic_shift offsets (wrap around).
  std::ptrdiff_t dx = 1;
  std::ptrdiff_t dy = 0;
  // random kind: Fisher-Yates seed.
  std::uint64_t seed = 0;
};

// Builds the named transform on a row-major flattened grid of `height` rows
// and `width` columns (position y * width + x).
PermutationSpec make_permutation(PermutationKind kind, std::size_t width, std::size_t height,
                                 const PermutationOptions& options = {});
// Uniformly random permutation of s positions.
PermutationSpec random_permutation(std::size_t size, std::uint64_t seed);

// Row i of the result is row pi(i) of x; x is [s x c] (or [s]).
template <typename T>
Tensor<T> apply_permutation(const PermutationSpec& spec, const Tensor<T>& x);

// Dense P_pi.
template <typename T>
Tensor<T> permutation_matrix(const PermutationSpec& spec);

// [[I_r, 0], [0, P_pi]] acting on references stacked above the permuted rows.
template <typename T>
Tensor<T> block_permutation_matrix(const PermutationSpec& spec, std::size_t ref_rows);

struct PropertyReport {
  double max_abs_error = 0;
  bool pass = false;
};

template <typename T>
using SpatialOperator = std::function<Tensor<T>(const Tensor<T>&)>;

// ||op(T(x)) - T(op(x))||_inf <= tol. op must keep the spatial size.
template <typename T>
PropertyReport check_equivariance(const SpatialOperator<T>& op, const Tensor<T>& x,
                                  const PermutationSpec& spec, double tol);

// ||op(T(x)) - op(x)||_inf <= tol.
template <typename T>
PropertyReport check_invariance(const SpatialOperator<T>& op, const Tensor<T>& x,
                                const PermutationSpec& spec, double tol);

}  // namespace aeanet
