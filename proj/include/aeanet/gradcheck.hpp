#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "aeanet/tensor.hpp"

namespace aeanet {

// A scalar-valued function of a parameter list. It is called both with taped
// parameters (to obtain analytic gradients) and with plain perturbed copies.
template <typename T>
using ScalarFunction = std::function<Tensor<T>(const std::vector<Tensor<T>>& params)>;

struct GradCheckOptions {
  double epsilon = 1e-5;
  double tolerance = 1e-5;
  // Gradients whose magnitude is below this floor are compared absolutely.
  double abs_floor = 1e-8;
  // Rounding noise assumed in each evaluation of f, in units of machine
  // epsilon times |f|. Divided by epsilon this is the smallest gradient error
  // central differences can resolve; entries are never held to a tighter
  // absolute bound than that. 0 disables it.
  double noise_ulps = 4.0;
  // Holds every relu at its activation pattern at the unperturbed point while
  // differencing, so a kink inside [x - eps, x + eps] does not pollute the
  // estimate. The frozen function equals f on x's activation region, so its
  // derivative at x is still the derivative of f.
  bool freeze_activations = false;
  // When set, checks this many coordinates drawn uniformly over all
  // parameters; otherwise every coordinate is checked.
  std::optional<std::size_t> sample_count;
  std::uint64_t seed = 0;
};

struct GradCheckEntry {
  std::size_t param = 0;
  std::size_t index = 0;
  double analytic = 0;
  double numeric = 0;
  // Error against the resolution-aware denominator (see noise_ulps).
  double rel_error = 0;
  // Plain |a - n| / max(|a|, |n|, abs_floor).
  double raw_rel_error = 0;
  // Finite-difference resolution of this coordinate.
  double resolution = 0;
  // freeze_activations only: some relu input changed sign within +-eps. The
  // plain (unfrozen) estimate and its error are kept for reference.
  bool crossed_kink = false;
  double plain_numeric = 0;
  double plain_rel_error = 0;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;
  double max_rel_error = 0;
  double max_raw_rel_error = 0;
  // Entries whose gradient is too small for f's rounding noise to certify the
  // relative tolerance; these are bounded absolutely by their resolution.
  std::size_t resolution_limited = 0;
  std::size_t kink_crossings = 0;
  // Largest error of the unfrozen estimate over kink-crossing entries.
  double max_plain_rel_error = 0;
  bool pass = false;
};

// Relative error used throughout: |a - n| / max(|a|, |n|, abs_floor).
double gradient_rel_error(double analytic, double numeric, double abs_floor);

// Central differences against supplied analytic gradients (one tensor per
// parameter). Non-finite function values raise NumericError.
template <typename T>
GradCheckReport compare_gradients(const ScalarFunction<T>& f, const std::vector<Tensor<T>>& params,
                                  const std::vector<Tensor<T>>& analytic,
                                  const GradCheckOptions& options);

// Records f on a fresh tape, runs backward, and compares against central
// differences.
template <typename T>
GradCheckReport finite_diff_check(const ScalarFunction<T>& f, const std::vector<Tensor<T>>& params,
                                  const GradCheckOptions& options);

// Tape gradients of f at params, in parameter order.
template <typename T>
std::vector<Tensor<T>> tape_gradients(const ScalarFunction<T>& f,
                                      const std::vector<Tensor<T>>& params);

}  // namespace aeanet
