#include "aeanet/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <tuple>
#include <utility>

#include "aeanet/ops.hpp"
#include "aeanet/random.hpp"

namespace aeanet {

double gradient_rel_error(double analytic, double numeric, double abs_floor) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), abs_floor});
  return std::abs(analytic - numeric) / denom;
}

template <typename T>
std::vector<Tensor<T>> tape_gradients(const ScalarFunction<T>& f,
                                      const std::vector<Tensor<T>>& params) {
  GradTape<T> tape;
  std::vector<Tensor<T>> watched;
  watched.reserve(params.size());
  for (const Tensor<T>& p : params) watched.push_back(tape.watch(p));
  Tensor<T> loss = f(watched);
  tape.backward(loss);
  std::vector<Tensor<T>> grads;
  grads.reserve(watched.size());
  for (const Tensor<T>& w : watched) grads.push_back(tape.grad(w));
  return grads;
}

template <typename T>
GradCheckReport compare_gradients(const ScalarFunction<T>& f, const std::vector<Tensor<T>>& params,
                                  const std::vector<Tensor<T>>& analytic,
                                  const GradCheckOptions& options) {
  if (analytic.size() != params.size()) {
    throw DimensionError("compare_gradients: one gradient per parameter required");
  }
  std::vector<std::pair<std::size_t, std::size_t>> coords;
  std::size_t total = 0;
  for (std::size_t p = 0; p < params.size(); ++p) {
    if (analytic[p].shape() != params[p].shape()) {
      throw DimensionError("compare_gradients: gradient shape mismatch for parameter " +
                           std::to_string(p));
    }
    total += params[p].numel();
  }
  if (options.sample_count) {
    Rng rng(options.seed);
    for (std::size_t i = 0; i < *options.sample_count && total > 0; ++i) {
      std::size_t flat = rng.index(total);
      std::size_t p = 0;
      while (flat >= params[p].numel()) flat -= params[p++].numel();
      coords.emplace_back(p, flat);
    }
  } else {
    for (std::size_t p = 0; p < params.size(); ++p)
      for (std::size_t i = 0; i < params[p].numel(); ++i) coords.emplace_back(p, i);
  }

  auto evaluate = [&](std::size_t p, std::size_t i, double delta) {
    std::vector<Tensor<T>> shifted;
    shifted.reserve(params.size());
    for (std::size_t q = 0; q < params.size(); ++q) {
      if (q != p) {
        shifted.push_back(params[q].detach());
        continue;
      }
      std::vector<T> v = params[q].to_vector();
      v[i] = static_cast<T>(static_cast<double>(v[i]) + delta);
      shifted.emplace_back(params[q].shape(), std::move(v));
    }
    const double value = static_cast<double>(f(shifted).item());
    if (!std::isfinite(value)) {
      throw NumericError("finite-difference evaluation produced a non-finite value at parameter " +
                         std::to_string(p) + "[" + std::to_string(i) + "]");
    }
    return value;
  };

  ops::ActivationPattern pattern;
  if (options.freeze_activations) {
    std::vector<Tensor<T>> plain;
    for (const Tensor<T>& t : params) plain.push_back(t.detach());
    ops::ActivationScope record(pattern, ops::ActivationScope::Mode::record);
    f(plain);
  }
  // Returns the value and whether the relu pattern had to be overridden.
  auto evaluate_frozen = [&](std::size_t p, std::size_t i, double delta) {
    ops::ActivationScope replay(pattern, ops::ActivationScope::Mode::replay);
    const double value = evaluate(p, i, delta);
    return std::pair{value, replay.crossed()};
  };

  GradCheckReport report;
  for (auto [p, i] : coords) {
    GradCheckEntry e;
    e.param = p;
    e.index = i;
    e.analytic = static_cast<double>(analytic[p][i]);
    double plus = 0, minus = 0;
    if (options.freeze_activations) {
      bool crossed_plus = false, crossed_minus = false;
      std::tie(plus, crossed_plus) = evaluate_frozen(p, i, options.epsilon);
      std::tie(minus, crossed_minus) = evaluate_frozen(p, i, -options.epsilon);
      e.crossed_kink = crossed_plus || crossed_minus;
    } else {
      plus = evaluate(p, i, options.epsilon);
      minus = evaluate(p, i, -options.epsilon);
    }
    e.numeric = (plus - minus) / (2.0 * options.epsilon);
    e.plain_numeric = e.numeric;
    if (e.crossed_kink) {
      e.plain_numeric = (evaluate(p, i, options.epsilon) - evaluate(p, i, -options.epsilon)) /
                        (2.0 * options.epsilon);
      e.plain_rel_error = gradient_rel_error(e.analytic, e.plain_numeric, options.abs_floor);
      ++report.kink_crossings;
      report.max_plain_rel_error = std::max(report.max_plain_rel_error, e.plain_rel_error);
    }
    e.resolution = options.noise_ulps * std::numeric_limits<T>::epsilon() *
                   std::max(std::abs(plus), std::abs(minus)) / options.epsilon;
    e.raw_rel_error = gradient_rel_error(e.analytic, e.numeric, options.abs_floor);
    const double floor = options.tolerance > 0 ? e.resolution / options.tolerance : 0.0;
    e.rel_error = gradient_rel_error(e.analytic, e.numeric, std::max(options.abs_floor, floor));
    if (std::max(std::abs(e.analytic), std::abs(e.numeric)) < floor) ++report.resolution_limited;
    report.max_rel_error = std::max(report.max_rel_error, e.rel_error);
    report.max_raw_rel_error = std::max(report.max_raw_rel_error, e.raw_rel_error);
    report.entries.push_back(e);
  }
  report.pass = report.max_rel_error <= options.tolerance;
  return report;
}

template <typename T>
GradCheckReport finite_diff_check(const ScalarFunction<T>& f, const std::vector<Tensor<T>>& params,
                                  const GradCheckOptions& options) {
  return compare_gradients(f, params, tape_gradients(f, params), options);
}

template std::vector<Tensor<float>> tape_gradients(const ScalarFunction<float>&,
                                                   const std::vector<Tensor<float>>&);
template std::vector<Tensor<double>> tape_gradients(const ScalarFunction<double>&,
                                                    const std::vector<Tensor<double>>&);
template GradCheckReport compare_gradients(const ScalarFunction<float>&,
                                           const std::vector<Tensor<float>>&,
                                           const std::vector<Tensor<float>>&,
                                           const GradCheckOptions&);
template GradCheckReport compare_gradients(const ScalarFunction<double>&,
                                           const std::vector<Tensor<double>>&,
                                           const std::vector<Tensor<double>>&,
                                           const GradCheckOptions&);
template GradCheckReport finite_diff_check(const ScalarFunction<float>&,
                                           const std::vector<Tensor<float>>&,
                                           const GradCheckOptions&);
template GradCheckReport finite_diff_check(const ScalarFunction<double>&,
                                           const std::vector<Tensor<double>>&,
                                           const GradCheckOptions&);

}  // namespace aeanet
