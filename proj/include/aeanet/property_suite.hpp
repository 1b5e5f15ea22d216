#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "aeanet/attention.hpp"

namespace aeanet {

enum class AttentionOp { self_attention, learned_query, shared_reference, batch_aware };
// Accepts self-attention | learned-query | shared-reference | batch-aware.
AttentionOp parse_attention_op(const std::string& text);
std::string to_string(AttentionOp op);

struct PropertySuiteOptions {
  std::size_t trials = 100;
  std::uint64_t seed = 0;
  NormMode norm = NormMode::division;
  std::size_t min_positions = 4;
  std::size_t max_positions = 64;
  std::size_t max_features = 8;
  std::vector<std::size_t> ref_sizes{1, 16, 64};  // shared-reference trials cycle through these
  std::size_t max_batch = 4;                      // batch-aware trials
  double init_std = 1.0;
};

// Worst-case errors over random trials in f64. Each trial draws s, c, c1, c2,
// projections, an input and a random spatial permutation.
struct PropertySuiteReport {
  AttentionOp op = AttentionOp::self_attention;
  std::size_t trials = 0;
  // max |A(T x) - T A(x)|; for learned-query trials s_q = s so it is defined.
  double equivariance_max_err = 0.0;
  // max |A(T x) - A(x)|
  double invariance_max_err = 0.0;
  // Smallest max-abs difference between outputs for two independent inputs;
  // guards against a trivially constant operator.
  double positive_control_min_diff = 0.0;
  // batch-aware only: max error under batch reordering, and N = 1 vs self-attention.
  double batch_reorder_max_err = 0.0;
  double singleton_max_err = 0.0;
  double seconds = 0.0;
};

PropertySuiteReport run_property_suite(AttentionOp op, const PropertySuiteOptions& options);

}  // namespace aeanet
