#pragma once

#include <cstddef>

namespace aeanet {

// Upper bound on internal worker threads. Reads AEANET_THREADS once; falls back
// to the hardware concurrency when unset or invalid.
int thread_budget();

// Applies thread_budget() to OpenMP and Eigen. Safe to call repeatedly.
void configure_threads();

}  // namespace aeanet
