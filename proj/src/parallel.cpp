#include "aeanet/parallel.hpp"

#include <Eigen/Core>
#include <omp.h>

#include <cstdlib>
#include <string>
#include <thread>

namespace aeanet {

int thread_budget() {
  static const int budget = [] {
    int fallback = static_cast<int>(std::thread::hardware_concurrency());
    if (fallback < 1) fallback = 1;
    const char* env = std::getenv("AEANET_THREADS");
    if (!env) return fallback;
    try {
      int n = std::stoi(env);
      return n >= 1 ? n : fallback;
    } catch (...) {
      return fallback;
    }
  }();
  return budget;
}

void configure_threads() {
  omp_set_num_threads(thread_budget());
  Eigen::setNbThreads(thread_budget());
}

}  // namespace aeanet
