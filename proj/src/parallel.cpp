#include "qaexpert/parallel.hpp"

#include <charconv>
#include <cstdlib>
#include <cstring>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace qaexpert {

int worker_count() {
#ifdef _OPENMP
  int n = omp_get_max_threads();
#else
  int n = 1;
#endif
  if (const char* cap = std::getenv("QA_EXPERT_THREADS")) {
    int v = 0;
    const auto [ptr, ec] = std::from_chars(cap, cap + std::strlen(cap), v);
    if (ec == std::errc() && v > 0 && v < n) n = v;
  }
  return n;
}

}  // namespace qaexpert
