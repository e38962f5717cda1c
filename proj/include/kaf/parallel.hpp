#pragma once

#include <cstddef>
#include <exception>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace kaf {

inline void set_threads(int n)
{
#ifdef _OPENMP
  if (n > 0)
    omp_set_num_threads(n);
#else
  (void)n;
#endif
}

//! Runs body(i) for i in [0, n). Each index is handled by exactly one thread,
//! so results written per index are deterministic. The first exception thrown
//! by any iteration is rethrown after the loop.
template <typename Body>
void parallel_for(std::ptrdiff_t n, Body&& body)
{
  std::exception_ptr failure;
#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic, 16)
#endif
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    try {
      body(i);
    } catch (...) {
#ifdef _OPENMP
#pragma omp critical(kaf_parallel_failure)
#endif
      if (!failure)
        failure = std::current_exception();
    }
  }
  if (failure)
    std::rethrow_exception(failure);
}

} // namespace kaf
