#pragma once

#ifdef _OPENMP
#include <omp.h>
#endif

namespace sgg {

// Execution mode for the data-parallel kernels. Every parallel kernel writes
// only to per-index slots, so serial and parallel runs produce identical
// bytes; the serial path is the reference the tests compare against.
enum class Exec { serial, parallel };

template <class F>
void parallel_for(int n, Exec mode, F&& fn) {
#ifdef _OPENMP
  if (mode == Exec::parallel) {
#pragma omp parallel for schedule(static)
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
#else
  (void)mode;
#endif
  for (int i = 0; i < n; ++i) fn(i);
}

inline int max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

}  // namespace sgg
