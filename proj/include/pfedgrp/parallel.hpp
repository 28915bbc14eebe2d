#pragma once

#include <cstddef>
#include <cstdlib>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace pfedgrp {

// Worker pool size: PFEDGRP_WORKERS environment variable when set, otherwise
// the OpenMP default (1 in serial builds).
inline int worker_count() {
    if (const char* env = std::getenv("PFEDGRP_WORKERS")) {
        const int n = std::atoi(env);
        if (n > 0) return n;
    }
#ifdef _OPENMP
    return omp_get_max_threads();
#else
    return 1;
#endif
}

// Runs fn(i) for i in [0, n). Iterations must be independent: each writes its
// own output slot and draws from its own RNG substream, so the schedule never
// affects results.
template <typename Fn>
void parallel_for(size_t n, Fn&& fn) {
#ifdef _OPENMP
    const int workers = worker_count();
#pragma omp parallel for schedule(dynamic, 1) num_threads(workers)
    for (long long i = 0; i < static_cast<long long>(n); ++i) {
        fn(static_cast<size_t>(i));
    }
#else
    for (size_t i = 0; i < n; ++i) fn(i);
#endif
}

}  // namespace pfedgrp
