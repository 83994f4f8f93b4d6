#pragma once

#include <cstdint>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace lunarloc {

// Hot kernels come in two flavors: a plain serial loop kept as the reference
// implementation, and an OpenMP version. Outputs are required to be identical
// because all randomness is counter-based (see rng.hpp).
enum class ExecMode { Serial, OpenMP };

template <typename F>
void parallel_for(ExecMode mode, int64_t n, F&& body) {
    if (mode == ExecMode::OpenMP) {
#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic, 1)
        for (int64_t i = 0; i < n; ++i) body(i);
        return;
#endif
    }
    for (int64_t i = 0; i < n; ++i) body(i);
}

}  // namespace lunarloc
