#pragma once

#include <cstdint>
#include <exception>
#include <mutex>

#if defined(_OPENMP)
#include <omp.h>
#endif

namespace looptune {

/// Worker count for a request; values <= 0 mean "all available".
inline int resolve_workers(int requested)
{
#if defined(_OPENMP)
    return requested > 0 ? requested : omp_get_max_threads();
#else
    (void)requested;
    return 1;
#endif
}

/// Dynamic-schedule loop over [begin, end). The first exception thrown by any
/// iteration is rethrown on the calling thread after the region ends.
template <class F>
void parallel_for(std::int64_t begin, std::int64_t end, int workers, F&& f)
{
    workers = resolve_workers(workers);
    if (workers <= 1 || end - begin <= 1) {
        for (std::int64_t i = begin; i < end; ++i)
            f(i);
        return;
    }
    std::exception_ptr error;
    std::mutex error_mutex;
#pragma omp parallel for schedule(dynamic) num_threads(workers)
    for (std::int64_t i = begin; i < end; ++i) {
        try {
            f(i);
        } catch (...) {
            std::lock_guard<std::mutex> lock(error_mutex);
            if (!error)
                error = std::current_exception();
        }
    }
    if (error)
        std::rethrow_exception(error);
}

} // namespace looptune
