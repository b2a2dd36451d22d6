#pragma once

#include <cstddef>
#include <functional>

namespace casr::parallel {

/// Number of worker threads parallel_for may use on the calling thread.
/// Defaults to 1; threads spawned by parallel_for always see 1, so nested
/// calls run serially.
int current_workers() noexcept;

/// Sets the worker budget for the calling thread while in scope.
class ScopedWorkers {
public:
    explicit ScopedWorkers(int workers) noexcept;
    ~ScopedWorkers();
    ScopedWorkers(const ScopedWorkers&) = delete;
    ScopedWorkers& operator=(const ScopedWorkers&) = delete;

private:
    int previous_;
};

/// Resolves a requested worker count: values < 1 map to the CASR_WORKERS
/// environment variable, falling back to the logical CPU count.
int resolve_workers(int requested);

/// Runs body(i) for i in [0, count). Indices are split into contiguous
/// static chunks; body must only write state owned by index i, which makes
/// the result independent of the worker count. The first exception thrown
/// by any index (lowest index wins) is rethrown on the caller.
void parallel_for(std::size_t count, const std::function<void(std::size_t)>& body);

}  // namespace casr::parallel
