#include "casr/parallel.hpp"

#include <algorithm>
#include <cstdlib>
#include <exception>
#include <string>
#include <thread>
#include <vector>

namespace casr::parallel {

namespace {
thread_local int tls_workers = 1;
}

int current_workers() noexcept { return tls_workers; }

ScopedWorkers::ScopedWorkers(int workers) noexcept : previous_(tls_workers) {
    tls_workers = std::max(1, workers);
}

ScopedWorkers::~ScopedWorkers() { tls_workers = previous_; }

int resolve_workers(int requested) {
    if (requested >= 1) return requested;
    if (const char* env = std::getenv("CASR_WORKERS")) {
        try {
            int v = std::stoi(env);
            if (v >= 1) return v;
        } catch (const std::exception&) {
        }
    }
    unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : static_cast<int>(hw);
}

void parallel_for(std::size_t count, const std::function<void(std::size_t)>& body) {
    if (count == 0) return;
    const std::size_t workers = std::min<std::size_t>(static_cast<std::size_t>(tls_workers), count);
    if (workers <= 1) {
        for (std::size_t i = 0; i < count; ++i) body(i);
        return;
    }

    std::vector<std::exception_ptr> errors(workers);
    std::vector<std::size_t> error_index(workers, count);
    auto run_chunk = [&](std::size_t w) {
        const std::size_t begin = count * w / workers;
        const std::size_t end = count * (w + 1) / workers;
        for (std::size_t i = begin; i < end; ++i) {
            try {
                body(i);
            } catch (...) {
                errors[w] = std::current_exception();
                error_index[w] = i;
                return;
            }
        }
    };

    std::vector<std::thread> threads;
    threads.reserve(workers - 1);
    for (std::size_t w = 1; w < workers; ++w) threads.emplace_back(run_chunk, w);
    run_chunk(0);
    for (auto& t : threads) t.join();

    for (std::size_t w = 0; w < workers; ++w) {
        if (errors[w]) std::rethrow_exception(errors[w]);
    }
}

}  // namespace casr::parallel
