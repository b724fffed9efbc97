#pragma once

#include <atomic>
#include <functional>
#include <thread>
#include <vector>

namespace gridpose {

/// Runs fn(chunk_id, begin, end) over n items split into a fixed number of
/// chunks. The chunk layout does not depend on the worker count, so results
/// assembled per chunk are reproducible on any machine.
inline void parallel_chunks(int n, const std::function<void(int, int, int)>& fn, int max_chunks = 8) {
    if (n <= 0) return;
    const int chunks = std::min(n, max_chunks);
    const int base = n / chunks, rem = n % chunks;
    auto bounds = [&](int c) {
        const int begin = c * base + std::min(c, rem);
        return std::pair<int, int>{begin, begin + base + (c < rem ? 1 : 0)};
    };
    unsigned hw = std::thread::hardware_concurrency();
    const int workers = std::min(chunks, static_cast<int>(hw ? hw : 1));
    if (workers <= 1) {
        for (int c = 0; c < chunks; ++c) {
            auto [b, e] = bounds(c);
            fn(c, b, e);
        }
        return;
    }
    std::atomic<int> next{0};
    std::vector<std::thread> pool;
    pool.reserve(static_cast<size_t>(workers));
    for (int w = 0; w < workers; ++w)
        pool.emplace_back([&] {
            for (int c = next.fetch_add(1); c < chunks; c = next.fetch_add(1)) {
                auto [b, e] = bounds(c);
                fn(c, b, e);
            }
        });
    for (auto& t : pool) t.join();
}

inline int parallel_chunk_count(int n, int max_chunks = 8) { return n <= 0 ? 0 : std::min(n, max_chunks); }

}  // namespace gridpose
