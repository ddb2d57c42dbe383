#pragma once

#include <cstdint>
#include <functional>

namespace opforge {

/// Thread cap: OPFORGE_THREADS when set (1 means strictly serial),
/// otherwise the hardware concurrency.
int max_threads();

/// Runs fn over [0, n) split into per-thread chunks. Chunking depends only
/// on n and the thread cap, so results are reproducible for a fixed cap;
/// chunks write to disjoint outputs.
void parallel_for(std::int64_t n, const std::function<void(std::int64_t, std::int64_t)>& fn);

}  // namespace opforge
