#pragma once

#include <cstddef>
#include <functional>

namespace safedom {

// Worker cap: SDTRAIN_THREADS when set (minimum 1), otherwise the hardware
// concurrency.
int worker_count();

// Invokes fn(chunk_index, begin, end) over fixed-size chunks of [0, n),
// possibly concurrently. Chunk boundaries do not depend on the worker
// count, so callers that merge per-chunk results in chunk order produce
// thread-count-invariant output.
void for_each_chunk(
    std::size_t n, std::size_t chunk_size,
    const std::function<void(std::size_t, std::size_t, std::size_t)>& fn);

}  // namespace safedom
