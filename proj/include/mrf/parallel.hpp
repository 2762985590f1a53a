#pragma once

#include <cstddef>
#include <functional>

namespace mrf {

// Number of worker threads: min(hardware_concurrency, MRF_THREADS).
int max_threads();

// Runs body(begin, end) on disjoint index chunks [begin, end). Chunk
// boundaries depend only on n and max_threads(), so any computation in which
// each output element is written by exactly one chunk is run-to-run
// deterministic. Nested calls execute inline on the calling thread.
void parallel_for(std::size_t n, const std::function<void(std::size_t, std::size_t)>& body);

}  // namespace mrf
