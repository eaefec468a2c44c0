#pragma once

#include <cstdint>
#include <functional>

namespace pneumoseg {

// Worker cap: min(hardware threads, PNEUMOSEG_THREADS if set). Always >= 1.
int worker_threads();

// Splits [begin, end) into contiguous chunks, one per worker. Each chunk
// writes disjoint outputs, so results do not depend on the thread count.
// Runs inline when a single worker suffices.
void parallel_for(std::int64_t begin, std::int64_t end,
                  const std::function<void(std::int64_t, std::int64_t)>& body);

}  // namespace pneumoseg
