#pragma once

#include <cstddef>
#include <functional>

namespace slimfl {

// Worker cap: SLIMFL_THREADS when set, hardware concurrency otherwise.
// Results never depend on the count; every random draw is keyed, and parallel
// loops write into per-index slots.
int worker_count();

void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

}  // namespace slimfl
