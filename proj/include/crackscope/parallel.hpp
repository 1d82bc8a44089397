#pragma once

#include <cstddef>
#include <functional>

namespace crackscope {

// Worker cap from CRACKSCOPE_THREADS; 1 when unset or invalid.
unsigned threads_from_env();

// Runs body(i) for i in [0, count) on up to `threads` workers. Each index is
// visited exactly once; callers write results by index so output order is fixed.
void parallel_for(std::size_t count, unsigned threads, const std::function<void(std::size_t)>& body);

}  // namespace crackscope
