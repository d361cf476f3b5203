#pragma once

#include <cstddef>
#include <functional>

namespace uc2i {

// Worker count used by row-parallel kernels. 1 means fully sequential.
void set_num_threads(int n);
int num_threads();

// Runs body(begin, end) over disjoint contiguous chunks of [0, n).
// Each index is handled by exactly one call, so per-index results do not
// depend on the thread count.
void parallel_for(std::size_t n,
                  const std::function<void(std::size_t, std::size_t)>& body);

}  // namespace uc2i
