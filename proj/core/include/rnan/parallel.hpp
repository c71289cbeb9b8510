#pragma once

#include <cstdint>
#include <functional>

namespace rnan {

// Worker count for kernel-internal parallelism. Defaults to the hardware
// concurrency, capped by the RNAN_THREADS environment variable;
// RNAN_DETERMINISTIC=1 forces 1.
int num_threads();
void set_num_threads(int n);

// Runs fn(begin, end) over disjoint contiguous chunks of [0, n). Each chunk is
// processed sequentially, so any computation partitioned by output element is
// bitwise identical for every thread count. Work below `grain` runs inline.
void parallel_for(int64_t n, int64_t grain,
                  const std::function<void(int64_t, int64_t)>& fn);

}  // namespace rnan
