// moscope/parallel.h

#ifndef MOSCOPE_PARALLEL_H_
#define MOSCOPE_PARALLEL_H_

#include <cstddef>
#include <functional>

namespace moscope {

// MOSCOPE_THREADS if set to a positive integer, else the processor count.
std::size_t worker_count();

// Runs fn(0) .. fn(n-1) on up to `workers` threads. Each index runs exactly
// once; if any call throws, the exception of the lowest failing index is
// rethrown after all workers finish.
void parallel_for(std::size_t n, const std::function<void(std::size_t)> &fn,
                  std::size_t workers = worker_count());

}  // namespace moscope

#endif  // MOSCOPE_PARALLEL_H_
