#pragma once

#include <cstddef>
#include <exception>
#include <functional>

namespace mdopt {

// Runs fn(i) for i in [0, n) on up to `threads` threads. Work items must be
// independent and write only to slots indexed by i, so the result is the
// same for any thread count. Exceptions are collected and the first one
// rethrown after all threads join.
void parallel_for(std::size_t n, int threads,
                  const std::function<void(std::size_t)>& fn);

}  // namespace mdopt
