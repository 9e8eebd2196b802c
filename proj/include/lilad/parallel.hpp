#pragma once

#include <algorithm>
#include <future>
#include <vector>

#include "lilad/errors.hpp"

namespace lilad {

// Runs fn(i) for i in [0, n) on up to `threads` workers.  Indices are
// strided across workers and results are expected to land in preallocated
// per-index slots, so the outcome is identical for any thread count.
template <class Fn>
void parallel_for(long n, int threads, Fn&& fn) {
  if (threads < 1) throw ParameterError("threads must be positive");
  if (n <= 0) return;
  if (threads == 1 || n == 1) {
    for (long i = 0; i < n; ++i) fn(i);
    return;
  }
  const long workers = std::min<long>(threads, n);
  std::vector<std::future<void>> futs;
  futs.reserve(static_cast<std::size_t>(workers));
  for (long w = 0; w < workers; ++w)
    futs.push_back(std::async(std::launch::async, [&fn, w, n, workers] {
      for (long i = w; i < n; i += workers) fn(i);
    }));
  for (auto& f : futs) f.get();
}

}  // namespace lilad
