/* Copyright 2026 The dsir Authors.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/
#ifndef DSIR_PARALLEL_HPP
#define DSIR_PARALLEL_HPP

#include <cstdint>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace dsir {

// n <= 0 restores the hardware default.
void set_thread_count(int n);
int thread_count();

// Runs fn(lo, hi) on contiguous chunks of [0, n). Each index must be
// handled by exactly one chunk and chunks must not share output; under
// that contract results are identical for any thread count.
template <class Fn>
void parallel_chunks(std::int64_t n, const Fn& fn) {
  if (n <= 0) return;
#ifdef _OPENMP
  if (thread_count() > 1 && !omp_in_parallel()) {
#pragma omp parallel
    {
      const std::int64_t workers = omp_get_num_threads();
      const std::int64_t t = omp_get_thread_num();
      const std::int64_t lo = n * t / workers;
      const std::int64_t hi = n * (t + 1) / workers;
      if (lo < hi) fn(lo, hi);
    }
    return;
  }
#endif
  fn(0, n);
}

template <class Fn>
void parallel_for(std::int64_t n, const Fn& fn) {
  parallel_chunks(n, [&fn](std::int64_t lo, std::int64_t hi) {
    for (std::int64_t i = lo; i < hi; ++i) fn(i);
  });
}

}  // namespace dsir

#endif  // DSIR_PARALLEL_HPP
