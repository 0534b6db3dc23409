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
#include "dsir/parallel.hpp"

#include <atomic>
#include <thread>

namespace dsir {

namespace {
std::atomic<int> g_threads{0};

int hardware_default() {
  const unsigned n = std::thread::hardware_concurrency();
  return n == 0 ? 1 : static_cast<int>(n);
}
}  // namespace

void set_thread_count(int n) {
  const int resolved = n > 0 ? n : hardware_default();
  g_threads.store(resolved);
#ifdef _OPENMP
  omp_set_num_threads(resolved);
#endif
}

int thread_count() {
  int n = g_threads.load();
  if (n <= 0) {
    n = hardware_default();
    g_threads.store(n);
#ifdef _OPENMP
    omp_set_num_threads(n);
#endif
  }
  return n;
}

}  // namespace dsir
