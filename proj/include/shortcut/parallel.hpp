/*
 * Copyright 2024 The Shortcut Rules Authors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#ifndef SHORTCUT_PARALLEL_HPP_
#define SHORTCUT_PARALLEL_HPP_

#include <cstddef>
#include <cstdint>
#include <exception>

#include <omp.h>

#include "shortcut/common.hpp"

namespace shortcut {

// Runs fn(i) for i in [0, n). The parallel path uses a dynamic OpenMP
// schedule; the first exception thrown by any iteration is rethrown on the
// calling thread after the loop. fn must only write to per-index state.
template <class Fn>
void for_each_index(std::size_t n, Exec exec, Fn&& fn) {
  if (exec == Exec::kSerial || n < 2 || omp_in_parallel()) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::exception_ptr error;
  const auto count = static_cast<std::int64_t>(n);
#pragma omp parallel for schedule(dynamic, 8)
  for (std::int64_t i = 0; i < count; ++i) {
    try {
      fn(static_cast<std::size_t>(i));
    } catch (...) {
#pragma omp critical(shortcut_for_each_index_error)
      if (!error) error = std::current_exception();
    }
  }
  if (error) std::rethrow_exception(error);
}

}  // namespace shortcut

#endif  // SHORTCUT_PARALLEL_HPP_
