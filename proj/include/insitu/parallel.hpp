// Copyright 2026 The insitu Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstddef>
#include <exception>
#include <mutex>

namespace insitu {

/// Selects the OpenMP kernel or the serial reference it is tested against.
enum class Execution { Serial, Parallel };

/// Threads an OpenMP parallel region would use.
int available_threads();
/// Sets the OpenMP thread count; n <= 0 restores the runtime default.
void set_threads(int n);

/// Calls fn(i) for i in [0, n). Iterations must be independent. The first
/// exception thrown by any iteration is rethrown after the loop.
template <class Fn>
void for_each_index(std::size_t n, Execution ex, Fn&& fn) {
  if (ex == Execution::Serial) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::exception_ptr error;
  std::mutex guard;
  const auto count = static_cast<long long>(n);
#pragma omp parallel for schedule(dynamic)
  for (long long i = 0; i < count; ++i) {
    try {
      fn(static_cast<std::size_t>(i));
    } catch (...) {
      const std::lock_guard<std::mutex> lock(guard);
      if (!error) error = std::current_exception();
    }
  }
  if (error) std::rethrow_exception(error);
}

}  // namespace insitu
