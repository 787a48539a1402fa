#pragma once

#include <cstddef>
#include <exception>
#include <mutex>

namespace femam {

/// How per-client work inside a round is executed. `serial` is the reference
/// path; `parallel` fans clients out over OpenMP threads. Both produce
/// bitwise-identical results because every client writes only its own slot
/// and reductions happen afterwards in ascending client order.
enum class Exec { serial, parallel };

template <class Fn>
void for_each_client(Exec exec, std::size_t count, Fn&& fn) {
  if (exec == Exec::serial) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::exception_ptr first_error;
  std::mutex error_mutex;
  const long n = static_cast<long>(count);
#pragma omp parallel for schedule(dynamic, 1)
  for (long i = 0; i < n; ++i) {
    try {
      fn(static_cast<std::size_t>(i));
    } catch (...) {
      std::lock_guard lock(error_mutex);
      if (!first_error) first_error = std::current_exception();
    }
  }
  if (first_error) std::rethrow_exception(first_error);
}

}  // namespace femam
