#pragma once

#include <cstddef>
#include <exception>
#include <vector>

#include <omp.h>

namespace msp {

/// out[i] = fn(i) for i in [0, n), in index order on the calling thread.
template <typename T, typename Fn>
std::vector<T> serial_map(std::size_t n, Fn&& fn) {
  std::vector<T> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.push_back(fn(i));
  return out;
}

/// Same result as serial_map with tasks spread over `workers` OpenMP threads
/// (0 = runtime default). Each task writes only its own slot, so the output
/// does not depend on scheduling. The first exception (lowest index) is rethrown.
template <typename T, typename Fn>
std::vector<T> parallel_map(std::size_t n, Fn&& fn, int workers = 0) {
  std::vector<T> out(n);
  std::vector<std::exception_ptr> errors(n);
  const int threads = workers > 0 ? workers : omp_get_max_threads();
#pragma omp parallel for schedule(dynamic, 1) num_threads(threads)
  for (long i = 0; i < long(n); ++i) {
    try {
      out[std::size_t(i)] = fn(std::size_t(i));
    } catch (...) {
      errors[std::size_t(i)] = std::current_exception();
    }
  }
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);
  return out;
}

}  // namespace msp
