#pragma once

/**
 * Bulk array kernels with a selectable execution mode.
 *
 * Every kernel produces bitwise-identical results in Serial and Parallel
 * mode and for any thread count: element writes are per-slot, and
 * reductions accumulate fixed-size chunks whose partials are combined
 * serially in chunk order. Parallelism only changes who computes a chunk,
 * never the arithmetic. The naive single-pass folds used to validate the
 * chunked reductions live in reference.hpp.
 */

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace densepath {

enum class Exec { Serial, Parallel };

namespace kernels {

inline constexpr std::int64_t kChunk = 4096;
inline constexpr std::int64_t kParallelGrain = 8192;

/// f(i) for i in [0, n). Each iteration must write only its own slots.
template <typename F>
void parallel_for(Exec exec, std::size_t n, F&& f) {
  const std::int64_t count = static_cast<std::int64_t>(n);
#ifdef _OPENMP
  if (exec == Exec::Parallel) {
#pragma omp parallel for schedule(static) if (count >= kParallelGrain)
    for (std::int64_t i = 0; i < count; ++i) f(static_cast<std::size_t>(i));
    return;
  }
#else
  (void)exec;
#endif
  for (std::int64_t i = 0; i < count; ++i) f(static_cast<std::size_t>(i));
}

/// Chunked reduction: partial(i) left-folds elements of chunk i; partials
/// are combined left to right. Both modes share the exact same fold tree.
template <typename PartialFn>
double chunked_sum(Exec exec, std::size_t n, PartialFn&& partial_of_chunk) {
  const std::int64_t count = static_cast<std::int64_t>(n);
  const std::int64_t chunks = count == 0 ? 0 : (count + kChunk - 1) / kChunk;
  std::vector<double> partials(static_cast<std::size_t>(chunks), 0.0);
  parallel_for(exec, static_cast<std::size_t>(chunks), [&](std::size_t c) {
    const std::int64_t lo = static_cast<std::int64_t>(c) * kChunk;
    const std::int64_t hi = std::min(count, lo + kChunk);
    partials[c] = partial_of_chunk(static_cast<std::size_t>(lo), static_cast<std::size_t>(hi));
  });
  double total = 0.0;
  for (double p : partials) total += p;
  return total;
}

inline double sum(Exec exec, std::span<const double> x) {
  return chunked_sum(exec, x.size(), [&](std::size_t lo, std::size_t hi) {
    double s = 0.0;
    for (std::size_t i = lo; i < hi; ++i) s += x[i];
    return s;
  });
}

inline double dot(Exec exec, std::span<const double> x, std::span<const double> y) {
  return chunked_sum(exec, x.size(), [&](std::size_t lo, std::size_t hi) {
    double s = 0.0;
    for (std::size_t i = lo; i < hi; ++i) s += x[i] * y[i];
    return s;
  });
}

inline double sum_abs_diff(Exec exec, std::span<const double> x, std::span<const double> y) {
  return chunked_sum(exec, x.size(), [&](std::size_t lo, std::size_t hi) {
    double s = 0.0;
    for (std::size_t i = lo; i < hi; ++i) s += std::abs(x[i] - y[i]);
    return s;
  });
}

inline double sum_sq_diff(Exec exec, std::span<const double> x, std::span<const double> y) {
  return chunked_sum(exec, x.size(), [&](std::size_t lo, std::size_t hi) {
    double s = 0.0;
    for (std::size_t i = lo; i < hi; ++i) {
      const double d = x[i] - y[i];
      s += d * d;
    }
    return s;
  });
}

inline double max_abs_diff(Exec exec, std::span<const double> x, std::span<const double> y) {
  const std::int64_t count = static_cast<std::int64_t>(x.size());
  const std::int64_t chunks = count == 0 ? 0 : (count + kChunk - 1) / kChunk;
  std::vector<double> partials(static_cast<std::size_t>(chunks), 0.0);
  parallel_for(exec, static_cast<std::size_t>(chunks), [&](std::size_t c) {
    const std::int64_t lo = static_cast<std::int64_t>(c) * kChunk;
    const std::int64_t hi = std::min(count, lo + kChunk);
    double m = 0.0;
    for (std::int64_t i = lo; i < hi; ++i) {
      m = std::max(m, std::abs(x[static_cast<std::size_t>(i)] - y[static_cast<std::size_t>(i)]));
    }
    partials[c] = m;
  });
  double m = 0.0;
  for (double p : partials) m = std::max(m, p);
  return m;
}

inline double max_abs(Exec exec, std::span<const double> x) {
  const std::vector<double> zeros(x.size(), 0.0);
  return max_abs_diff(exec, x, zeros);
}

}  // namespace kernels
}  // namespace densepath
