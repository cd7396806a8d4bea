#pragma once

// Deterministic data-parallel helpers. Work is cut into fixed-size blocks whose
// boundaries do not depend on the thread count; partial results are combined
// serially in block order, so the OpenMP path is bit-identical for any number of
// threads (and to a single-threaded run of the same kernel).

#include <algorithm>
#include <exception>
#include <vector>

#ifdef TTECH_HAVE_OPENMP
#include <omp.h>
#endif

#include "ttech/core.hpp"

namespace ttech::parallel {

inline constexpr Index kBlock = 256;

inline int max_threads() {
#ifdef TTECH_HAVE_OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

inline void set_threads(int n) {
#ifdef TTECH_HAVE_OPENMP
  omp_set_num_threads(n);
#else
  (void)n;
#endif
}

inline bool enabled() {
#ifdef TTECH_HAVE_OPENMP
  return true;
#else
  return false;
#endif
}

// Exceptions cannot cross an OpenMP region; each is captured and the lowest-index one rethrown.
inline void rethrow_first(const std::vector<std::exception_ptr>& errors) {
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);
}

inline Index block_count(Index n) { return (n + kBlock - 1) / kBlock; }

/// Calls f(lo, hi) for each fixed block of [0, n).
template <class F>
void for_blocks(Index n, F&& f) {
  const Index nb = block_count(n);
  std::vector<std::exception_ptr> errors(static_cast<size_t>(nb));
#ifdef TTECH_HAVE_OPENMP
#pragma omp parallel for schedule(static)
#endif
  for (Index b = 0; b < nb; ++b) {
    try {
      f(b * kBlock, std::min(n, (b + 1) * kBlock));
    } catch (...) {
      errors[static_cast<size_t>(b)] = std::current_exception();
    }
  }
  rethrow_first(errors);
}

/// Sum of f(i) over [0, n) using fixed blocks.
template <class F>
double block_sum(Index n, F&& f) {
  const Index nb = block_count(n);
  std::vector<double> partial(static_cast<size_t>(nb), 0.0);
  std::vector<std::exception_ptr> errors(static_cast<size_t>(nb));
#ifdef TTECH_HAVE_OPENMP
#pragma omp parallel for schedule(static)
#endif
  for (Index b = 0; b < nb; ++b) {
    const Index lo = b * kBlock;
    const Index hi = std::min(n, lo + kBlock);
    double s = 0.0;
    try {
      for (Index i = lo; i < hi; ++i) s += f(i);
    } catch (...) {
      errors[static_cast<size_t>(b)] = std::current_exception();
    }
    partial[static_cast<size_t>(b)] = s;
  }
  rethrow_first(errors);
  double total = 0.0;
  for (double p : partial) total += p;
  return total;
}

/// Accumulates into a matrix-valued sum: `f(i, acc)` adds sample i into acc.
template <class F>
Mat block_accumulate(Index n, Index rows, Index cols, F&& f) {
  const Index nb = block_count(n);
  std::vector<Mat> partial(static_cast<size_t>(nb));
  std::vector<std::exception_ptr> errors(static_cast<size_t>(nb));
#ifdef TTECH_HAVE_OPENMP
#pragma omp parallel for schedule(static)
#endif
  for (Index b = 0; b < nb; ++b) {
    Mat acc = Mat::Zero(rows, cols);
    const Index lo = b * kBlock;
    const Index hi = std::min(n, lo + kBlock);
    try {
      for (Index i = lo; i < hi; ++i) f(i, acc);
    } catch (...) {
      errors[static_cast<size_t>(b)] = std::current_exception();
    }
    partial[static_cast<size_t>(b)] = std::move(acc);
  }
  rethrow_first(errors);
  Mat total = Mat::Zero(rows, cols);
  for (const Mat& p : partial) total += p;
  return total;
}

/// Independent per-index work; no reduction. An exception thrown by f is captured
/// and the one from the lowest index is rethrown after the loop.
template <class F>
void for_each(Index n, F&& f) {
  std::vector<std::exception_ptr> errors(static_cast<size_t>(std::max<Index>(n, 0)));
#ifdef TTECH_HAVE_OPENMP
#pragma omp parallel for schedule(dynamic, 1)
#endif
  for (Index i = 0; i < n; ++i) {
    try {
      f(i);
    } catch (...) {
      errors[static_cast<size_t>(i)] = std::current_exception();
    }
  }
  rethrow_first(errors);
}

}  // namespace ttech::parallel
