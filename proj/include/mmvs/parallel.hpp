#pragma once

#include <Eigen/Core>

#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace mmvs {

inline void set_thread_count(int n) {
#ifdef _OPENMP
    if (n > 0) omp_set_num_threads(n);
#else
    (void)n;
#endif
}

inline int thread_count() {
#ifdef _OPENMP
    return omp_get_max_threads();
#else
    return 1;
#endif
}

// Runs fn(row) for each row. Each row must write only its own outputs.
template <typename Fn>
void parallel_rows(Eigen::Index rows, Fn&& fn) {
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
    for (Eigen::Index y = 0; y < rows; ++y) fn(y);
}

// Sums a per-row function over all rows. Partials are stored per row and
// combined sequentially in row order, so the result does not depend on the
// number of threads.
template <typename Fn>
double parallel_row_sum(Eigen::Index rows, Fn&& fn) {
    std::vector<double> partial(static_cast<std::size_t>(rows), 0.0);
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
    for (Eigen::Index y = 0; y < rows; ++y) partial[static_cast<std::size_t>(y)] = fn(y);
    double sum = 0.0;
    for (double v : partial) sum += v;
    return sum;
}

}  // namespace mmvs
