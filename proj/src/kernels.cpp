#include "cocole/kernels.hpp"

#include <atomic>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace cocole::kernels {

namespace {

std::atomic<Policy> g_policy{Policy::kParallel};

// Row kernels shared by both policies. Row i of the output depends only on
// row i of the left operand, which is what makes the row split deterministic.

inline void nn_row(const double* a, const double* b, double* c, std::size_t i, std::size_t k,
                   std::size_t n) {
    const double* ai = a + i * k;
    double* ci = c + i * n;
    for (std::size_t p = 0; p < k; ++p) {
        const double av = ai[p];
        const double* bp = b + p * n;
        for (std::size_t j = 0; j < n; ++j) ci[j] += av * bp[j];
    }
}

inline void nt_row(const double* a, const double* b, double* c, std::size_t i, std::size_t n,
                   std::size_t k) {
    const double* ai = a + i * n;
    double* ci = c + i * k;
    for (std::size_t j = 0; j < k; ++j) {
        const double* bj = b + j * n;
        double s = 0.0;
        for (std::size_t p = 0; p < n; ++p) s += ai[p] * bj[p];
        ci[j] += s;
    }
}

// Output row r of A^T B sums over all rows of A, so the split is over output
// rows and each thread walks the full m range in order.
inline void tn_row(const double* a, const double* b, double* c, std::size_t r, std::size_t m,
                   std::size_t k, std::size_t n) {
    double* cr = c + r * n;
    for (std::size_t i = 0; i < m; ++i) {
        const double av = a[i * k + r];
        const double* bi = b + i * n;
        for (std::size_t j = 0; j < n; ++j) cr[j] += av * bi[j];
    }
}

bool worth_parallel(std::size_t work) {
#ifdef _OPENMP
    return work >= kParallelThreshold && !omp_in_parallel();
#else
    (void)work;
    return false;
#endif
}

}  // namespace

void set_policy(Policy p) { g_policy.store(p); }
Policy policy() { return g_policy.load(); }

int max_threads() {
#ifdef _OPENMP
    return omp_get_max_threads();
#else
    return 1;
#endif
}

void gemm_nn(std::span<const double> a, std::span<const double> b, std::span<double> c,
             std::size_t m, std::size_t k, std::size_t n, Policy p) {
    const auto rows = static_cast<std::ptrdiff_t>(m);
    if (p == Policy::kParallel && worth_parallel(m * k * n)) {
#pragma omp parallel for schedule(static)
        for (std::ptrdiff_t i = 0; i < rows; ++i)
            nn_row(a.data(), b.data(), c.data(), static_cast<std::size_t>(i), k, n);
        return;
    }
    for (std::size_t i = 0; i < m; ++i) nn_row(a.data(), b.data(), c.data(), i, k, n);
}

void gemm_nt(std::span<const double> a, std::span<const double> b, std::span<double> c,
             std::size_t m, std::size_t n, std::size_t k, Policy p) {
    const auto rows = static_cast<std::ptrdiff_t>(m);
    if (p == Policy::kParallel && worth_parallel(m * k * n)) {
#pragma omp parallel for schedule(static)
        for (std::ptrdiff_t i = 0; i < rows; ++i)
            nt_row(a.data(), b.data(), c.data(), static_cast<std::size_t>(i), n, k);
        return;
    }
    for (std::size_t i = 0; i < m; ++i) nt_row(a.data(), b.data(), c.data(), i, n, k);
}

void gemm_tn(std::span<const double> a, std::span<const double> b, std::span<double> c,
             std::size_t m, std::size_t k, std::size_t n, Policy p) {
    const auto rows = static_cast<std::ptrdiff_t>(k);
    if (p == Policy::kParallel && worth_parallel(m * k * n)) {
#pragma omp parallel for schedule(static)
        for (std::ptrdiff_t r = 0; r < rows; ++r)
            tn_row(a.data(), b.data(), c.data(), static_cast<std::size_t>(r), m, k, n);
        return;
    }
    for (std::size_t r = 0; r < k; ++r) tn_row(a.data(), b.data(), c.data(), r, m, k, n);
}

}  // namespace cocole::kernels
