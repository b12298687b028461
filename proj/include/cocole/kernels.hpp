#pragma once

#include <cstddef>
#include <span>

namespace cocole::kernels {

// Dense row-major float-64 kernels. Each kernel exists in a serial reference
// form and an OpenMP form; the OpenMP form partitions output rows across
// threads, so every output element is summed in the same order by exactly one
// thread and the two forms agree bit-for-bit.

enum class Policy { kSerial, kParallel };

// Process-wide default used by the tensor ops. Parallel is the default; the
// serial form is kept for testing and benchmarking.
void set_policy(Policy policy);
Policy policy();

// Work (m*k*n multiply-adds) below which the parallel form runs serially to
// avoid fork/join overhead on tiny matrices.
inline constexpr std::size_t kParallelThreshold = 32 * 1024;

// C[m x n] += A[m x k] * B[k x n]
void gemm_nn(std::span<const double> a, std::span<const double> b, std::span<double> c,
             std::size_t m, std::size_t k, std::size_t n, Policy p);
// C[m x k] += A[m x n] * B[k x n]^T
void gemm_nt(std::span<const double> a, std::span<const double> b, std::span<double> c,
             std::size_t m, std::size_t n, std::size_t k, Policy p);
// C[k x n] += A[m x k]^T * B[m x n]
void gemm_tn(std::span<const double> a, std::span<const double> b, std::span<double> c,
             std::size_t m, std::size_t k, std::size_t n, Policy p);

inline void gemm_nn(std::span<const double> a, std::span<const double> b, std::span<double> c,
                    std::size_t m, std::size_t k, std::size_t n) {
    gemm_nn(a, b, c, m, k, n, policy());
}
inline void gemm_nt(std::span<const double> a, std::span<const double> b, std::span<double> c,
                    std::size_t m, std::size_t n, std::size_t k) {
    gemm_nt(a, b, c, m, n, k, policy());
}
inline void gemm_tn(std::span<const double> a, std::span<const double> b, std::span<double> c,
                    std::size_t m, std::size_t k, std::size_t n) {
    gemm_tn(a, b, c, m, k, n, policy());
}

// Number of threads the parallel policy will use.
int max_threads();

}  // namespace cocole::kernels
