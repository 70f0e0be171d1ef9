#pragma once

// Dense inner loops used by the autograd ops. Every kernel exists twice: a
// plain serial reference and an OpenMP version with identical per-element
// arithmetic order, so the two agree bitwise. The ops call `parallel::`; the
// serial variants stay for tests and the benchmark.

#include <cstddef>
#include <span>

namespace poseforge::kernels {

// Layout conventions (row-major):
//   gemm:        A[m,k] * B[k,n] -> C[m,n]
//   pair_logits: Q[n,h,c], K[n,h,c] -> L[n,n,h]
//   attend:      P[n,n,h], V[n,h,c] -> O[n,h,c]
//   softmax:     X viewed as [outer, len, inner], normalized along len

namespace serial {

// C += A * B
void gemm_nn(std::span<const double> a, std::span<const double> b, std::span<double> c,
             std::size_t m, std::size_t k, std::size_t n);
// C[m,k] += G[m,n] * B[k,n]^T
void gemm_nt(std::span<const double> g, std::span<const double> b, std::span<double> c,
             std::size_t m, std::size_t k, std::size_t n);
// C[k,n] += A[m,k]^T * G[m,n]
void gemm_tn(std::span<const double> a, std::span<const double> g, std::span<double> c,
             std::size_t m, std::size_t k, std::size_t n);

void pair_logits(std::span<const double> q, std::span<const double> k, std::span<double> out,
                 std::size_t rows, std::size_t cols, std::size_t heads, std::size_t width,
                 double scale);
void attend(std::span<const double> p, std::span<const double> v, std::span<double> out,
            std::size_t rows, std::size_t cols, std::size_t heads, std::size_t width);

void softmax(std::span<const double> x, std::span<double> y, std::size_t outer, std::size_t len,
             std::size_t inner);
// Writes normalized rows to xhat and the per-row 1/sqrt(var+eps) to inv_std.
void layer_norm(std::span<const double> x, std::span<double> xhat, std::span<double> inv_std,
                std::size_t rows, std::size_t width, double eps);

}  // namespace serial

namespace parallel {

void gemm_nn(std::span<const double> a, std::span<const double> b, std::span<double> c,
             std::size_t m, std::size_t k, std::size_t n);
void gemm_nt(std::span<const double> g, std::span<const double> b, std::span<double> c,
             std::size_t m, std::size_t k, std::size_t n);
void gemm_tn(std::span<const double> a, std::span<const double> g, std::span<double> c,
             std::size_t m, std::size_t k, std::size_t n);

void pair_logits(std::span<const double> q, std::span<const double> k, std::span<double> out,
                 std::size_t rows, std::size_t cols, std::size_t heads, std::size_t width,
                 double scale);
void attend(std::span<const double> p, std::span<const double> v, std::span<double> out,
            std::size_t rows, std::size_t cols, std::size_t heads, std::size_t width);

void softmax(std::span<const double> x, std::span<double> y, std::size_t outer, std::size_t len,
             std::size_t inner);
void layer_norm(std::span<const double> x, std::span<double> xhat, std::span<double> inv_std,
                std::size_t rows, std::size_t width, double eps);

}  // namespace parallel

// Number of OpenMP threads the parallel kernels may use (1 without OpenMP).
int max_threads();
// True while executing inside an enclosing OpenMP parallel region; kernels
// then run serially to avoid oversubscription.
bool in_parallel_region();

}  // namespace poseforge::kernels
