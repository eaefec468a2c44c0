#pragma once

#include <cstdint>

namespace pneumoseg::detail {

// Accumulating micro-GEMMs, row-major. Written so the inner loops
// autovectorize; rows of C are split across workers.

// C[M,N] += A[M,K] * B[K,N]
template <typename T>
void gemm_nn(std::int64_t M, std::int64_t N, std::int64_t K,
             const T* A, const T* B, T* C);

// C[M,N] += A[M,K] * B[N,K]^T
template <typename T>
void gemm_nt(std::int64_t M, std::int64_t N, std::int64_t K,
             const T* A, const T* B, T* C);

// C[M,N] += A[K,M]^T * B[K,N]
template <typename T>
void gemm_tn(std::int64_t M, std::int64_t N, std::int64_t K,
             const T* A, const T* B, T* C);

}  // namespace pneumoseg::detail
