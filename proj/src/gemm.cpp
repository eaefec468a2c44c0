#include "pneumoseg/gemm.hpp"

#include "pneumoseg/parallel.hpp"

namespace pneumoseg::detail {

template <typename T>
void gemm_nn(std::int64_t M, std::int64_t N, std::int64_t K,
             const T* A, const T* B, T* C) {
    parallel_for(0, M, [=](std::int64_t lo, std::int64_t hi) {
        for (std::int64_t i = lo; i < hi; ++i) {
            T* c = C + i * N;
            const T* a = A + i * K;
            for (std::int64_t k = 0; k < K; ++k) {
                const T aik = a[k];
                if (aik == T(0)) continue;
                const T* b = B + k * N;
                for (std::int64_t j = 0; j < N; ++j) c[j] += aik * b[j];
            }
        }
    });
}

template <typename T>
void gemm_nt(std::int64_t M, std::int64_t N, std::int64_t K,
             const T* A, const T* B, T* C) {
    parallel_for(0, M, [=](std::int64_t lo, std::int64_t hi) {
        for (std::int64_t i = lo; i < hi; ++i) {
            const T* a = A + i * K;
            T* c = C + i * N;
            for (std::int64_t j = 0; j < N; ++j) {
                const T* b = B + j * K;
                T acc = T(0);
                for (std::int64_t k = 0; k < K; ++k) acc += a[k] * b[k];
                c[j] += acc;
            }
        }
    });
}

template <typename T>
void gemm_tn(std::int64_t M, std::int64_t N, std::int64_t K,
             const T* A, const T* B, T* C) {
    parallel_for(0, M, [=](std::int64_t lo, std::int64_t hi) {
        for (std::int64_t i = lo; i < hi; ++i) {
            T* c = C + i * N;
            for (std::int64_t k = 0; k < K; ++k) {
                const T aki = A[k * M + i];
                if (aki == T(0)) continue;
                const T* b = B + k * N;
                for (std::int64_t j = 0; j < N; ++j) c[j] += aki * b[j];
            }
        }
    });
}

template void gemm_nn(std::int64_t, std::int64_t, std::int64_t, const float*, const float*, float*);
template void gemm_nn(std::int64_t, std::int64_t, std::int64_t, const double*, const double*, double*);
template void gemm_nt(std::int64_t, std::int64_t, std::int64_t, const float*, const float*, float*);
template void gemm_nt(std::int64_t, std::int64_t, std::int64_t, const double*, const double*, double*);
template void gemm_tn(std::int64_t, std::int64_t, std::int64_t, const float*, const float*, float*);
template void gemm_tn(std::int64_t, std::int64_t, std::int64_t, const double*, const double*, double*);

}  // namespace pneumoseg::detail
