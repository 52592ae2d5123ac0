#pragma once

#include <cstdint>

namespace surgseg {

// Accumulating dense kernels, C += op(A) * op(B). Row-major, no aliasing.
// Fixed loop order keeps results bit-reproducible across runs.

// C(M,N) += A(M,K) * B(K,N)
void gemm_nn(const double* a, const double* b, double* c, int64_t m, int64_t k, int64_t n);

// C(M,N) += A(K,M)^T * B(K,N)
void gemm_tn(const double* a, const double* b, double* c, int64_t m, int64_t k, int64_t n);

// C(M,N) += A(M,K) * B(N,K)^T
void gemm_nt(const double* a, const double* b, double* c, int64_t m, int64_t k, int64_t n);

}  // namespace surgseg
