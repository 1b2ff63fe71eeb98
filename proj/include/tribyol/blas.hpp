#pragma once

#include <cstddef>

#include <cblas.h>

namespace tribyol {

// Row-major C = alpha * op(A) * op(B) + beta * C.
// a is m x k (or k x m when trans_a), b is k x n (or n x k when trans_b).
inline void gemm(bool trans_a, bool trans_b, int m, int n, int k, float alpha,
                 const float* a, int lda, const float* b, int ldb, float beta,
                 float* c, int ldc) {
    cblas_sgemm(CblasRowMajor, trans_a ? CblasTrans : CblasNoTrans,
                trans_b ? CblasTrans : CblasNoTrans, m, n, k, alpha, a, lda, b, ldb,
                beta, c, ldc);
}

// Cap BLAS threading. Concurrent training runs (acceptance/eval grids) set
// this to 1 and parallelize across runs instead.
inline void set_blas_threads(int n) { openblas_set_num_threads(n); }

} // namespace tribyol
