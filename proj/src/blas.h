#ifndef ONESHOT_SRC_BLAS_H_
#define ONESHOT_SRC_BLAS_H_

#include <cstddef>

namespace oneshot::nn::detail {

// Row-major C = alpha * op(A) * op(B) + beta * C, op(A): m x k, op(B): k x n.
void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n,
          std::size_t k, double alpha, const double *a, std::size_t lda,
          const double *b, std::size_t ldb, double beta, double *c,
          std::size_t ldc);

}  // namespace oneshot::nn::detail

#endif  // ONESHOT_SRC_BLAS_H_
