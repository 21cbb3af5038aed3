#pragma once

// Dense linear-algebra kernels shared by the operators. Every output element
// is reduced in a fixed order that does not depend on the number of rows, so
// a batched evaluation gives bit-identical rows to an unbatched one.

#include <cstddef>
#include <vector>

namespace dyndiff::numerics::kernels {

template <typename T>
inline void axpy(std::size_t n, T a, const T* __restrict x, T* __restrict y) {
  for (std::size_t i = 0; i < n; ++i) y[i] += a * x[i];
}

/// C[M,N] += A[M,K] * B[K,N]
template <typename T>
void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const T* a, std::size_t lda,
             const T* b, std::size_t ldb, T* c, std::size_t ldc) {
  for (std::size_t i = 0; i < m; ++i) {
    const T* arow = a + i * lda;
    T* crow = c + i * ldc;
    for (std::size_t p = 0; p < k; ++p) axpy(n, arow[p], b + p * ldb, crow);
  }
}

/// C[M,N] += A^T * B with A stored [K,M] and B stored [K,N].
template <typename T>
void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const T* a, std::size_t lda,
             const T* b, std::size_t ldb, T* c, std::size_t ldc) {
  for (std::size_t p = 0; p < k; ++p) {
    const T* arow = a + p * lda;
    const T* brow = b + p * ldb;
    for (std::size_t i = 0; i < m; ++i) axpy(n, arow[i], brow, c + i * ldc);
  }
}

/// Returns the [cols, rows] transpose of a row-major [rows, cols] block.
template <typename T>
std::vector<T> transpose(const T* a, std::size_t rows, std::size_t cols) {
  std::vector<T> out(rows * cols);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) out[c * rows + r] = a[r * cols + c];
  return out;
}

}  // namespace dyndiff::numerics::kernels
