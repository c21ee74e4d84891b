#pragma once

#include <vector>

// Tight matmul loops shared by dense and im2col convolution. All kernels
// accumulate into c, which the caller must size and zero. Loop nests keep the
// innermost index contiguous on both the read and write side so the compiler
// can vectorize without reassociating reductions.

namespace diffcore::kernels {

// c[M,N] += a[M,K] * b[K,N]
inline void mm(const double* a, const double* b, double* c, int m, int k, int n) {
  for (int i = 0; i < m; ++i) {
    const double* arow = a + static_cast<std::size_t>(i) * k;
    double* crow = c + static_cast<std::size_t>(i) * n;
    for (int kk = 0; kk < k; ++kk) {
      const double aik = arow[kk];
      const double* brow = b + static_cast<std::size_t>(kk) * n;
      for (int j = 0; j < n; ++j) crow[j] += aik * brow[j];
    }
  }
}

// c[K,N] += a^T * b  with a[M,K], b[M,N]
inline void mm_at_b(const double* a, const double* b, double* c, int m, int k, int n) {
  for (int i = 0; i < m; ++i) {
    const double* arow = a + static_cast<std::size_t>(i) * k;
    const double* brow = b + static_cast<std::size_t>(i) * n;
    for (int kk = 0; kk < k; ++kk) {
      const double aik = arow[kk];
      double* crow = c + static_cast<std::size_t>(kk) * n;
      for (int j = 0; j < n; ++j) crow[j] += aik * brow[j];
    }
  }
}

// out[N,M] = a[M,N] transposed
inline std::vector<double> transpose(const double* a, int m, int n) {
  std::vector<double> out(static_cast<std::size_t>(m) * n);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j)
      out[static_cast<std::size_t>(j) * m + i] = a[static_cast<std::size_t>(i) * n + j];
  return out;
}

}  // namespace diffcore::kernels
