#pragma once

#include <algorithm>
#include <cstddef>
#include <vector>

namespace laneil::nn {

#if defined(__AVX512F__)
inline constexpr std::size_t kVectorBytes = 64;
#else
inline constexpr std::size_t kVectorBytes = 32;
#endif

namespace detail {
template <typename T>
struct Vec;
template <>
struct Vec<float> {
  typedef float type __attribute__((vector_size(kVectorBytes)));
  typedef float unaligned __attribute__((vector_size(kVectorBytes), aligned(4), may_alias));
};
template <>
struct Vec<double> {
  typedef double type __attribute__((vector_size(kVectorBytes)));
  typedef double unaligned __attribute__((vector_size(kVectorBytes), aligned(8), may_alias));
};
}  // namespace detail

// C[M x N] += A[M x K] * B[K x N], all row-major with explicit leading dimensions.
// B is packed one column panel at a time; each 6-row by 2-vector accumulator
// tile stays in registers. Summation order over K is fixed, so results are
// bit-reproducible for a given build.
template <typename T>
void gemm_acc(std::size_t M, std::size_t N, std::size_t K, const T* A, std::size_t lda, const T* B, std::size_t ldb,
              T* C, std::size_t ldc) {
  using V = typename detail::Vec<T>::type;
  constexpr std::size_t kRows = 6;
  constexpr std::size_t kVecs = 2;
  constexpr std::size_t kWidth = kVecs * kVectorBytes / sizeof(T);
  constexpr std::size_t kDepth = 256;
  if (K > kDepth) {
    // Long inner dimension: accumulate depth slices in a fixed order.
    for (std::size_t k0 = 0; k0 < K; k0 += kDepth) {
      const std::size_t kc = std::min(kDepth, K - k0);
      gemm_acc(M, N, kc, A + k0, lda, B + k0 * ldb, ldb, C, ldc);
    }
    return;
  }
  thread_local std::vector<V> panel;
  panel.resize(K * kVecs);
  for (std::size_t j = 0; j < N; j += kWidth) {
    const std::size_t w = std::min(kWidth, N - j);
    for (std::size_t k = 0; k < K; ++k) {
      T* p = reinterpret_cast<T*>(panel.data() + k * kVecs);
      const T* b = B + k * ldb + j;
      std::size_t jj = 0;
      for (; jj < w; ++jj) p[jj] = b[jj];
      for (; jj < kWidth; ++jj) p[jj] = T{0};
    }
    const V* pb = panel.data();
    for (std::size_t i = 0; i < M; i += kRows) {
      const std::size_t rows = std::min(kRows, M - i);
      // short tiles repeat the last row; its results are discarded
      const T* a[kRows];
      for (std::size_t r = 0; r < kRows; ++r) a[r] = A + (i + std::min(r, rows - 1)) * lda;
      V acc[kRows][kVecs] = {};
      for (std::size_t k = 0; k < K; ++k) {
        const V* b = pb + k * kVecs;
        for (std::size_t r = 0; r < kRows; ++r) {
          const T s = a[r][k];
          for (std::size_t v = 0; v < kVecs; ++v) acc[r][v] += s * b[v];
        }
      }
      for (std::size_t r = 0; r < rows; ++r) {
        T* c = C + (i + r) * ldc + j;
        const T* src = reinterpret_cast<const T*>(acc[r]);
        for (std::size_t jj = 0; jj < w; ++jj) c[jj] += src[jj];
      }
    }
  }
}

// C[M x N] += A[M x K] * B[N x K]^T: dot products of rows, so neither
// operand needs transposing. 4 x 4 tiles of vector partial sums are reduced
// lane by lane in a fixed order.
template <typename T>
void gemm_nt_acc(std::size_t M, std::size_t N, std::size_t K, const T* A, std::size_t lda, const T* B, std::size_t ldb,
                 T* C, std::size_t ldc) {
  using V = typename detail::Vec<T>::type;
  using U = typename detail::Vec<T>::unaligned;
  constexpr std::size_t kLanes = kVectorBytes / sizeof(T);
  constexpr std::size_t kTile = 4;
  constexpr std::size_t kDepth = 1024 / sizeof(T) * 2;
  if (K > kDepth) {
    // depth slices keep a slab of B cache-resident across all rows of A
    for (std::size_t k0 = 0; k0 < K; k0 += kDepth)
      gemm_nt_acc(M, N, std::min(kDepth, K - k0), A + k0, lda, B + k0, ldb, C, ldc);
    return;
  }
  const std::size_t kv = K - K % kLanes;
  for (std::size_t i = 0; i < M; i += kTile) {
    const std::size_t mi = std::min(kTile, M - i);
    const T* a[kTile];
    for (std::size_t r = 0; r < kTile; ++r) a[r] = A + (i + std::min(r, mi - 1)) * lda;
    for (std::size_t j = 0; j < N; j += kTile) {
      const std::size_t nj = std::min(kTile, N - j);
      const T* b[kTile];
      for (std::size_t r = 0; r < kTile; ++r) b[r] = B + (j + std::min(r, nj - 1)) * ldb;
      V acc[kTile][kTile] = {};
      for (std::size_t k = 0; k < kv; k += kLanes) {
        V va[kTile], vb[kTile];
        for (std::size_t r = 0; r < kTile; ++r) {
          va[r] = *reinterpret_cast<const U*>(a[r] + k);
          vb[r] = *reinterpret_cast<const U*>(b[r] + k);
        }
        for (std::size_t r = 0; r < kTile; ++r)
          for (std::size_t q = 0; q < kTile; ++q) acc[r][q] += va[r] * vb[q];
      }
      for (std::size_t r = 0; r < mi; ++r)
        for (std::size_t q = 0; q < nj; ++q) {
          T sum{0};
          for (std::size_t l = 0; l < kLanes; ++l) sum += acc[r][q][l];
          for (std::size_t k = kv; k < K; ++k) sum += a[r][k] * b[q][k];
          C[(i + r) * ldc + j + q] += sum;
        }
    }
  }
}

// out[cols x rows] = in[rows x cols]^T
template <typename T>
void transpose(std::size_t rows, std::size_t cols, const T* in, T* out) {
  constexpr std::size_t kBlock = 32;
  for (std::size_t r0 = 0; r0 < rows; r0 += kBlock) {
    const std::size_t r1 = std::min(rows, r0 + kBlock);
    for (std::size_t c0 = 0; c0 < cols; c0 += kBlock) {
      const std::size_t c1 = std::min(cols, c0 + kBlock);
      for (std::size_t r = r0; r < r1; ++r)
        for (std::size_t c = c0; c < c1; ++c) out[c * rows + r] = in[r * cols + c];
    }
  }
}

}  // namespace laneil::nn
