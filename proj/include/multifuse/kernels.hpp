#pragma once

#include <complex>
#include <cstddef>
#include <vector>

// Hot inner loops, OpenMP-parallelized over independent output slices.
// Each output element is accumulated by exactly one thread in a fixed
// order, so results are bitwise identical at any thread count. The
// serial reference copies in kernels::serial are kept for testing and
// for the bench_kernels comparison target.

namespace multifuse::kernels {

using isize = std::ptrdiff_t;

// c[m x n] = a[m x k] * b[k x n], all row-major
template <typename T>
void matmul_nn(const T* a, const T* b, T* c, isize m, isize k, isize n) {
#pragma omp parallel for if (m * n * k > 16384)
  for (isize i = 0; i < m; ++i) {
    T* crow = c + i * n;
    for (isize j = 0; j < n; ++j) crow[j] = T(0);
    const T* arow = a + i * k;
    for (isize p = 0; p < k; ++p) {
      const T av = arow[p];
      const T* brow = b + p * n;
      for (isize j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

// c[m x n] = a[m x k] * b[n x k]^T
template <typename T>
void matmul_nt(const T* a, const T* b, T* c, isize m, isize k, isize n) {
#pragma omp parallel for if (m * n * k > 16384)
  for (isize i = 0; i < m; ++i) {
    const T* arow = a + i * k;
    for (isize j = 0; j < n; ++j) {
      const T* brow = b + j * k;
      T acc = T(0);
      for (isize p = 0; p < k; ++p) acc += arow[p] * brow[p];
      c[i * n + j] = acc;
    }
  }
}

// c[m x n] = a[k x m]^T * b[k x n]
template <typename T>
void matmul_tn(const T* a, const T* b, T* c, isize m, isize k, isize n) {
#pragma omp parallel for if (m * n * k > 16384)
  for (isize i = 0; i < m; ++i) {
    T* crow = c + i * n;
    for (isize j = 0; j < n; ++j) crow[j] = T(0);
    for (isize p = 0; p < k; ++p) {
      const T av = a[p * m + i];
      const T* brow = b + p * n;
      for (isize j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

// Bilinear resize, align-corners mapping: destination index j samples the
// source at j*(src-1)/(dst-1), so corner samples are preserved exactly.
template <typename T>
void resize_bilinear(const T* src, isize src_rows, isize src_cols, T* dst, isize dst_rows,
                     isize dst_cols) {
  const double row_scale =
      dst_rows > 1 ? static_cast<double>(src_rows - 1) / static_cast<double>(dst_rows - 1) : 0.0;
  const double col_scale =
      dst_cols > 1 ? static_cast<double>(src_cols - 1) / static_cast<double>(dst_cols - 1) : 0.0;
#pragma omp parallel for if (dst_rows * dst_cols > 4096)
  for (isize r = 0; r < dst_rows; ++r) {
    const double sy = r * row_scale;
    isize y0 = static_cast<isize>(sy);
    if (y0 > src_rows - 2) y0 = src_rows >= 2 ? src_rows - 2 : 0;
    const double fy = sy - static_cast<double>(y0);
    const isize y1 = src_rows >= 2 ? y0 + 1 : y0;
    for (isize cidx = 0; cidx < dst_cols; ++cidx) {
      const double sx = cidx * col_scale;
      isize x0 = static_cast<isize>(sx);
      if (x0 > src_cols - 2) x0 = src_cols >= 2 ? src_cols - 2 : 0;
      const double fx = sx - static_cast<double>(x0);
      const isize x1 = src_cols >= 2 ? x0 + 1 : x0;
      const double v00 = static_cast<double>(src[y0 * src_cols + x0]);
      const double v01 = static_cast<double>(src[y0 * src_cols + x1]);
      const double v10 = static_cast<double>(src[y1 * src_cols + x0]);
      const double v11 = static_cast<double>(src[y1 * src_cols + x1]);
      const double top = v00 + (v01 - v00) * fx;
      const double bot = v10 + (v11 - v10) * fx;
      dst[r * dst_cols + cidx] = static_cast<T>(top + (bot - top) * fy);
    }
  }
}

// In-place iterative radix-2 Cooley-Tukey; n must be a power of two.
void fft_inplace(std::vector<std::complex<double>>& a);

// O(n^2) DFT for non-power-of-two frame lengths.
std::vector<std::complex<double>> dft_naive(const std::vector<std::complex<double>>& a);

inline bool is_pow2(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

namespace serial {

template <typename T>
void matmul_nn(const T* a, const T* b, T* c, isize m, isize k, isize n) {
  for (isize i = 0; i < m; ++i) {
    T* crow = c + i * n;
    for (isize j = 0; j < n; ++j) crow[j] = T(0);
    const T* arow = a + i * k;
    for (isize p = 0; p < k; ++p) {
      const T av = arow[p];
      const T* brow = b + p * n;
      for (isize j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

template <typename T>
void resize_bilinear(const T* src, isize src_rows, isize src_cols, T* dst, isize dst_rows,
                     isize dst_cols) {
  const double row_scale =
      dst_rows > 1 ? static_cast<double>(src_rows - 1) / static_cast<double>(dst_rows - 1) : 0.0;
  const double col_scale =
      dst_cols > 1 ? static_cast<double>(src_cols - 1) / static_cast<double>(dst_cols - 1) : 0.0;
  for (isize r = 0; r < dst_rows; ++r) {
    const double sy = r * row_scale;
    isize y0 = static_cast<isize>(sy);
    if (y0 > src_rows - 2) y0 = src_rows >= 2 ? src_rows - 2 : 0;
    const double fy = sy - static_cast<double>(y0);
    const isize y1 = src_rows >= 2 ? y0 + 1 : y0;
    for (isize cidx = 0; cidx < dst_cols; ++cidx) {
      const double sx = cidx * col_scale;
      isize x0 = static_cast<isize>(sx);
      if (x0 > src_cols - 2) x0 = src_cols >= 2 ? src_cols - 2 : 0;
      const double fx = sx - static_cast<double>(x0);
      const isize x1 = src_cols >= 2 ? x0 + 1 : x0;
      const double v00 = static_cast<double>(src[y0 * src_cols + x0]);
      const double v01 = static_cast<double>(src[y0 * src_cols + x1]);
      const double v10 = static_cast<double>(src[y1 * src_cols + x0]);
      const double v11 = static_cast<double>(src[y1 * src_cols + x1]);
      const double top = v00 + (v01 - v00) * fx;
      const double bot = v10 + (v11 - v10) * fx;
      dst[r * dst_cols + cidx] = static_cast<T>(top + (bot - top) * fy);
    }
  }
}

}  // namespace serial

}  // namespace multifuse::kernels
