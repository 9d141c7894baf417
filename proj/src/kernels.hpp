// Copyright 2026 The CUCN Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cstdint>
#include <utility>
#include <vector>

namespace cucn::kernels {

// C[m x n] += A[m x k] . B[k x n]. Each C[i][j] accumulates over p in
// increasing order, so results do not depend on the blocking below.
template <typename T>
void gemm_acc(std::int64_t m, std::int64_t n, std::int64_t k, const T* a, const T* b, T* c) {
  constexpr std::int64_t kRows = 4;
  constexpr std::int64_t kCols = 64 / sizeof(T) * 4;
  const std::int64_t row_end = m - m % kRows;
  const std::int64_t col_end = n - n % kCols;
  // Column panels outermost so a k x kCols panel of B stays cached.
  for (std::int64_t j = 0; j < col_end; j += kCols)
    for (std::int64_t i = 0; i < row_end; i += kRows) {
      T acc[kRows][kCols];
      for (std::int64_t r = 0; r < kRows; ++r)
        for (std::int64_t q = 0; q < kCols; ++q) acc[r][q] = c[(i + r) * n + j + q];
      for (std::int64_t p = 0; p < k; ++p) {
        const T* bp = b + p * n + j;
        for (std::int64_t r = 0; r < kRows; ++r) {
          const T av = a[(i + r) * k + p];
          for (std::int64_t q = 0; q < kCols; ++q) acc[r][q] += av * bp[q];
        }
      }
      for (std::int64_t r = 0; r < kRows; ++r)
        for (std::int64_t q = 0; q < kCols; ++q) c[(i + r) * n + j + q] = acc[r][q];
    }
  // Remaining columns of the blocked rows, then the remaining rows.
  for (std::int64_t i = 0; i < m; ++i) {
    const std::int64_t first = i < row_end ? col_end : 0;
    if (first == n) continue;
    T* ci = c + i * n;
    const T* ai = a + i * k;
    for (std::int64_t p = 0; p < k; ++p) {
      const T av = ai[p];
      const T* bp = b + p * n;
      for (std::int64_t q = first; q < n; ++q) ci[q] += av * bp[q];
    }
  }
}

// Number of interleaved partial sums used by gemm_nt_acc.
inline constexpr std::int64_t kDotLanes = 16;

// C[m x n] += A[m x k] . B[n x k]^T. Every entry is a fixed-order dot
// product: lane l sums the terms p with p % kDotLanes == l in increasing p,
// then the lanes are added in increasing l. The k range is walked in chunks
// so the rows being combined stay cached; the chunking does not change any
// lane's summation order.
template <typename T>
void gemm_nt_acc(std::int64_t m, std::int64_t n, std::int64_t k, const T* a, const T* b, T* c) {
  constexpr std::int64_t kBlock = 4;
  constexpr std::int64_t kChunk = 512;
  std::vector<T> lanes(static_cast<std::size_t>(m * n * kDotLanes), T(0));
  const std::int64_t row_end = m - m % kBlock;
  const std::int64_t col_end = n - n % kBlock;
  const std::int64_t body = k - k % kDotLanes;
  for (std::int64_t p0 = 0; p0 < body; p0 += kChunk) {
    const std::int64_t p1 = std::min(body, p0 + kChunk);
    for (std::int64_t i = 0; i < row_end; i += kBlock)
      for (std::int64_t j = 0; j < col_end; j += kBlock) {
        T acc[kBlock][kBlock][kDotLanes];
        for (std::int64_t r = 0; r < kBlock; ++r)
          for (std::int64_t s = 0; s < kBlock; ++s)
            for (std::int64_t l = 0; l < kDotLanes; ++l)
              acc[r][s][l] = lanes[((i + r) * n + j + s) * kDotLanes + l];
        for (std::int64_t p = p0; p < p1; p += kDotLanes)
          for (std::int64_t r = 0; r < kBlock; ++r)
            for (std::int64_t s = 0; s < kBlock; ++s)
              for (std::int64_t l = 0; l < kDotLanes; ++l)
                acc[r][s][l] += a[(i + r) * k + p + l] * b[(j + s) * k + p + l];
        for (std::int64_t r = 0; r < kBlock; ++r)
          for (std::int64_t s = 0; s < kBlock; ++s)
            for (std::int64_t l = 0; l < kDotLanes; ++l)
              lanes[((i + r) * n + j + s) * kDotLanes + l] = acc[r][s][l];
      }
  }
  for (std::int64_t i = 0; i < m; ++i)
    for (std::int64_t j = 0; j < n; ++j) {
      T* lane = lanes.data() + (i * n + j) * kDotLanes;
      const T* ai = a + i * k;
      const T* bj = b + j * k;
      const bool blocked = i < row_end && j < col_end;
      for (std::int64_t p = blocked ? body : 0; p < body; p += kDotLanes)
        for (std::int64_t l = 0; l < kDotLanes; ++l) lane[l] += ai[p + l] * bj[p + l];
      for (std::int64_t l = 0; body + l < k; ++l) lane[l] += ai[body + l] * bj[body + l];
      T sum = T(0);
      for (std::int64_t l = 0; l < kDotLanes; ++l) sum += lane[l];
      c[i * n + j] += sum;
    }
}

template <typename T>
std::vector<T> transpose(const T* src, std::int64_t rows, std::int64_t cols) {
  std::vector<T> out(static_cast<std::size_t>(rows * cols));
  for (std::int64_t r = 0; r < rows; ++r)
    for (std::int64_t c = 0; c < cols; ++c) out[c * rows + r] = src[r * cols + c];
  return out;
}

struct ConvGeometry {
  std::int64_t batch, channels, height, width;
  std::int64_t kernel, stride, pad;
  std::int64_t out_h, out_w;

  std::int64_t patch() const { return channels * kernel * kernel; }
  std::int64_t positions() const { return batch * out_h * out_w; }
};

// Output columns [lo, hi) whose input column ow*stride - pad + kj is in range.
inline std::pair<std::int64_t, std::int64_t> valid_columns(const ConvGeometry& g, std::int64_t kj) {
  std::int64_t lo = 0, hi = g.out_w;
  while (lo < hi && lo * g.stride - g.pad + kj < 0) ++lo;
  while (hi > lo && (hi - 1) * g.stride - g.pad + kj >= g.width) --hi;
  return {lo, hi};
}

// col[(c, ki, kj), (n, oh, ow)] for the whole batch.
template <typename T>
void im2col(const ConvGeometry& g, const T* input, T* col) {
  const std::int64_t cols = g.positions();
  for (std::int64_t c = 0; c < g.channels; ++c)
    for (std::int64_t ki = 0; ki < g.kernel; ++ki)
      for (std::int64_t kj = 0; kj < g.kernel; ++kj) {
        T* row = col + ((c * g.kernel + ki) * g.kernel + kj) * cols;
        const auto [lo, hi] = valid_columns(g, kj);
        for (std::int64_t n = 0; n < g.batch; ++n) {
          const T* plane = input + (n * g.channels + c) * g.height * g.width;
          for (std::int64_t oh = 0; oh < g.out_h; ++oh) {
            const std::int64_t ih = oh * g.stride - g.pad + ki;
            T* dst = row + (n * g.out_h + oh) * g.out_w;
            if (ih < 0 || ih >= g.height) {
              std::fill(dst, dst + g.out_w, T(0));
              continue;
            }
            std::fill(dst, dst + lo, T(0));
            const std::int64_t base = ih * g.width - g.pad + kj;
            if (g.stride == 1) {
              std::copy(plane + base + lo, plane + base + hi, dst + lo);
            } else {
              for (std::int64_t ow = lo; ow < hi; ++ow) dst[ow] = plane[base + ow * g.stride];
            }
            std::fill(dst + hi, dst + g.out_w, T(0));
          }
        }
      }
}

template <typename T>
void col2im_acc(const ConvGeometry& g, const T* col, T* input_grad) {
  const std::int64_t cols = g.positions();
  for (std::int64_t c = 0; c < g.channels; ++c)
    for (std::int64_t ki = 0; ki < g.kernel; ++ki)
      for (std::int64_t kj = 0; kj < g.kernel; ++kj) {
        const T* row = col + ((c * g.kernel + ki) * g.kernel + kj) * cols;
        const auto [lo, hi] = valid_columns(g, kj);
        for (std::int64_t n = 0; n < g.batch; ++n) {
          T* plane = input_grad + (n * g.channels + c) * g.height * g.width;
          for (std::int64_t oh = 0; oh < g.out_h; ++oh) {
            const std::int64_t ih = oh * g.stride - g.pad + ki;
            if (ih < 0 || ih >= g.height) continue;
            const T* src = row + (n * g.out_h + oh) * g.out_w;
            const std::int64_t base = ih * g.width - g.pad + kj;
            for (std::int64_t ow = lo; ow < hi; ++ow) plane[base + ow * g.stride] += src[ow];
          }
        }
      }
}

}  // namespace cucn::kernels
