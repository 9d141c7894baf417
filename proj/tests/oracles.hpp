// Copyright 2026 The CUCN Authors
// SPDX-License-Identifier: Apache-2.0

// Independent reference computations used by the tests. Everything here is
// written as plain loops over std::vector<double> and shares no code with the
// library kernels.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "cucn/tensor.hpp"

namespace oracle {

using Vec = std::vector<double>;

inline cucn::Tensor random_tensor(const cucn::Shape& shape, std::mt19937_64& rng,
                                  cucn::DType dtype = cucn::DType::f64, double lo = -1.0,
                                  double hi = 1.0) {
  std::uniform_real_distribution<double> dist(lo, hi);
  Vec v(static_cast<std::size_t>(cucn::numel(shape)));
  for (auto& x : v) x = dist(rng);
  return cucn::Tensor::from_values(shape, v, dtype);
}

inline Vec matmul(const Vec& a, const Vec& b, std::int64_t m, std::int64_t k, std::int64_t n) {
  Vec c(static_cast<std::size_t>(m * n), 0.0);
  for (std::int64_t i = 0; i < m; ++i)
    for (std::int64_t j = 0; j < n; ++j) {
      double s = 0;
      for (std::int64_t p = 0; p < k; ++p) s += a[i * k + p] * b[p * n + j];
      c[i * n + j] = s;
    }
  return c;
}

// Direct convolution: six nested loops over (n, f, oh, ow, c, ki, kj).
inline Vec conv2d(const Vec& x, const Vec& w, std::int64_t N, std::int64_t C, std::int64_t H,
                  std::int64_t W, std::int64_t F, std::int64_t K, std::int64_t stride,
                  std::int64_t pad, std::int64_t& OH, std::int64_t& OW) {
  OH = (H + 2 * pad - K) / stride + 1;
  OW = (W + 2 * pad - K) / stride + 1;
  Vec out(static_cast<std::size_t>(N * F * OH * OW), 0.0);
  for (std::int64_t n = 0; n < N; ++n)
    for (std::int64_t f = 0; f < F; ++f)
      for (std::int64_t oh = 0; oh < OH; ++oh)
        for (std::int64_t ow = 0; ow < OW; ++ow) {
          double s = 0;
          for (std::int64_t c = 0; c < C; ++c)
            for (std::int64_t ki = 0; ki < K; ++ki)
              for (std::int64_t kj = 0; kj < K; ++kj) {
                const auto ih = oh * stride - pad + ki;
                const auto iw = ow * stride - pad + kj;
                if (ih < 0 || ih >= H || iw < 0 || iw >= W) continue;
                s += x[((n * C + c) * H + ih) * W + iw] * w[((f * C + c) * K + ki) * K + kj];
              }
          out[((n * F + f) * OH + oh) * OW + ow] = s;
        }
  return out;
}

inline double log_sum_exp(const Vec& row) {
  const double m = *std::max_element(row.begin(), row.end());
  double s = 0;
  for (const double v : row) s += std::exp(v - m);
  return m + std::log(s);
}

// -(1/N) sum_n w[y_n] * log softmax(z_n)[y_n], computed row by row.
inline double weighted_ce(const Vec& logits, std::int64_t n, std::int64_t classes,
                          const std::vector<std::int64_t>& labels, const Vec& weights) {
  double total = 0;
  for (std::int64_t i = 0; i < n; ++i) {
    Vec row(logits.begin() + i * classes, logits.begin() + (i + 1) * classes);
    total += weights[labels[i]] * (row[labels[i]] - log_sum_exp(row));
  }
  return -total / static_cast<double>(n);
}

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

inline double max_abs_diff(const Vec& a, const Vec& b) {
  double m = 0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return a.size() == b.size() ? m : INFINITY;
}

inline std::filesystem::path temp_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("cucn_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace oracle
