// Copyright 2026 The CUCN Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "cucn/tensor.hpp"

// Differentiable tensor operations. Every op records itself on the graph when
// any input requires grad and grad mode is enabled. Outputs are checked for
// non-finite values; a NaN/Inf raises NumericError at the op that produced it.
namespace cucn {

// Elementwise, identical shapes.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, double factor);
Tensor add_scalar(const Tensor& x, double value);

Tensor relu(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor exp(const Tensor& x);
/// Gradient passes where lo <= x <= hi, zero elsewhere.
Tensor clamp(const Tensor& x, double lo, double hi);

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
Tensor reshape(const Tensor& x, Shape shape);

/// [m x k] . [k x n]
Tensor matmul(const Tensor& a, const Tensor& b);
/// [m x k] . [n x k]^T, the layout of a linear layer's weight.
Tensor matmul_nt(const Tensor& a, const Tensor& b);

/// Adds bias[C] along axis 1 of an [N x C] or [N x C x H x W] tensor.
Tensor add_bias(const Tensor& x, const Tensor& bias);

/// input [N x C x H x W], kernel [F x C x k x k]. Output extents must tile
/// exactly: (H + 2*pad - k) % stride == 0.
Tensor conv2d(const Tensor& input, const Tensor& kernel, int stride, int pad);
Tensor max_pool2d(const Tensor& input, int kernel, int stride);
Tensor avg_pool2d(const Tensor& input, int kernel, int stride);

/// [N x C x H x W] -> [N x C]
Tensor global_avg_pool(const Tensor& x);
Tensor global_max_pool(const Tensor& x);
/// [N x C x H x W] -> [N x 1 x H x W]
Tensor channel_mean(const Tensor& x);
Tensor channel_max(const Tensor& x);
Tensor concat_channels(const Tensor& a, const Tensor& b);
/// x[N x C x H x W] * m[N x C], broadcast over H and W.
Tensor scale_channels(const Tensor& x, const Tensor& m);
/// x[N x C x H x W] * m[N x 1 x H x W], broadcast over C.
Tensor scale_spatial(const Tensor& x, const Tensor& m);

/// Row gather: out[i] = x[index[i]] along axis 0.
Tensor index_rows(const Tensor& x, std::span<const std::int64_t> index);

/// Row-wise, max-shifted. Requires [N x C] with C >= 2 and finite logits.
Tensor log_softmax(const Tensor& logits);
/// -(1/N) * sum_n weights[labels[n]] * log_probs[n, labels[n]]
Tensor weighted_nll(const Tensor& log_probs, std::span<const std::int64_t> labels,
                    std::span<const double> weights);

/// Training-mode batch norm over axis 1 of [N x C x H x W]. Returns the
/// normalized output; batch mean and biased variance are written to the
/// optional out-params for running-stat updates.
Tensor batch_norm_train(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps,
                        std::vector<double>* batch_mean = nullptr,
                        std::vector<double>* batch_var = nullptr);
Tensor batch_norm_eval(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                       const Tensor& running_mean, const Tensor& running_var, double eps);

/// Output extent of a sliding window; throws ShapeError when not exact.
std::int64_t window_output_size(std::int64_t in, int kernel, int stride, int pad);

}  // namespace cucn
