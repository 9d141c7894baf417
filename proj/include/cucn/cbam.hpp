// Copyright 2026 The CUCN Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <optional>

#include "cucn/nn.hpp"

namespace cucn::nn {

struct CbamConfig {
  int reduction_ratio = 16;
  int spatial_kernel = 7;

  void validate() const;
  /// Width of the shared channel MLP: max(1, channels / reduction_ratio).
  std::int64_t hidden_width(std::int64_t channels) const;
};

/// Shared two-layer MLP applied to the average- and max-pooled channel
/// descriptors.
struct ChannelAttention {
  Linear fc1;  // C -> hidden
  Linear fc2;  // hidden -> C

  static ChannelAttention create(std::int64_t channels, const CbamConfig& config, Rng& rng,
                                 DType dtype = DType::f32);
};

struct SpatialAttention {
  Tensor weight;  // [1 x 2 x k x k]
  Tensor bias;    // [1]

  static SpatialAttention create(const CbamConfig& config, Rng& rng, DType dtype = DType::f32);
  int kernel() const { return static_cast<int>(weight.dim(2)); }
};

struct Cbam {
  ChannelAttention channel;
  SpatialAttention spatial;

  static Cbam create(std::int64_t channels, const CbamConfig& config, Rng& rng,
                     DType dtype = DType::f32);
  /// Zeroes every attention weight and bias, making both maps 0.5.
  void zero();
  void collect(const std::string& prefix, LayerParams& out) const;
};

/// M_c = sigmoid(mlp(avgpool(F)) + mlp(maxpool(F))), shape [N x C].
Tensor channel_attention(const Tensor& features, const ChannelAttention& params);
/// M_s = sigmoid(conv([mean_c(F); max_c(F)]) + b), shape [N x 1 x H x W].
Tensor spatial_attention(const Tensor& features, const SpatialAttention& params);
/// Channel attention, then spatial attention on the rescaled features.
Tensor cbam_apply(const Tensor& features, const Cbam& params);

/// ResNet basic block. Downsampling blocks halve H and W with a 2x2 average
/// pool at the head of both the residual branch and the projection shortcut,
/// so every window tiles exactly. CBAM, when present, rescales the residual
/// branch after the second batch norm and before the shortcut addition.
struct BasicBlock {
  Conv2d conv1;
  BatchNorm2d bn1;
  Conv2d conv2;
  BatchNorm2d bn2;
  bool downsample = false;
  std::optional<Conv2d> proj;
  std::optional<BatchNorm2d> proj_bn;
  std::optional<Cbam> cbam;

  static BasicBlock create(std::int64_t in, std::int64_t out, bool downsample, bool with_cbam,
                           const CbamConfig& config, Rng& rng, DType dtype = DType::f32);
  std::int64_t in_channels() const { return conv1.weight.dim(1); }
  void collect(const std::string& prefix, LayerParams& out) const;
};

/// relu(shortcut(x) + cbam(bn2(conv2(relu(bn1(conv1(x))))))); with cbam_on false
/// the CBAM stage is skipped and this is a plain basic block.
Tensor basic_block_cbam_forward(const Tensor& x, BasicBlock& block, Mode mode, bool cbam_on);

}  // namespace cucn::nn
