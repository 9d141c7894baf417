// Copyright 2026 The CUCN Authors
// SPDX-License-Identifier: Apache-2.0

#include "cucn/cbam.hpp"

#include <algorithm>

namespace cucn::nn {

void CbamConfig::validate() const {
  if (reduction_ratio < 1) throw Error("cbam: reduction_ratio must be >= 1");
  if (spatial_kernel < 1 || spatial_kernel % 2 == 0)
    throw Error("cbam: spatial_kernel must be a positive odd number");
}

std::int64_t CbamConfig::hidden_width(std::int64_t channels) const {
  return std::max<std::int64_t>(1, channels / reduction_ratio);
}

ChannelAttention ChannelAttention::create(std::int64_t channels, const CbamConfig& config,
                                          Rng& rng, DType dtype) {
  config.validate();
  const auto hidden = config.hidden_width(channels);
  return {Linear::create(channels, hidden, true, rng, dtype),
          Linear::create(hidden, channels, true, rng, dtype)};
}

SpatialAttention SpatialAttention::create(const CbamConfig& config, Rng& rng, DType dtype) {
  config.validate();
  const int k = config.spatial_kernel;
  SpatialAttention sa;
  sa.weight = kaiming_init({1, 2, k, k}, 2 * k * k, rng, dtype);
  sa.bias = Tensor::zeros({1}, dtype).set_requires_grad(true);
  return sa;
}

Cbam Cbam::create(std::int64_t channels, const CbamConfig& config, Rng& rng, DType dtype) {
  return {ChannelAttention::create(channels, config, rng, dtype),
          SpatialAttention::create(config, rng, dtype)};
}

void Cbam::zero() {
  for (Tensor* t : {&channel.fc1.weight, &channel.fc1.bias, &channel.fc2.weight,
                    &channel.fc2.bias, &spatial.weight, &spatial.bias})
    t->copy_from(Tensor::zeros(t->shape(), t->dtype()));
}

void Cbam::collect(const std::string& prefix, LayerParams& out) const {
  channel.fc1.collect(prefix + ".ca.fc1", out);
  channel.fc2.collect(prefix + ".ca.fc2", out);
  out.add(prefix + ".sa.weight", spatial.weight, true);
  out.add(prefix + ".sa.bias", spatial.bias, true);
}

Tensor channel_attention(const Tensor& features, const ChannelAttention& params) {
  if (features.ndim() != 4 || features.dim(1) != params.fc1.weight.dim(1))
    throw ShapeError("channel_attention: features " + shape_str(features.shape()) +
                     " do not match MLP input width " +
                     std::to_string(params.fc1.weight.dim(1)));
  auto mlp = [&](const Tensor& d) { return params.fc2.forward(relu(params.fc1.forward(d))); };
  return sigmoid(add(mlp(global_avg_pool(features)), mlp(global_max_pool(features))));
}

Tensor spatial_attention(const Tensor& features, const SpatialAttention& params) {
  const int k = params.kernel();
  if (k % 2 == 0) throw ShapeError("spatial_attention: kernel must be odd");
  const Tensor pooled = concat_channels(channel_mean(features), channel_max(features));
  return sigmoid(add_bias(conv2d(pooled, params.weight, 1, k / 2), params.bias));
}

Tensor cbam_apply(const Tensor& features, const Cbam& params) {
  const Tensor refined = scale_channels(features, channel_attention(features, params.channel));
  return scale_spatial(refined, spatial_attention(refined, params.spatial));
}

BasicBlock BasicBlock::create(std::int64_t in, std::int64_t out, bool downsample, bool with_cbam,
                              const CbamConfig& config, Rng& rng, DType dtype) {
  BasicBlock b;
  b.downsample = downsample;
  b.conv1 = Conv2d::create(in, out, 3, 1, 1, rng, dtype);
  b.bn1 = BatchNorm2d::create(out, dtype);
  b.conv2 = Conv2d::create(out, out, 3, 1, 1, rng, dtype);
  b.bn2 = BatchNorm2d::create(out, dtype);
  if (downsample || in != out) {
    b.proj = Conv2d::create(in, out, 1, 1, 0, rng, dtype);
    b.proj_bn = BatchNorm2d::create(out, dtype);
  }
  if (with_cbam) b.cbam = Cbam::create(out, config, rng, dtype);
  return b;
}

void BasicBlock::collect(const std::string& prefix, LayerParams& out) const {
  conv1.collect(prefix + ".conv1", out);
  bn1.collect(prefix + ".bn1", out);
  conv2.collect(prefix + ".conv2", out);
  bn2.collect(prefix + ".bn2", out);
  if (proj) proj->collect(prefix + ".shortcut.conv", out);
  if (proj_bn) proj_bn->collect(prefix + ".shortcut.bn", out);
  if (cbam) cbam->collect(prefix + ".cbam", out);
}

Tensor basic_block_cbam_forward(const Tensor& x, BasicBlock& block, Mode mode, bool cbam_on) {
  if (x.ndim() != 4 || x.dim(1) != block.in_channels())
    throw ShapeError("basic block: input " + shape_str(x.shape()) + " but block expects " +
                     std::to_string(block.in_channels()) + " channels");
  if (cbam_on && !block.cbam) throw Error("basic block: CBAM requested but block has none");
  const Tensor in = block.downsample ? avg_pool2d(x, 2, 2) : x;
  Tensor branch = relu(block.bn1.forward(block.conv1.forward(in), mode));
  branch = block.bn2.forward(block.conv2.forward(branch), mode);
  if (cbam_on) branch = cbam_apply(branch, *block.cbam);
  const Tensor shortcut = block.proj ? block.proj_bn->forward(block.proj->forward(in), mode) : in;
  if (shortcut.shape() != branch.shape())
    throw ShapeError("basic block: branch " + shape_str(branch.shape()) + " vs shortcut " +
                     shape_str(shortcut.shape()));
  return relu(add(shortcut, branch));
}

}  // namespace cucn::nn
