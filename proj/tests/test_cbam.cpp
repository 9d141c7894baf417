// Copyright 2026 The CUCN Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>

#include "cucn/cbam.hpp"
#include "cucn/gradcheck.hpp"
#include "oracles.hpp"

using namespace cucn;
using namespace cucn::nn;

namespace {

// pool -> MLP -> sum -> sigmoid, each step by hand.
oracle::Vec channel_attention_oracle(const Tensor& f, const ChannelAttention& ca) {
  const auto n = f.dim(0), c = f.dim(1), hw = f.dim(2) * f.dim(3);
  const auto fv = f.to_vector();
  const auto w1 = ca.fc1.weight.to_vector(), b1 = ca.fc1.bias.to_vector();
  const auto w2 = ca.fc2.weight.to_vector(), b2 = ca.fc2.bias.to_vector();
  const auto hidden = ca.fc1.weight.dim(0);
  auto mlp = [&](const oracle::Vec& d) {
    oracle::Vec h(hidden), out(c);
    for (int j = 0; j < hidden; ++j) {
      double s = b1[j];
      for (int i = 0; i < c; ++i) s += w1[j * c + i] * d[i];
      h[j] = std::max(0.0, s);
    }
    for (int i = 0; i < c; ++i) {
      double s = b2[i];
      for (int j = 0; j < hidden; ++j) s += w2[i * hidden + j] * h[j];
      out[i] = s;
    }
    return out;
  };
  oracle::Vec result;
  for (int s = 0; s < n; ++s) {
    oracle::Vec avg(c, 0.0), mx(c, -INFINITY);
    for (int i = 0; i < c; ++i)
      for (int p = 0; p < hw; ++p) {
        avg[i] += fv[(s * c + i) * hw + p] / static_cast<double>(hw);
        mx[i] = std::max(mx[i], fv[(s * c + i) * hw + p]);
      }
    const auto a = mlp(avg), m = mlp(mx);
    for (int i = 0; i < c; ++i) result.push_back(oracle::sigmoid(a[i] + m[i]));
  }
  return result;
}

Tensor plain_block(const Tensor& x, BasicBlock& b, Mode mode) {
  const Tensor in = b.downsample ? avg_pool2d(x, 2, 2) : x;
  Tensor branch = relu(b.bn1.forward(b.conv1.forward(in), mode));
  branch = b.bn2.forward(b.conv2.forward(branch), mode);
  const Tensor sc = b.proj ? b.proj_bn->forward(b.proj->forward(in), mode) : in;
  return relu(add(sc, branch));
}

}  // namespace

TEST_CASE("cbam config derives the hidden width with a floor of one") {
  CbamConfig cfg;
  CHECK(cfg.reduction_ratio == 16);
  CHECK(cfg.spatial_kernel == 7);
  CHECK(cfg.hidden_width(64) == 4);
  CHECK(cfg.hidden_width(20) == 1);
  CHECK(cfg.hidden_width(8) == 1);
  CHECK_THROWS((CbamConfig{16, 4}.validate()));
  CHECK_THROWS((CbamConfig{0, 7}.validate()));
}

TEST_CASE("zeroed channel attention gives one half everywhere") {
  Rng rng(1);
  auto cbam = Cbam::create(8, {}, rng, DType::f64);
  cbam.zero();
  std::mt19937_64 data(2);
  const auto m = channel_attention(oracle::random_tensor({3, 8, 5, 5}, data), cbam.channel);
  CHECK(m.shape() == Shape{3, 8});
  for (const double v : m.to_vector()) CHECK(v == 0.5);
  const auto s = spatial_attention(oracle::random_tensor({3, 8, 5, 5}, data), cbam.spatial);
  CHECK(s.shape() == Shape{3, 1, 5, 5});
  for (const double v : s.to_vector()) CHECK(v == 0.5);
}

TEST_CASE("channel attention matches a step-by-step oracle") {
  Rng rng(3);
  const auto ca = ChannelAttention::create(6, {2, 7}, rng, DType::f64);
  std::mt19937_64 data(4);
  const auto f = oracle::random_tensor({2, 6, 3, 4}, data);
  CHECK(oracle::max_abs_diff(channel_attention(f, ca).to_vector(),
                             channel_attention_oracle(f, ca)) < 1e-14);
}

TEST_CASE("spatial attention keeps the spatial size for k=7 and matches a loop oracle") {
  Rng rng(5);
  const auto sa = SpatialAttention::create({}, rng, DType::f64);
  std::mt19937_64 data(6);
  const auto f = oracle::random_tensor({2, 3, 5, 6}, data);
  const auto m = spatial_attention(f, sa);
  CHECK(m.shape() == Shape{2, 1, 5, 6});

  const auto fv = f.to_vector();
  oracle::Vec pooled;
  for (int n = 0; n < 2; ++n) {
    oracle::Vec mean(30, 0.0), mx(30, -INFINITY);
    for (int c = 0; c < 3; ++c)
      for (int p = 0; p < 30; ++p) {
        mean[p] += fv[(n * 3 + c) * 30 + p] / 3.0;
        mx[p] = std::max(mx[p], fv[(n * 3 + c) * 30 + p]);
      }
    pooled.insert(pooled.end(), mean.begin(), mean.end());
    pooled.insert(pooled.end(), mx.begin(), mx.end());
  }
  std::int64_t oh = 0, ow = 0;
  const auto z = oracle::conv2d(pooled, sa.weight.to_vector(), 2, 2, 5, 6, 1, 7, 1, 3, oh, ow);
  oracle::Vec expect;
  for (const double v : z) expect.push_back(oracle::sigmoid(v + sa.bias.item()));
  CHECK(oracle::max_abs_diff(m.to_vector(), expect) < 1e-14);
}

TEST_CASE("zero-initialized attention scales the input by exactly one quarter") {
  Rng rng(7);
  auto cbam = Cbam::create(4, {}, rng, DType::f32);
  cbam.zero();
  std::mt19937_64 data(8);
  const auto f = oracle::random_tensor({2, 4, 6, 6}, data, DType::f32, -3, 3);
  const auto out = cbam_apply(f, cbam).to_vector();
  const auto in = f.to_vector();
  for (std::size_t i = 0; i < in.size(); ++i) {
    CHECK(std::abs(out[i] - 0.25 * in[i]) <= 1e-6);
    CHECK(std::abs(out[i]) <= std::abs(in[i]));
  }
}

TEST_CASE("attention maps lie strictly inside (0, 1) and shapes are preserved") {
  std::mt19937_64 pick(9);
  std::uniform_int_distribution<int> dn(1, 3), dc(1, 20), dhw(1, 9), dr(1, 8);
  const int kernels[] = {1, 3, 5, 7};
  for (int trial = 0; trial < 20; ++trial) {
    const int n = dn(pick), c = dc(pick), h = dhw(pick), w = dhw(pick);
    const CbamConfig cfg{dr(pick), kernels[trial % 4]};
    Rng rng(trial);
    const auto cbam = Cbam::create(c, cfg, rng, DType::f64);
    const auto f = oracle::random_tensor({n, c, h, w}, pick, DType::f64, -4, 4);
    for (const double v : channel_attention(f, cbam.channel).to_vector()) {
      CHECK(v > 0);
      CHECK(v < 1);
    }
    for (const double v : spatial_attention(f, cbam.spatial).to_vector()) {
      CHECK(v > 0);
      CHECK(v < 1);
    }
    CHECK(cbam_apply(f, cbam).shape() == f.shape());
  }
}

TEST_CASE("channel attention runs before spatial attention") {
  Rng rng(10);
  const auto cbam = Cbam::create(4, {2, 3}, rng, DType::f64);
  std::mt19937_64 data(11);
  const auto f = oracle::random_tensor({2, 4, 5, 5}, data);
  const auto swapped = [&] {
    const auto s = scale_spatial(f, spatial_attention(f, cbam.spatial));
    return scale_channels(s, channel_attention(s, cbam.channel));
  }();
  const auto sequential = cbam_apply(f, cbam);
  CHECK(oracle::max_abs_diff(sequential.to_vector(), swapped.to_vector()) > 1e-6);
}

TEST_CASE("basic block without attention equals the plain block") {
  Rng rng(12);
  auto block = BasicBlock::create(3, 6, true, true, {}, rng, DType::f64);
  auto twin = block;
  std::mt19937_64 data(13);
  const auto x = oracle::random_tensor({2, 3, 8, 8}, data);
  const auto ours = basic_block_cbam_forward(x, block, Mode::train, false);
  const auto ref = plain_block(x, twin, Mode::train);
  CHECK(ours.shape() == Shape{2, 6, 4, 4});
  CHECK(ours.to_vector() == ref.to_vector());
}

TEST_CASE("zeroed attention in a block scales the residual branch by one quarter") {
  Rng rng(14);
  auto block = BasicBlock::create(4, 4, false, true, {}, rng, DType::f64);
  block.cbam->zero();
  std::mt19937_64 data(15);
  const auto x = oracle::random_tensor({2, 4, 4, 4}, data);
  const auto ours = basic_block_cbam_forward(x, block, Mode::eval, true);
  const auto branch = block.bn2.forward(
      block.conv2.forward(relu(block.bn1.forward(block.conv1.forward(x), Mode::eval))),
      Mode::eval);
  const auto expect = relu(add(x, scale(branch, 0.25)));
  CHECK(oracle::max_abs_diff(ours.to_vector(), expect.to_vector()) < 1e-14);
}

TEST_CASE("basic block rejects mismatched input channels") {
  Rng rng(16);
  auto block = BasicBlock::create(4, 4, false, false, {}, rng, DType::f64);
  CHECK_THROWS_AS(basic_block_cbam_forward(Tensor::zeros({2, 3, 4, 4}, DType::f64), block,
                                           Mode::eval, false),
                  ShapeError);
  CHECK_THROWS(basic_block_cbam_forward(Tensor::zeros({2, 4, 4, 4}, DType::f64), block,
                                        Mode::eval, true));
}

TEST_CASE("cbam and the full block pass central-difference checks") {
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    Rng rng(seed);
    auto block = BasicBlock::create(2, 4, true, true, {2, 3}, rng, DType::f64);
    LayerParams params;
    block.collect("b", params);
    std::mt19937_64 data(seed + 50);
    std::vector<Tensor> in{oracle::random_tensor({2, 2, 4, 4}, data)};
    for (const auto& [name, t] : params.trainable_params()) in.push_back(t);
    const auto probe = oracle::random_tensor({2, 4, 2, 2}, data);
    const auto fn = [&] {
      return sum(mul(basic_block_cbam_forward(in[0], block, Mode::train, true), probe));
    };
    CHECK(gradient_check(fn, in).max_relative_error < 1e-5);
  }
}
