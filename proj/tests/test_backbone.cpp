// Copyright 2026 The CUCN Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include "cucn/backbone.hpp"
#include "oracles.hpp"

using namespace cucn;
using namespace cucn::model;

namespace {

BackboneConfig small_config() {
  BackboneConfig c;
  c.stage_blocks = {1, 1};
  c.base_channels = 4;
  c.input_size = 8;
  c.feature_dim = 5;
  c.num_classes = 3;
  c.cbam = {2, 3};
  return c;
}

void fill(Tensor& t, double v) {
  const auto n = static_cast<std::size_t>(t.numel());
  t.copy_from(Tensor::from_values(t.shape(), oracle::Vec(n, v), t.dtype()));
}

}  // namespace

TEST_CASE("backbone build is deterministic in the seed") {
  nn::Rng a(3), b(3), c(4);
  const auto n1 = Backbone::build(small_config(), a, DType::f64);
  const auto n2 = Backbone::build(small_config(), b, DType::f64);
  const auto n3 = Backbone::build(small_config(), c, DType::f64);
  CHECK(to_checkpoint(n1) == to_checkpoint(n2));
  CHECK_FALSE(to_checkpoint(n1) == to_checkpoint(n3));
}

TEST_CASE("feature and logit shapes follow the config") {
  nn::Rng rng(1);
  auto net = Backbone::build(small_config(), rng, DType::f64);
  std::mt19937_64 data(2);
  const auto x = oracle::random_tensor({3, 1, 8, 8}, data, DType::f64, 0, 1);
  CHECK(net.trunk(x, nn::Mode::eval).shape() == Shape{3, 8});
  const auto f = net.forward_features(x, nn::Mode::train);
  CHECK(f.mu.shape() == Shape{3, 5});
  CHECK(f.sigma.shape() == Shape{3, 5});
  for (const double s : f.sigma.to_vector()) CHECK(s > 0);
  CHECK(net.classify(f.mu).shape() == Shape{3, 3});
  CHECK_THROWS_AS(net.forward_features(Tensor::zeros({2, 1, 6, 6}, DType::f64), nn::Mode::eval),
                  ShapeError);
}

TEST_CASE("a zeroed sigma head yields unit uncertainty") {
  nn::Rng rng(5);
  auto net = Backbone::build(small_config(), rng, DType::f64);
  fill(net.sigma_head().weight, 0);
  fill(net.sigma_head().bias, 0);
  std::mt19937_64 data(6);
  const auto f = net.forward_features(oracle::random_tensor({2, 1, 8, 8}, data), nn::Mode::eval);
  for (const double s : f.sigma.to_vector()) CHECK(s == 1.0);
}

TEST_CASE("the sigma head output is clamped before exponentiation") {
  nn::Rng rng(5);
  auto net = Backbone::build(small_config(), rng, DType::f64);
  fill(net.sigma_head().weight, 0);
  fill(net.sigma_head().bias, 50);
  const auto f = net.forward_features(Tensor::zeros({2, 1, 8, 8}, DType::f64), nn::Mode::eval);
  for (const double s : f.sigma.to_vector()) CHECK(s == doctest::Approx(std::exp(10.0)));
}

TEST_CASE("parameter count matches the closed form for a single-stage network") {
  for (const bool cbam : {false, true}) {
    BackboneConfig c;
    c.stage_blocks = {1};
    c.base_channels = 8;
    c.in_channels = 2;
    c.input_size = 6;
    c.feature_dim = 7;
    c.num_classes = 4;
    c.cbam_on = cbam;
    c.cbam = {4, 5};
    nn::Rng rng(0);
    const auto net = Backbone::build(c, rng);
    const std::int64_t B = 8, I = 2, D = 7, C = 4, h = 2, k = 5;
    std::int64_t expect = B * I * 9 + 2 * B;      // stem conv + bn
    expect += 2 * (B * B * 9 + 2 * B);           // block convs + bns
    if (cbam) expect += (B * h + h) + (h * B + B) + (2 * k * k + 1);
    expect += 2 * (B * D + D);                   // mu and log-sigma heads
    expect += C * D;                             // bias-free classifier
    CHECK(net.params().parameter_count() == expect);
  }
}

TEST_CASE("parameter names are unique and the classifier carries the head prefix") {
  nn::Rng rng(0);
  const auto net = Backbone::build(small_config(), rng);
  const auto params = net.params();
  CHECK(params.contains("head.weight"));
  CHECK_FALSE(params.contains("head.bias"));
  CHECK(params.contains("blocks.0.cbam.ca.fc1.weight"));
  CHECK(params.contains("blocks.1.shortcut.conv.weight"));
  CHECK(params.contains("stem.bn.running_mean"));
  CHECK_FALSE(params.trainable("stem.bn.running_mean"));
}

TEST_CASE("architecture descriptors round-trip and reject unknown keys") {
  auto c = small_config();
  c.head_bias = true;
  c.cbam_on = false;
  CHECK(BackboneConfig::from_description(c.describe()) == c);
  CHECK(BackboneConfig::from_description(BackboneConfig::resnet18_preset().describe()) ==
        BackboneConfig::resnet18_preset());
  CHECK_THROWS_AS(BackboneConfig::from_description("colour = red\n"), FormatError);
  auto bad = small_config();
  bad.input_size = 7;
  CHECK_THROWS(bad.validate());
}

TEST_CASE("the ResNet18 preset has four two-block stages at 224") {
  const auto p = BackboneConfig::resnet18_preset();
  CHECK(p.stage_blocks == std::vector<std::int64_t>{2, 2, 2, 2});
  CHECK(p.input_size == 224);
  CHECK(p.in_channels == 3);
  CHECK(p.num_classes == 7);
  CHECK(p.downsampling() == 8);
}

TEST_CASE("checkpoints restore a network with identical outputs") {
  nn::Rng rng(8);
  auto c = small_config();
  c.head_bias = true;
  auto net = Backbone::build(c, rng);
  std::mt19937_64 data(9);
  const auto x = oracle::random_tensor({4, 1, 8, 8}, data, DType::f32, 0, 1);
  (void)net.forward_features(x, nn::Mode::train);  // move the running stats
  auto restored = from_checkpoint(to_checkpoint(net));
  CHECK(restored.config() == c);
  const auto a = net.forward_features(x, nn::Mode::eval);
  const auto b = restored.forward_features(x, nn::Mode::eval);
  CHECK(a.mu.to_vector() == b.mu.to_vector());
  CHECK(a.sigma.to_vector() == b.sigma.to_vector());
  CHECK(encode_cuck(to_checkpoint(restored)) == encode_cuck(to_checkpoint(net)));
}

TEST_CASE("checkpoints without a descriptor or with foreign entries are rejected") {
  nn::Rng rng(8);
  const auto net = Backbone::build(small_config(), rng);
  auto entries = to_checkpoint(net);
  auto no_arch = entries;
  std::erase_if(no_arch, [](const NamedBlob& e) { return e.name == kArchEntry; });
  CHECK_THROWS_AS(from_checkpoint(no_arch), FormatError);
  auto extra = entries;
  extra.push_back({"ghost.weight", to_blob(Tensor::zeros({1}))});
  CHECK_THROWS_AS(from_checkpoint(extra), FormatError);
}

TEST_CASE("clone shares no storage") {
  nn::Rng rng(8);
  auto net = Backbone::build(small_config(), rng);
  auto copy = net.clone();
  fill(copy.head().weight, 0);
  CHECK_FALSE(net.head().weight.to_vector() == copy.head().weight.to_vector());
}

TEST_CASE("classify computes features times the class rows") {
  ClassifierHead head{Tensor::from_values({2, 3}, {1, 0, 0, 0, 1, 1}, DType::f64), {}};
  const auto f = Tensor::from_values({2, 3}, {2, 3, 4, -1, 0.5, 0.25}, DType::f64);
  CHECK(classify(f, head).to_vector() == oracle::Vec{2, 7, -1, 0.75});
  head.bias = Tensor::from_values({2}, {10, 20}, DType::f64);
  CHECK(classify(f, head).to_vector() == oracle::Vec{12, 27, 9, 20.75});
  CHECK_THROWS_AS(classify(Tensor::zeros({2, 4}, DType::f64), head), ShapeError);
}
