// Copyright 2026 The CUCN Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <span>
#include <string>
#include <vector>

#include "cucn/cbam.hpp"
#include "cucn/serialize.hpp"

namespace cucn::model {

struct BackboneConfig {
  std::vector<std::int64_t> stage_blocks{1, 1, 1};
  std::int64_t base_channels = 16;
  std::int64_t in_channels = 1;
  std::int64_t input_size = 32;
  std::int64_t feature_dim = 64;
  std::int64_t num_classes = 7;
  bool cbam_on = true;
  bool head_bias = false;
  nn::CbamConfig cbam;

  void validate() const;
  /// Total spatial reduction of the trunk: 2^(stages - 1).
  std::int64_t downsampling() const;
  /// Channels of the last stage, i.e. the width of the pooled trunk output.
  std::int64_t trunk_channels() const;

  /// ResNet18 layout at 224x224 RGB, seven expression classes.
  static BackboneConfig resnet18_preset();

  /// Architecture descriptor: `key = value` lines, stable across runs.
  std::string describe() const;
  static BackboneConfig from_description(const std::string& text);
  bool operator==(const BackboneConfig& other) const { return describe() == other.describe(); }
};

/// Per-sample classification feature mu and uncertainty feature sigma > 0.
struct FeatureBundle {
  Tensor mu;     // [N x feature_dim]
  Tensor sigma;  // [N x feature_dim]
};

/// Rows of `weight` are the per-class classifiers W_c.
struct ClassifierHead {
  Tensor weight;  // [C x feature_dim]
  Tensor bias;    // [C]; undefined unless head_bias is set
};

/// logits = features . weight^T (+ bias)
Tensor classify(const Tensor& features, const ClassifierHead& head);

/// Mini-ResNet trunk with CBAM-capable basic blocks, two parallel feature
/// heads (mu and log-sigma) and a linear classifier.
class Backbone {
 public:
  static Backbone build(const BackboneConfig& config, nn::Rng& rng, DType dtype = DType::f32);

  /// Globally pooled trunk output, [N x trunk_channels].
  Tensor trunk(const Tensor& x, nn::Mode mode);
  /// sigma = exp(clamp(s, -10, 10)) for the second head's output s.
  FeatureBundle forward_features(const Tensor& x, nn::Mode mode);
  Tensor classify(const Tensor& features) const { return model::classify(features, head_); }

  const BackboneConfig& config() const { return config_; }
  DType dtype() const { return head_.weight.dtype(); }
  nn::LayerParams params() const;
  /// Classifier-head parameter names start with this prefix.
  static constexpr const char* kHeadPrefix = "head.";

  ClassifierHead& head() { return head_; }
  const ClassifierHead& head() const { return head_; }
  nn::Linear& mu_head() { return mu_head_; }
  nn::Linear& sigma_head() { return sigma_head_; }
  std::vector<nn::BasicBlock>& blocks() { return blocks_; }

  /// Deep copy with independent storage.
  Backbone clone() const;
  /// Copies every entry of `params` into this network by name.
  void load(const std::vector<std::pair<std::string, Tensor>>& params);

 private:
  BackboneConfig config_;
  nn::Conv2d stem_;
  nn::BatchNorm2d stem_bn_;
  std::vector<nn::BasicBlock> blocks_;
  nn::Linear mu_head_;
  nn::Linear sigma_head_;
  ClassifierHead head_;
};

/// Name of the checkpoint entry holding the architecture descriptor as UTF-8
/// bytes.
inline constexpr const char* kArchEntry = "__arch__";

std::vector<NamedBlob> to_checkpoint(const Backbone& net);
Backbone from_checkpoint(std::span<const NamedBlob> entries);

}  // namespace cucn::model
