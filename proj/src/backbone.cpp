// Copyright 2026 The CUCN Authors
// SPDX-License-Identifier: Apache-2.0

#include "cucn/backbone.hpp"

#include <set>

#include "cucn/keyvalue.hpp"

namespace cucn::model {

void BackboneConfig::validate() const {
  if (stage_blocks.empty()) throw Error("backbone: at least one stage required");
  for (auto b : stage_blocks)
    if (b < 1) throw Error("backbone: every stage needs at least one block");
  if (base_channels < 1 || in_channels < 1) throw Error("backbone: channel counts must be >= 1");
  if (feature_dim < 1) throw Error("backbone: feature_dim must be >= 1");
  if (num_classes < 2) throw Error("backbone: num_classes must be >= 2");
  if (input_size < 1 || input_size % downsampling() != 0)
    throw Error("backbone: input_size " + std::to_string(input_size) +
                " is not divisible by the downsampling factor " + std::to_string(downsampling()));
  cbam.validate();
}

std::int64_t BackboneConfig::downsampling() const {
  return std::int64_t{1} << (stage_blocks.size() - 1);
}

std::int64_t BackboneConfig::trunk_channels() const {
  return base_channels << (stage_blocks.size() - 1);
}

BackboneConfig BackboneConfig::resnet18_preset() {
  BackboneConfig c;
  c.stage_blocks = {2, 2, 2, 2};
  c.base_channels = 64;
  c.in_channels = 3;
  c.input_size = 224;
  c.feature_dim = 512;
  c.num_classes = 7;
  return c;
}

std::string BackboneConfig::describe() const {
  std::string s;
  s += "name = mini-resnet\n";
  s += "stage_blocks = " + join_ints(stage_blocks) + "\n";
  s += "base_channels = " + std::to_string(base_channels) + "\n";
  s += "in_channels = " + std::to_string(in_channels) + "\n";
  s += "input_size = " + std::to_string(input_size) + "\n";
  s += "feature_dim = " + std::to_string(feature_dim) + "\n";
  s += "num_classes = " + std::to_string(num_classes) + "\n";
  s += std::string("cbam_on = ") + (cbam_on ? "true" : "false") + "\n";
  s += std::string("head_bias = ") + (head_bias ? "true" : "false") + "\n";
  s += "reduction_ratio = " + std::to_string(cbam.reduction_ratio) + "\n";
  s += "spatial_kernel = " + std::to_string(cbam.spatial_kernel) + "\n";
  return s;
}

BackboneConfig BackboneConfig::from_description(const std::string& text) {
  BackboneConfig c;
  for (const auto& [key, value] : parse_key_values(text)) {
    if (key == "name") {
      if (value != "mini-resnet") throw FormatError("unknown architecture '" + value + "'");
    } else if (key == "stage_blocks") {
      c.stage_blocks = parse_int_list(value);
    } else if (key == "base_channels") {
      c.base_channels = parse_int(value);
    } else if (key == "in_channels") {
      c.in_channels = parse_int(value);
    } else if (key == "input_size") {
      c.input_size = parse_int(value);
    } else if (key == "feature_dim") {
      c.feature_dim = parse_int(value);
    } else if (key == "num_classes") {
      c.num_classes = parse_int(value);
    } else if (key == "cbam_on") {
      c.cbam_on = parse_bool(value);
    } else if (key == "head_bias") {
      c.head_bias = parse_bool(value);
    } else if (key == "reduction_ratio") {
      c.cbam.reduction_ratio = static_cast<int>(parse_int(value));
    } else if (key == "spatial_kernel") {
      c.cbam.spatial_kernel = static_cast<int>(parse_int(value));
    } else {
      throw FormatError("unknown architecture key '" + key + "'");
    }
  }
  c.validate();
  return c;
}

Tensor classify(const Tensor& features, const ClassifierHead& head) {
  if (features.ndim() != 2 || features.dim(1) != head.weight.dim(1))
    throw ShapeError("classify: features " + shape_str(features.shape()) + " vs head " +
                     shape_str(head.weight.shape()));
  return nn::linear_forward(features, head.weight, head.bias);
}

Backbone Backbone::build(const BackboneConfig& config, nn::Rng& rng, DType dtype) {
  config.validate();
  Backbone net;
  net.config_ = config;
  const auto base = config.base_channels;
  net.stem_ = nn::Conv2d::create(config.in_channels, base, 3, 1, 1, rng, dtype);
  net.stem_bn_ = nn::BatchNorm2d::create(base, dtype);
  std::int64_t channels = base;
  for (std::size_t s = 0; s < config.stage_blocks.size(); ++s) {
    const std::int64_t out = base << s;
    for (std::int64_t b = 0; b < config.stage_blocks[s]; ++b) {
      const bool downsample = s > 0 && b == 0;
      net.blocks_.push_back(nn::BasicBlock::create(channels, out, downsample, config.cbam_on,
                                                   config.cbam, rng, dtype));
      channels = out;
    }
  }
  net.mu_head_ = nn::Linear::create(channels, config.feature_dim, true, rng, dtype);
  net.sigma_head_ = nn::Linear::create(channels, config.feature_dim, true, rng, dtype);
  net.head_.weight =
      nn::kaiming_init({config.num_classes, config.feature_dim}, config.feature_dim, rng, dtype);
  if (config.head_bias)
    net.head_.bias = Tensor::zeros({config.num_classes}, dtype).set_requires_grad(true);
  return net;
}

Tensor Backbone::trunk(const Tensor& x, nn::Mode mode) {
  const auto size = config_.input_size;
  if (x.ndim() != 4 || x.dim(1) != config_.in_channels || x.dim(2) != size || x.dim(3) != size)
    throw ShapeError("backbone: input " + shape_str(x.shape()) + " does not match configured " +
                     std::to_string(config_.in_channels) + "x" + std::to_string(size) + "x" +
                     std::to_string(size));
  Tensor h = relu(stem_bn_.forward(stem_.forward(x), mode));
  for (auto& block : blocks_) h = nn::basic_block_cbam_forward(h, block, mode, config_.cbam_on);
  return global_avg_pool(h);
}

FeatureBundle Backbone::forward_features(const Tensor& x, nn::Mode mode) {
  const Tensor pooled = trunk(x, mode);
  return {mu_head_.forward(pooled), exp(clamp(sigma_head_.forward(pooled), -10.0, 10.0))};
}

nn::LayerParams Backbone::params() const {
  nn::LayerParams p;
  stem_.collect("stem.conv", p);
  stem_bn_.collect("stem.bn", p);
  for (std::size_t i = 0; i < blocks_.size(); ++i)
    blocks_[i].collect("blocks." + std::to_string(i), p);
  mu_head_.collect("features.mu", p);
  sigma_head_.collect("features.log_sigma", p);
  p.add(std::string(kHeadPrefix) + "weight", head_.weight, true);
  if (head_.bias.defined()) p.add(std::string(kHeadPrefix) + "bias", head_.bias, true);
  return p;
}

void Backbone::load(const std::vector<std::pair<std::string, Tensor>>& params) {
  const auto own = this->params();
  std::set<std::string> seen;
  for (const auto& [name, value] : params) {
    if (!own.contains(name)) throw FormatError("checkpoint entry '" + name + "' not in network");
    Tensor target = own.at(name);
    if (target.shape() != value.shape())
      throw FormatError("checkpoint entry '" + name + "' has shape " + shape_str(value.shape()) +
                        ", network expects " + shape_str(target.shape()));
    target.copy_from(value.to(target.dtype()));
    seen.insert(name);
  }
  if (seen.size() != own.size()) throw FormatError("checkpoint is missing network entries");
}

Backbone Backbone::clone() const {
  nn::Rng rng(0);
  Backbone copy = build(config_, rng, dtype());
  copy.load(params().all());
  return copy;
}

std::vector<NamedBlob> to_checkpoint(const Backbone& net) {
  std::vector<NamedBlob> entries;
  const std::string arch = net.config().describe();
  entries.push_back(
      {kArchEntry,
       u8_blob({static_cast<std::int64_t>(arch.size())},
               {reinterpret_cast<const std::uint8_t*>(arch.data()), arch.size()})});
  for (const auto& [name, tensor] : net.params().all()) entries.push_back({name, to_blob(tensor)});
  return entries;
}

Backbone from_checkpoint(std::span<const NamedBlob> entries) {
  if (entries.empty() || entries.front().name != kArchEntry ||
      entries.front().blob.type != ElementType::u8)
    throw FormatError("checkpoint lacks an architecture descriptor");
  const auto& payload = entries.front().blob.payload;
  const auto config =
      BackboneConfig::from_description(std::string(payload.begin(), payload.end()));
  DType dtype = DType::f32;
  std::vector<std::pair<std::string, Tensor>> params;
  for (const auto& e : entries.subspan(1)) {
    if (e.blob.type == ElementType::u8)
      throw FormatError("checkpoint entry '" + e.name + "' is not floating point");
    if (e.blob.type == ElementType::f64) dtype = DType::f64;
    params.emplace_back(e.name, to_tensor(e.blob));
  }
  nn::Rng rng(0);
  Backbone net = Backbone::build(config, rng, dtype);
  net.load(params);
  return net;
}

}  // namespace cucn::model
