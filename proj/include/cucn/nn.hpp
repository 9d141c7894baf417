// Copyright 2026 The CUCN Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "cucn/ops.hpp"
#include "cucn/tensor.hpp"

namespace cucn::nn {

enum class Mode { train, eval };

using Rng = std::mt19937_64;

/// Draws from normal(0, sqrt(2 / fan_in)).
Tensor kaiming_init(const Shape& shape, std::int64_t fan_in, Rng& rng, DType dtype = DType::f32);

/// Named parameters and buffers of a network, ordered by name.
class LayerParams {
 public:
  void add(const std::string& name, const Tensor& tensor, bool trainable);
  bool contains(const std::string& name) const { return entries_.count(name) != 0; }
  const Tensor& at(const std::string& name) const;
  bool trainable(const std::string& name) const;

  std::vector<std::pair<std::string, Tensor>> all() const;
  std::vector<std::pair<std::string, Tensor>> trainable_params() const;
  /// Number of trainable scalars.
  std::int64_t parameter_count() const;
  std::size_t size() const { return entries_.size(); }

 private:
  struct Entry {
    Tensor tensor;
    bool trainable;
  };
  std::map<std::string, Entry> entries_;
};

Tensor linear_forward(const Tensor& x, const Tensor& weight, const Tensor& bias);

struct Linear {
  Tensor weight;  // [out x in]
  Tensor bias;    // [out]; undefined when the layer has no bias

  static Linear create(std::int64_t in, std::int64_t out, bool with_bias, Rng& rng,
                       DType dtype = DType::f32);
  Tensor forward(const Tensor& x) const { return linear_forward(x, weight, bias); }
  void collect(const std::string& prefix, LayerParams& out) const;
};

/// Bias-free convolution; every conv in the network is followed by batch norm
/// except the spatial-attention conv, which carries its own bias.
struct Conv2d {
  Tensor weight;  // [out x in x k x k]
  int stride = 1;
  int pad = 0;

  static Conv2d create(std::int64_t in, std::int64_t out, int kernel, int stride, int pad,
                       Rng& rng, DType dtype = DType::f32);
  Tensor forward(const Tensor& x) const { return conv2d(x, weight, stride, pad); }
  void collect(const std::string& prefix, LayerParams& out) const;
};

struct BatchNormState {
  Tensor running_mean;
  Tensor running_var;
  double momentum = 0.1;
  double eps = 1e-5;
};

/// Train mode normalizes by batch statistics and folds them into the running
/// estimates (mean and unbiased variance); eval mode reads only the running
/// estimates.
Tensor batchnorm_forward(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                         BatchNormState& state, Mode mode);

struct BatchNorm2d {
  Tensor gamma;
  Tensor beta;
  BatchNormState state;

  static BatchNorm2d create(std::int64_t channels, DType dtype = DType::f32);
  Tensor forward(const Tensor& x, Mode mode) { return batchnorm_forward(x, gamma, beta, state, mode); }
  void collect(const std::string& prefix, LayerParams& out) const;
};

}  // namespace cucn::nn
