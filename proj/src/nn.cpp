// Copyright 2026 The CUCN Authors
// SPDX-License-Identifier: Apache-2.0

#include "cucn/nn.hpp"

#include <cmath>

namespace cucn::nn {

Tensor kaiming_init(const Shape& shape, std::int64_t fan_in, Rng& rng, DType dtype) {
  if (fan_in <= 0) throw Error("kaiming_init: fan_in must be positive");
  std::normal_distribution<double> normal(0.0, std::sqrt(2.0 / static_cast<double>(fan_in)));
  std::vector<double> values(static_cast<std::size_t>(numel(shape)));
  for (auto& v : values) v = normal(rng);
  return Tensor::from_values(shape, values, dtype).set_requires_grad(true);
}

void LayerParams::add(const std::string& name, const Tensor& tensor, bool trainable) {
  if (!tensor.defined()) throw Error("LayerParams: undefined tensor for " + name);
  if (!entries_.emplace(name, Entry{tensor, trainable}).second)
    throw Error("LayerParams: duplicate name " + name);
}

const Tensor& LayerParams::at(const std::string& name) const {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw Error("LayerParams: no entry named " + name);
  return it->second.tensor;
}

bool LayerParams::trainable(const std::string& name) const {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw Error("LayerParams: no entry named " + name);
  return it->second.trainable;
}

std::vector<std::pair<std::string, Tensor>> LayerParams::all() const {
  std::vector<std::pair<std::string, Tensor>> out;
  for (const auto& [name, e] : entries_) out.emplace_back(name, e.tensor);
  return out;
}

std::vector<std::pair<std::string, Tensor>> LayerParams::trainable_params() const {
  std::vector<std::pair<std::string, Tensor>> out;
  for (const auto& [name, e] : entries_)
    if (e.trainable) out.emplace_back(name, e.tensor);
  return out;
}

std::int64_t LayerParams::parameter_count() const {
  std::int64_t n = 0;
  for (const auto& [name, e] : entries_)
    if (e.trainable) n += e.tensor.numel();
  return n;
}

Tensor linear_forward(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  if (x.ndim() != 2 || weight.ndim() != 2 || x.dim(1) != weight.dim(1))
    throw ShapeError("linear: input " + shape_str(x.shape()) + " vs weight " +
                     shape_str(weight.shape()));
  Tensor y = matmul_nt(x, weight);
  return bias.defined() ? add_bias(y, bias) : y;
}

Linear Linear::create(std::int64_t in, std::int64_t out, bool with_bias, Rng& rng, DType dtype) {
  Linear l;
  l.weight = kaiming_init({out, in}, in, rng, dtype);
  if (with_bias) l.bias = Tensor::zeros({out}, dtype).set_requires_grad(true);
  return l;
}

void Linear::collect(const std::string& prefix, LayerParams& out) const {
  out.add(prefix + ".weight", weight, true);
  if (bias.defined()) out.add(prefix + ".bias", bias, true);
}

Conv2d Conv2d::create(std::int64_t in, std::int64_t out, int kernel, int stride, int pad, Rng& rng,
                      DType dtype) {
  Conv2d c;
  c.weight = kaiming_init({out, in, kernel, kernel}, in * kernel * kernel, rng, dtype);
  c.stride = stride;
  c.pad = pad;
  return c;
}

void Conv2d::collect(const std::string& prefix, LayerParams& out) const {
  out.add(prefix + ".weight", weight, true);
}

Tensor batchnorm_forward(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                         BatchNormState& state, Mode mode) {
  if (mode == Mode::eval)
    return batch_norm_eval(x, gamma, beta, state.running_mean, state.running_var, state.eps);
  if (x.dim(0) < 2) throw ShapeError("batch norm in train mode needs a batch of at least 2");
  std::vector<double> batch_mean, batch_var;
  Tensor y = batch_norm_train(x, gamma, beta, state.eps, &batch_mean, &batch_var);
  const double count = static_cast<double>(x.numel() / x.dim(1));
  const double unbias = count / (count - 1);
  const double m = state.momentum;
  dispatch(x.dtype(), [&]<typename T>(T) {
    auto rm = state.running_mean.mutable_data<T>();
    auto rv = state.running_var.mutable_data<T>();
    for (std::size_t c = 0; c < batch_mean.size(); ++c) {
      rm[c] = static_cast<T>((1 - m) * rm[c] + m * batch_mean[c]);
      rv[c] = static_cast<T>((1 - m) * rv[c] + m * batch_var[c] * unbias);
    }
  });
  return y;
}

BatchNorm2d BatchNorm2d::create(std::int64_t channels, DType dtype) {
  BatchNorm2d bn;
  bn.gamma = Tensor::full({channels}, 1.0, dtype).set_requires_grad(true);
  bn.beta = Tensor::zeros({channels}, dtype).set_requires_grad(true);
  bn.state.running_mean = Tensor::zeros({channels}, dtype);
  bn.state.running_var = Tensor::full({channels}, 1.0, dtype);
  return bn;
}

void BatchNorm2d::collect(const std::string& prefix, LayerParams& out) const {
  out.add(prefix + ".gamma", gamma, true);
  out.add(prefix + ".beta", beta, true);
  out.add(prefix + ".running_mean", state.running_mean, false);
  out.add(prefix + ".running_var", state.running_var, false);
}

}  // namespace cucn::nn
