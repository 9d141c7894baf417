// Copyright 2026 The CUCN Authors
// SPDX-License-Identifier: Apache-2.0

#include "cucn/gradsuite.hpp"

#include <algorithm>
#include <functional>

#include "cucn/backbone.hpp"
#include "cucn/gradcheck.hpp"
#include "cucn/loss.hpp"

namespace cucn::verify {

namespace {

using nn::Rng;
using Inputs = std::vector<Tensor>;

struct Instance {
  Inputs inputs;
  std::function<Tensor(const Inputs&)> apply;
};

using Builder = std::function<Instance(Rng&)>;

Tensor uniform(const Shape& shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> dist(lo, hi);
  std::vector<double> v(static_cast<std::size_t>(numel(shape)));
  for (auto& x : v) x = dist(rng);
  return Tensor::from_values(shape, v, DType::f64);
}

// Values whose distance to every point in `kinks` is at least `margin`.
Tensor avoiding(const Shape& shape, Rng& rng, std::vector<double> kinks, double margin,
                double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> dist(lo, hi);
  std::vector<double> v(static_cast<std::size_t>(numel(shape)));
  for (auto& x : v) {
    do {
      x = dist(rng);
    } while (std::any_of(kinks.begin(), kinks.end(),
                         [&](double k) { return std::abs(x - k) < margin; }));
  }
  return Tensor::from_values(shape, v, DType::f64);
}

std::vector<std::int64_t> random_labels(std::size_t n, std::int64_t classes, Rng& rng) {
  std::uniform_int_distribution<std::int64_t> pick(0, classes - 1);
  std::vector<std::int64_t> out(n);
  for (auto& y : out) y = pick(rng);
  return out;
}

std::vector<double> random_weights(std::size_t n, Rng& rng) {
  std::uniform_real_distribution<double> dist(0.25, 2.0);
  std::vector<double> out(n);
  for (auto& w : out) w = dist(rng);
  return out;
}

Instance unary(Tensor x, std::function<Tensor(const Tensor&)> f) {
  return {{std::move(x)}, [f = std::move(f)](const Inputs& in) { return f(in[0]); }};
}

Instance binary(Tensor a, Tensor b, std::function<Tensor(const Tensor&, const Tensor&)> f) {
  return {{std::move(a), std::move(b)},
          [f = std::move(f)](const Inputs& in) { return f(in[0], in[1]); }};
}

void append(Inputs& inputs, const nn::LayerParams& params) {
  for (const auto& entry : params.trainable_params()) inputs.push_back(entry.second);
}

std::vector<std::pair<std::string, Builder>> op_cases() {
  std::vector<std::pair<std::string, Builder>> cases;
  const Shape s{3, 4};
  const Shape img{2, 3, 4, 4};

  cases.emplace_back("add", [=](Rng& r) { return binary(uniform(s, r), uniform(s, r), add); });
  cases.emplace_back("sub", [=](Rng& r) { return binary(uniform(s, r), uniform(s, r), sub); });
  cases.emplace_back("mul", [=](Rng& r) { return binary(uniform(s, r), uniform(s, r), mul); });
  cases.emplace_back("div", [=](Rng& r) {
    return binary(uniform(s, r), avoiding(s, r, {0.0}, 0.5, -1.5, 1.5), div);
  });
  cases.emplace_back("scale", [=](Rng& r) {
    return unary(uniform(s, r), [](const Tensor& x) { return scale(x, -1.7); });
  });
  cases.emplace_back("add_scalar", [=](Rng& r) {
    return unary(uniform(s, r), [](const Tensor& x) { return add_scalar(x, 0.3); });
  });
  cases.emplace_back("relu", [=](Rng& r) { return unary(avoiding(s, r, {0.0}, 0.01), relu); });
  cases.emplace_back("sigmoid", [=](Rng& r) { return unary(uniform(s, r, -4, 4), sigmoid); });
  cases.emplace_back("exp", [=](Rng& r) { return unary(uniform(s, r, -2, 2), cucn::exp); });
  cases.emplace_back("clamp", [=](Rng& r) {
    return unary(avoiding(s, r, {-0.5, 0.5}, 0.01),
                 [](const Tensor& x) { return clamp(x, -0.5, 0.5); });
  });
  cases.emplace_back("sum", [=](Rng& r) { return unary(uniform(s, r), sum); });
  cases.emplace_back("mean", [=](Rng& r) { return unary(uniform(s, r), mean); });
  cases.emplace_back("reshape", [=](Rng& r) {
    return unary(uniform(s, r), [](const Tensor& x) { return reshape(x, {2, 6}); });
  });
  cases.emplace_back("matmul", [](Rng& r) {
    return binary(uniform({3, 5}, r), uniform({5, 2}, r), matmul);
  });
  cases.emplace_back("matmul_nt", [](Rng& r) {
    return binary(uniform({3, 5}, r), uniform({4, 5}, r), matmul_nt);
  });
  cases.emplace_back("add_bias_rank2", [=](Rng& r) {
    return binary(uniform(s, r), uniform({4}, r), add_bias);
  });
  cases.emplace_back("add_bias_rank4", [=](Rng& r) {
    return binary(uniform(img, r), uniform({3}, r), add_bias);
  });
  cases.emplace_back("conv2d_same", [](Rng& r) {
    return binary(uniform({2, 3, 5, 5}, r), uniform({4, 3, 3, 3}, r),
                  [](const Tensor& x, const Tensor& w) { return conv2d(x, w, 1, 1); });
  });
  cases.emplace_back("conv2d_strided", [](Rng& r) {
    return binary(uniform({2, 2, 5, 5}, r), uniform({3, 2, 3, 3}, r),
                  [](const Tensor& x, const Tensor& w) { return conv2d(x, w, 2, 0); });
  });
  cases.emplace_back("conv2d_pointwise", [](Rng& r) {
    return binary(uniform({2, 3, 3, 3}, r), uniform({2, 3, 1, 1}, r),
                  [](const Tensor& x, const Tensor& w) { return conv2d(x, w, 1, 0); });
  });
  cases.emplace_back("max_pool2d", [=](Rng& r) {
    return unary(uniform(img, r), [](const Tensor& x) { return max_pool2d(x, 2, 2); });
  });
  cases.emplace_back("avg_pool2d", [=](Rng& r) {
    return unary(uniform(img, r), [](const Tensor& x) { return avg_pool2d(x, 2, 2); });
  });
  cases.emplace_back("global_avg_pool", [=](Rng& r) { return unary(uniform(img, r), global_avg_pool); });
  cases.emplace_back("global_max_pool", [=](Rng& r) { return unary(uniform(img, r), global_max_pool); });
  cases.emplace_back("channel_mean", [=](Rng& r) { return unary(uniform(img, r), channel_mean); });
  cases.emplace_back("channel_max", [=](Rng& r) { return unary(uniform(img, r), channel_max); });
  cases.emplace_back("concat_channels", [](Rng& r) {
    return binary(uniform({2, 1, 3, 3}, r), uniform({2, 2, 3, 3}, r), concat_channels);
  });
  cases.emplace_back("scale_channels", [=](Rng& r) {
    return binary(uniform(img, r), uniform({2, 3}, r), scale_channels);
  });
  cases.emplace_back("scale_spatial", [=](Rng& r) {
    return binary(uniform(img, r), uniform({2, 1, 4, 4}, r), scale_spatial);
  });
  cases.emplace_back("index_rows", [](Rng& r) {
    return unary(uniform({4, 3}, r), [](const Tensor& x) {
      const std::vector<std::int64_t> idx{2, 0, 2, 3, 1};
      return index_rows(x, idx);
    });
  });
  cases.emplace_back("log_softmax", [](Rng& r) {
    return unary(uniform({3, 5}, r, -3, 3), log_softmax);
  });
  cases.emplace_back("weighted_nll", [](Rng& r) {
    const auto labels = random_labels(4, 3, r);
    const auto weights = random_weights(3, r);
    return unary(uniform({4, 3}, r, -3, 0),
                 [=](const Tensor& lp) { return weighted_nll(lp, labels, weights); });
  });
  cases.emplace_back("batch_norm_train", [](Rng& r) {
    Instance inst;
    inst.inputs = {uniform({3, 2, 2, 2}, r), uniform({2}, r, 0.5, 1.5), uniform({2}, r)};
    inst.apply = [](const Inputs& in) { return batch_norm_train(in[0], in[1], in[2], 1e-5); };
    return inst;
  });
  cases.emplace_back("batch_norm_eval", [](Rng& r) {
    const Tensor rm = uniform({2}, r);
    const Tensor rv = uniform({2}, r, 0.5, 2.0);
    Instance inst;
    inst.inputs = {uniform({3, 2, 2, 2}, r), uniform({2}, r, 0.5, 1.5), uniform({2}, r)};
    inst.apply = [=](const Inputs& in) {
      return batch_norm_eval(in[0], in[1], in[2], rm, rv, 1e-5);
    };
    return inst;
  });
  return cases;
}

std::vector<std::pair<std::string, Builder>> layer_cases() {
  std::vector<std::pair<std::string, Builder>> cases;
  const nn::CbamConfig small{2, 3};

  cases.emplace_back("linear", [](Rng& r) {
    const auto layer = nn::Linear::create(5, 3, true, r, DType::f64);
    Instance inst;
    inst.inputs = {uniform({4, 5}, r), layer.weight, layer.bias};
    inst.apply = [](const Inputs& in) { return nn::linear_forward(in[0], in[1], in[2]); };
    return inst;
  });
  cases.emplace_back("batchnorm_layer", [](Rng& r) {
    auto bn = nn::BatchNorm2d::create(3, DType::f64);
    bn.gamma.copy_from(uniform({3}, r, 0.5, 1.5));
    bn.beta.copy_from(uniform({3}, r));
    Instance inst;
    inst.inputs = {uniform({2, 3, 2, 2}, r), bn.gamma, bn.beta};
    inst.apply = [bn](const Inputs& in) mutable {
      return nn::batchnorm_forward(in[0], in[1], in[2], bn.state, nn::Mode::train);
    };
    return inst;
  });
  cases.emplace_back("channel_attention", [=](Rng& r) {
    const auto ca = nn::ChannelAttention::create(4, small, r, DType::f64);
    Instance inst;
    inst.inputs = {uniform({2, 4, 3, 3}, r), ca.fc1.weight, ca.fc1.bias, ca.fc2.weight,
                   ca.fc2.bias};
    inst.apply = [ca](const Inputs& in) { return nn::channel_attention(in[0], ca); };
    return inst;
  });
  cases.emplace_back("spatial_attention", [=](Rng& r) {
    const auto sa = nn::SpatialAttention::create(small, r, DType::f64);
    Instance inst;
    inst.inputs = {uniform({2, 3, 4, 4}, r), sa.weight, sa.bias};
    inst.apply = [sa](const Inputs& in) { return nn::spatial_attention(in[0], sa); };
    return inst;
  });
  cases.emplace_back("cbam", [=](Rng& r) {
    const auto cbam = nn::Cbam::create(4, small, r, DType::f64);
    nn::LayerParams params;
    cbam.collect("cbam", params);
    Instance inst;
    inst.inputs = {uniform({2, 4, 4, 4}, r)};
    append(inst.inputs, params);
    inst.apply = [cbam](const Inputs& in) { return nn::cbam_apply(in[0], cbam); };
    return inst;
  });
  cases.emplace_back("basic_block_cbam", [=](Rng& r) {
    auto block = nn::BasicBlock::create(2, 4, true, true, small, r, DType::f64);
    nn::LayerParams params;
    block.collect("block", params);
    Instance inst;
    inst.inputs = {uniform({2, 2, 4, 4}, r)};
    append(inst.inputs, params);
    inst.apply = [block](const Inputs& in) mutable {
      return nn::basic_block_cbam_forward(in[0], block, nn::Mode::train, true);
    };
    return inst;
  });
  cases.emplace_back("weighted_ce", [](Rng& r) {
    const auto labels = random_labels(5, 4, r);
    const loss::ClassWeights weights{random_weights(4, r)};
    return unary(uniform({5, 4}, r, -2, 2),
                 [=](const Tensor& z) { return loss::weighted_ce(z, labels, weights); });
  });
  cases.emplace_back("mix_features", [](Rng& r) {
    const auto labels = random_labels(4, 3, r);
    const auto perm = loss::pair_permutation(4, r);
    return binary(uniform({4, 3}, r), uniform({4, 3}, r, 0.2, 3.0),
                  [=](const Tensor& mu, const Tensor& sigma) {
                    return loss::mix_features({mu, sigma}, perm, labels).mu_tilde;
                  });
  });
  cases.emplace_back("addup_loss", [](Rng& r) {
    const auto li = random_labels(4, 3, r);
    const auto lj = random_labels(4, 3, r);
    const loss::ClassWeights weights{random_weights(3, r)};
    return unary(uniform({4, 3}, r, -2, 2),
                 [=](const Tensor& z) { return loss::addup_loss(z, li, lj, weights); });
  });
  return cases;
}

GradCase run_case(const std::string& name, const Builder& build, int seeds, double tol,
                  std::uint64_t salt) {
  GradCase out{name, tol, 0, 0, true};
  for (int seed = 0; seed < seeds; ++seed) {
    Rng rng(salt * 1000003ULL + static_cast<std::uint64_t>(seed));
    Instance inst = build(rng);
    Shape out_shape;
    {
      NoGradGuard guard;
      out_shape = inst.apply(inst.inputs).shape();
    }
    const Tensor probe = uniform(out_shape, rng);
    const auto fn = [&] { return sum(mul(inst.apply(inst.inputs), probe)); };
    const auto r = gradient_check(fn, inst.inputs, kStep, tol);
    out.max_relative_error = std::max(out.max_relative_error, r.max_relative_error);
    out.coordinates += r.coordinates;
    out.passed = out.passed && r.passed;
  }
  return out;
}

GradCase full_model_case() {
  model::BackboneConfig cfg;
  cfg.stage_blocks = {1, 1};
  cfg.base_channels = 4;
  cfg.in_channels = 1;
  cfg.input_size = 8;
  cfg.feature_dim = 4;
  cfg.num_classes = 3;
  cfg.cbam_on = true;
  Rng rng(2024);
  auto net = model::Backbone::build(cfg, rng, DType::f64);

  Inputs inputs{uniform({2, 1, 8, 8}, rng, 0, 1)};
  append(inputs, net.params());
  const std::vector<std::int64_t> labels{0, 2};
  const loss::ClassWeights weights{{1.0, 0.5, 2.0}};
  const loss::Permutation perm{1, 0};
  const auto fn = [&] {
    const auto bundle = net.forward_features(inputs[0], nn::Mode::train);
    return loss::training_loss(bundle, net.head(), labels, weights, loss::LossMode::cucn, perm);
  };
  const auto r = gradient_check(fn, inputs, kStep, kModelTolerance);
  return {"full_model_cucn", kModelTolerance, r.max_relative_error, r.coordinates, r.passed};
}

}  // namespace

std::vector<GradCase> run_gradient_suite(int seeds) {
  if (seeds < 1) throw Error("gradient suite: seeds must be >= 1");
  std::vector<GradCase> results;
  std::uint64_t salt = 1;
  for (const auto& [name, build] : op_cases())
    results.push_back(run_case(name, build, seeds, kOpTolerance, salt++));
  for (const auto& [name, build] : layer_cases())
    results.push_back(run_case(name, build, seeds, kOpTolerance, salt++));
  results.push_back(full_model_case());
  return results;
}

}  // namespace cucn::verify
