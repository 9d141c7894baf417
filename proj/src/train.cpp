// Copyright 2026 The CUCN Authors
// SPDX-License-Identifier: Apache-2.0

#include "cucn/train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "cucn/keyvalue.hpp"

namespace cucn::train {

namespace {

// Offset separating the data-order stream from the initialization stream.
constexpr std::uint64_t kLoopStream = 0x9e3779b97f4a7c15ULL;
constexpr std::int64_t kEvalChunk = 256;

std::vector<double> grad_values(const Tensor& p) {
  if (!p.has_grad()) return std::vector<double>(static_cast<std::size_t>(p.numel()), 0.0);
  return p.grad().to_vector();
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  write_file(path, {reinterpret_cast<const std::uint8_t*>(text.data()), text.size()});
}

}  // namespace

void adam_step(const NamedParams& params, OptimizerState& state, double lr, double weight_decay) {
  std::vector<std::vector<double>> grads;
  grads.reserve(params.size());
  for (const auto& [name, p] : params) {
    auto g = grad_values(p);
    for (const double x : g)
      if (!std::isfinite(x))
        throw NumericError("adam_step: non-finite gradient in parameter '" + name + "'");
    grads.push_back(std::move(g));
  }

  ++state.t;
  const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.t));
  for (std::size_t k = 0; k < params.size(); ++k) {
    const auto& [name, tensor] = params[k];
    Tensor p = tensor;
    const auto n = static_cast<std::size_t>(p.numel());
    auto& m = state.m[name];
    auto& v = state.v[name];
    if (m.empty()) {
      m.assign(n, 0.0);
      v.assign(n, 0.0);
    } else if (m.size() != n) {
      throw ShapeError("adam_step: parameter '" + name + "' changed size");
    }
    dispatch(p.dtype(), [&]<typename T>(T) {
      auto w = p.mutable_data<T>();
      for (std::size_t i = 0; i < n; ++i) {
        const double g = grads[k][i] + weight_decay * static_cast<double>(w[i]);
        m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * g;
        v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * g * g;
        const double step = lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + state.eps);
        w[i] = static_cast<T>(static_cast<double>(w[i]) - step);
      }
    });
  }
}

double lr_at_epoch(double base_lr, double gamma, std::int64_t epoch) {
  if (epoch < 0) throw Error("lr_at_epoch: negative epoch");
  const long double factor = std::pow(static_cast<long double>(gamma), static_cast<long double>(epoch));
  return static_cast<double>(static_cast<long double>(base_lr) * factor);
}

void TrainConfig::validate() const {
  if (epochs < 1) throw Error("train: epochs must be >= 1");
  if (batch_size < 2) throw Error("train: batch_size must be >= 2");
  if (!(lr_backbone >= 0) || !(lr_classifier >= 0))
    throw Error("train: learning rates must be >= 0");
  if (lr_backbone == 0 && lr_classifier == 0) throw Error("train: both learning rates are zero");
  if (!(gamma > 0 && gamma <= 1)) throw Error("train: gamma must lie in (0, 1]");
  if (!(weight_decay >= 0)) throw Error("train: weight_decay must be >= 0");
  if (!(flip_prob >= 0 && flip_prob <= 1)) throw Error("train: flip_prob must lie in [0, 1]");
}

TrainConfig TrainConfig::affectnet_preset() {
  TrainConfig c;
  c.epochs = 60;
  c.batch_size = 256;
  c.lr_backbone = 1e-4;
  c.lr_classifier = 5e-4;
  c.weight_decay = 1e-4;
  c.gamma = 0.9;
  return c;
}

std::string history_csv(const std::vector<EpochRecord>& history) {
  std::string out = std::string(kHistoryHeader) + "\n";
  for (const auto& r : history) {
    out += std::to_string(r.epoch) + "," + format_double(r.lr) + "," + format_double(r.train_loss) +
           "," + format_double(r.eval_acc) + "," + format_double(r.eval_min_class_acc) + "," +
           format_double(r.eval_max_class_acc) + "\n";
  }
  return out;
}

std::vector<EpochRecord> parse_history_csv(const std::string& text) {
  const auto lines = split(text, '\n');
  if (lines.empty() || trim(lines[0]) != kHistoryHeader)
    throw FormatError("history: header '" + std::string(kHistoryHeader) + "' required");
  std::vector<EpochRecord> out;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    if (trim(lines[i]).empty()) continue;
    const auto f = split(lines[i], ',');
    if (f.size() != 6) throw FormatError("history: line " + std::to_string(i + 1) + " needs 6 fields");
    out.push_back({parse_int(f[0]), parse_double(f[1]), parse_double(f[2]), parse_double(f[3]),
                   parse_double(f[4]), parse_double(f[5])});
  }
  return out;
}

std::vector<std::int64_t> predict(model::Backbone& net, const data::Dataset& dataset) {
  dataset.validate();
  const auto& cfg = net.config();
  if (dataset.images.dim(1) != cfg.in_channels || dataset.images.dim(2) != cfg.input_size ||
      dataset.images.dim(3) != cfg.input_size)
    throw ShapeError("evaluate: dataset images " + shape_str(dataset.images.shape()) +
                     " do not fit the network input");
  NoGradGuard no_grad;
  std::vector<std::int64_t> preds;
  preds.reserve(static_cast<std::size_t>(dataset.size()));
  for (std::int64_t start = 0; start < dataset.size(); start += kEvalChunk) {
    const auto stop = std::min(dataset.size(), start + kEvalChunk);
    std::vector<std::int64_t> idx(static_cast<std::size_t>(stop - start));
    std::iota(idx.begin(), idx.end(), start);
    Tensor x = data::gather_images(dataset, idx);
    if (net.dtype() != DType::f32) x = x.to(net.dtype());
    const auto feats = net.forward_features(x, nn::Mode::eval);
    const auto logits = net.classify(feats.mu).to_vector();
    const auto classes = cfg.num_classes;
    for (std::size_t r = 0; r < idx.size(); ++r) {
      const auto row = logits.begin() + static_cast<std::int64_t>(r) * classes;
      preds.push_back(std::max_element(row, row + classes) - row);
    }
  }
  return preds;
}

metrics::EvalReport evaluate(model::Backbone& net, const data::Dataset& dataset) {
  if (dataset.num_classes() != net.config().num_classes)
    throw Error("evaluate: dataset has " + std::to_string(dataset.num_classes()) +
                " classes, network has " + std::to_string(net.config().num_classes));
  const auto preds = predict(net, dataset);
  return metrics::summarize(metrics::confusion_matrix(preds, dataset.labels, dataset.num_classes()));
}

metrics::EvalReport evaluate(std::span<const NamedBlob> checkpoint, const data::Dataset& dataset) {
  auto net = model::from_checkpoint(checkpoint);
  return evaluate(net, dataset);
}

TrainResult train(const TrainConfig& config, model::BackboneConfig arch,
                  const data::Dataset& train_set, const data::Dataset& eval_set,
                  const std::optional<std::filesystem::path>& out_dir) {
  config.validate();
  train_set.validate();
  eval_set.validate();
  if (eval_set.num_classes() != train_set.num_classes())
    throw Error("train: eval set has " + std::to_string(eval_set.num_classes()) +
                " classes, training set has " + std::to_string(train_set.num_classes()));
  if (train_set.images.dim(2) != train_set.images.dim(3))
    throw ShapeError("train: images must be square");
  if (eval_set.images.shape()[1] != train_set.images.shape()[1] ||
      eval_set.images.dim(2) != train_set.images.dim(2) ||
      eval_set.images.dim(3) != train_set.images.dim(3))
    throw ShapeError("train: eval images differ in shape from training images");
  if (train_set.size() < 2) throw Error("train: need at least two training samples");

  arch.in_channels = train_set.images.dim(1);
  arch.input_size = train_set.images.dim(2);
  arch.num_classes = train_set.num_classes();
  arch.cbam_on = config.cbam_on;
  arch.validate();

  const auto weights =
      loss::class_weights_from_counts(train_set.class_counts, config.weights_scheme,
                                      config.manual_weights);

  nn::Rng init_rng(config.seed);
  auto net = model::Backbone::build(arch, init_rng);
  nn::Rng rng(config.seed ^ kLoopStream);

  NamedParams backbone_group, head_group;
  for (auto& entry : net.params().trainable_params()) {
    if (entry.first.rfind(model::Backbone::kHeadPrefix, 0) == 0)
      head_group.push_back(std::move(entry));
    else
      backbone_group.push_back(std::move(entry));
  }
  OptimizerState backbone_state, head_state;

  const auto n = train_set.size();
  const auto ch = arch.in_channels, hw = arch.input_size;
  const auto per = ch * hw * hw;
  std::vector<std::int64_t> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), std::int64_t{0});
  std::bernoulli_distribution coin(config.flip_prob);

  TrainResult result;
  std::optional<double> best_acc;
  for (std::int64_t epoch = 0; epoch < config.epochs; ++epoch) {
    const double lr_b = lr_at_epoch(config.lr_backbone, config.gamma, epoch);
    const double lr_c = lr_at_epoch(config.lr_classifier, config.gamma, epoch);
    for (auto i = n - 1; i > 0; --i) {
      std::uniform_int_distribution<std::int64_t> pick(0, i);
      std::swap(order[i], order[pick(rng)]);
    }

    double loss_sum = 0;
    std::int64_t seen = 0;
    for (std::int64_t start = 0; start < n; start += config.batch_size) {
      const auto stop = std::min(n, start + config.batch_size);
      if (stop - start < 2) break;  // batch norm needs two samples
      const std::span<const std::int64_t> idx(order.data() + start,
                                              static_cast<std::size_t>(stop - start));
      Tensor x = data::gather_images(train_set, idx);
      auto pixels = x.mutable_data<float>();
      for (std::size_t b = 0; b < idx.size(); ++b)
        if (coin(rng))
          data::hflip(pixels.subspan(b * static_cast<std::size_t>(per), static_cast<std::size_t>(per)),
                      ch, hw, hw);
      std::vector<std::int64_t> labels;
      for (const auto i : idx) labels.push_back(train_set.labels[i]);

      Tensor loss_value;
      try {
        const auto bundle = net.forward_features(x, nn::Mode::train);
        loss_value = loss::training_loss(bundle, net.head(), labels, weights, config.loss_mode, rng);
      } catch (const NumericError& e) {
        throw NumericError("train: epoch " + std::to_string(epoch) + ", batch starting at " +
                           std::to_string(start) + ": " + e.what());
      }
      const double lv = loss_value.item();
      if (!std::isfinite(lv))
        throw NumericError("train: loss is " + format_double(lv) + " at epoch " +
                           std::to_string(epoch) + ", batch starting at " + std::to_string(start));
      for (auto& [name, p] : backbone_group) p.zero_grad();
      for (auto& [name, p] : head_group) p.zero_grad();
      backward(loss_value);
      adam_step(backbone_group, backbone_state, lr_b, config.weight_decay);
      adam_step(head_group, head_state, lr_c, config.weight_decay);
      loss_sum += lv * static_cast<double>(idx.size());
      seen += static_cast<std::int64_t>(idx.size());
    }

    const auto report = evaluate(net, eval_set);
    result.history.push_back({epoch, lr_b, loss_sum / static_cast<double>(seen), report.overall_acc,
                              report.min_class_acc, report.max_class_acc});
    if (!best_acc || report.overall_acc > *best_acc) {
      best_acc = report.overall_acc;
      result.best_epoch = epoch;
      result.best_model = net.clone();
    }
    result.final_report = report;
  }
  result.final_model = std::move(net);

  if (out_dir) {
    std::filesystem::create_directories(*out_dir);
    write_text(*out_dir / "history.csv", history_csv(result.history));
    write_file(*out_dir / "final.cuck", encode_cuck(model::to_checkpoint(result.final_model)));
    write_file(*out_dir / "best.cuck", encode_cuck(model::to_checkpoint(result.best_model)));
  }
  return result;
}

}  // namespace cucn::train
