// Copyright 2026 The CUCN Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "cucn/backbone.hpp"
#include "cucn/data.hpp"
#include "cucn/loss.hpp"
#include "cucn/metrics.hpp"

namespace cucn::train {

using NamedParams = std::vector<std::pair<std::string, Tensor>>;

struct OptimizerState {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::int64_t t = 0;
  std::map<std::string, std::vector<double>> m;
  std::map<std::string, std::vector<double>> v;
};

/// One Adam step with bias correction over `params`, reading each tensor's
/// accumulated gradient (absent gradients count as zero). Weight decay is
/// added to the gradient before the moment updates. A non-finite gradient
/// throws NumericError naming the parameter and leaves everything untouched.
void adam_step(const NamedParams& params, OptimizerState& state, double lr, double weight_decay);

/// base_lr * gamma^epoch
double lr_at_epoch(double base_lr, double gamma, std::int64_t epoch);

struct TrainConfig {
  std::int64_t epochs = 30;
  std::int64_t batch_size = 32;
  double lr_backbone = 1e-3;
  double lr_classifier = 5e-3;
  double weight_decay = 1e-4;
  double gamma = 0.9;
  std::uint64_t seed = 1;
  loss::LossMode loss_mode = loss::LossMode::cucn;
  loss::WeightScheme weights_scheme = loss::WeightScheme::inv_freq;
  std::vector<double> manual_weights;
  bool cbam_on = true;
  double flip_prob = 0.5;

  void validate() const;
  /// 60 epochs, batch 256, lr 1e-4 / 5e-4.
  static TrainConfig affectnet_preset();
};

struct EpochRecord {
  std::int64_t epoch = 0;
  double lr = 0;  // backbone learning rate used during the epoch
  double train_loss = 0;
  double eval_acc = 0;
  double eval_min_class_acc = 0;
  double eval_max_class_acc = 0;
};

inline constexpr const char* kHistoryHeader =
    "epoch,lr,train_loss,eval_acc,eval_min_class_acc,eval_max_class_acc";

std::string history_csv(const std::vector<EpochRecord>& history);
std::vector<EpochRecord> parse_history_csv(const std::string& text);

struct TrainResult {
  std::vector<EpochRecord> history;
  model::Backbone final_model;
  model::Backbone best_model;
  std::int64_t best_epoch = 0;
  metrics::EvalReport final_report;
};

/// Builds a network from `arch` (in_channels, input_size and num_classes are
/// taken from the training data, cbam_on from `config`) and trains it. When
/// `out_dir` is given, writes history.csv, final.cuck and best.cuck there.
TrainResult train(const TrainConfig& config, model::BackboneConfig arch,
                  const data::Dataset& train_set, const data::Dataset& eval_set,
                  const std::optional<std::filesystem::path>& out_dir = std::nullopt);

/// Argmax of the mu-head logits in eval mode; ties pick the lowest class.
std::vector<std::int64_t> predict(model::Backbone& net, const data::Dataset& dataset);

metrics::EvalReport evaluate(model::Backbone& net, const data::Dataset& dataset);
metrics::EvalReport evaluate(std::span<const NamedBlob> checkpoint, const data::Dataset& dataset);

}  // namespace cucn::train
