// Copyright 2026 The CUCN Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace cucn::metrics {

/// Rows are true classes, columns predicted classes.
using ConfusionMatrix = std::vector<std::vector<std::int64_t>>;

ConfusionMatrix confusion_matrix(std::span<const std::int64_t> preds,
                                 std::span<const std::int64_t> labels, std::int64_t num_classes);

struct EvalReport {
  ConfusionMatrix confusion;
  /// confusion[c][c] / row_sum[c]; 0 for classes without true samples.
  std::vector<double> per_class_acc;
  /// Classes with no true samples; left out of max/min.
  std::vector<std::int64_t> excluded_classes;
  double overall_acc = 0;  // trace / total
  double max_class_acc = 0;
  double min_class_acc = 0;
  double acc_gap = 0;  // max - min

  std::int64_t num_classes() const { return static_cast<std::int64_t>(confusion.size()); }
  bool operator==(const EvalReport&) const = default;
};

EvalReport summarize(const ConfusionMatrix& confusion);

/// Flat JSON object keyed by the EvalReport field names.
std::string to_json(const EvalReport& report);
EvalReport report_from_json(const std::string& text);

/// Headerless CSV of integers, one row per true class.
std::string confusion_csv(const ConfusionMatrix& confusion);
ConfusionMatrix parse_confusion_csv(const std::string& text);

}  // namespace cucn::metrics
