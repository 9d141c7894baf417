// Copyright 2026 The CUCN Authors
// SPDX-License-Identifier: Apache-2.0

#include "cucn/metrics.hpp"

#include <json.hpp>

#include "cucn/keyvalue.hpp"
#include "cucn/tensor.hpp"

namespace cucn::metrics {

ConfusionMatrix confusion_matrix(std::span<const std::int64_t> preds,
                                 std::span<const std::int64_t> labels, std::int64_t num_classes) {
  if (preds.size() != labels.size())
    throw Error("confusion_matrix: " + std::to_string(preds.size()) + " predictions for " +
                std::to_string(labels.size()) + " labels");
  if (num_classes < 1) throw Error("confusion_matrix: need at least one class");
  ConfusionMatrix m(static_cast<std::size_t>(num_classes),
                    std::vector<std::int64_t>(static_cast<std::size_t>(num_classes), 0));
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const auto y = labels[i], p = preds[i];
    if (y < 0 || y >= num_classes || p < 0 || p >= num_classes)
      throw Error("confusion_matrix: class id out of range at sample " + std::to_string(i));
    ++m[y][p];
  }
  return m;
}

EvalReport summarize(const ConfusionMatrix& confusion) {
  const auto classes = confusion.size();
  if (classes == 0) throw Error("summarize: empty confusion matrix");
  EvalReport r;
  r.confusion = confusion;
  std::int64_t total = 0, correct = 0;
  bool any = false;
  for (std::size_t c = 0; c < classes; ++c) {
    if (confusion[c].size() != classes) throw Error("summarize: confusion matrix is not square");
    std::int64_t row = 0;
    for (const auto v : confusion[c]) {
      if (v < 0) throw Error("summarize: negative count");
      row += v;
    }
    total += row;
    correct += confusion[c][c];
    if (row == 0) {
      r.per_class_acc.push_back(0.0);
      r.excluded_classes.push_back(static_cast<std::int64_t>(c));
      continue;
    }
    const double acc = static_cast<double>(confusion[c][c]) / static_cast<double>(row);
    r.per_class_acc.push_back(acc);
    r.max_class_acc = any ? std::max(r.max_class_acc, acc) : acc;
    r.min_class_acc = any ? std::min(r.min_class_acc, acc) : acc;
    any = true;
  }
  if (total == 0) throw Error("summarize: all-zero confusion matrix");
  r.overall_acc = static_cast<double>(correct) / static_cast<double>(total);
  r.acc_gap = r.max_class_acc - r.min_class_acc;
  return r;
}

std::string to_json(const EvalReport& report) {
  nlohmann::ordered_json j;
  j["num_classes"] = report.num_classes();
  j["overall_acc"] = report.overall_acc;
  j["max_class_acc"] = report.max_class_acc;
  j["min_class_acc"] = report.min_class_acc;
  j["acc_gap"] = report.acc_gap;
  j["per_class_acc"] = report.per_class_acc;
  j["excluded_classes"] = report.excluded_classes;
  j["confusion"] = report.confusion;
  return j.dump(2) + "\n";
}

EvalReport report_from_json(const std::string& text) {
  try {
    const auto j = nlohmann::json::parse(text);
    EvalReport r;
    r.overall_acc = j.at("overall_acc").get<double>();
    r.max_class_acc = j.at("max_class_acc").get<double>();
    r.min_class_acc = j.at("min_class_acc").get<double>();
    r.acc_gap = j.at("acc_gap").get<double>();
    r.per_class_acc = j.at("per_class_acc").get<std::vector<double>>();
    r.excluded_classes = j.at("excluded_classes").get<std::vector<std::int64_t>>();
    r.confusion = j.at("confusion").get<ConfusionMatrix>();
    if (j.at("num_classes").get<std::int64_t>() != r.num_classes())
      throw FormatError("metrics JSON: num_classes disagrees with confusion matrix");
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("metrics JSON: ") + e.what());
  }
}

std::string confusion_csv(const ConfusionMatrix& confusion) {
  std::string out;
  for (const auto& row : confusion) out += join_ints(row) + "\n";
  return out;
}

ConfusionMatrix parse_confusion_csv(const std::string& text) {
  ConfusionMatrix m;
  for (const auto& line : split(text, '\n')) {
    if (line.empty()) continue;
    m.push_back(parse_int_list(line));
  }
  return m;
}

}  // namespace cucn::metrics
