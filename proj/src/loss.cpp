// Copyright 2026 The CUCN Authors
// SPDX-License-Identifier: Apache-2.0

#include "cucn/loss.hpp"

#include <cmath>
#include <numeric>

namespace cucn::loss {

WeightScheme parse_weight_scheme(std::string_view s) {
  if (s == "none") return WeightScheme::none;
  if (s == "inv-freq" || s == "inv_freq") return WeightScheme::inv_freq;
  if (s == "manual") return WeightScheme::manual;
  throw Error("unknown weights scheme '" + std::string(s) + "'");
}

std::string to_string(WeightScheme scheme) {
  switch (scheme) {
    case WeightScheme::none: return "none";
    case WeightScheme::inv_freq: return "inv-freq";
    case WeightScheme::manual: return "manual";
  }
  return "?";
}

void ClassWeights::validate() const {
  if (w.empty()) throw Error("class weights: empty");
  for (const double v : w)
    if (!std::isfinite(v) || v <= 0) throw Error("class weights must be finite and positive");
}

ClassWeights unit_weights(std::size_t num_classes) {
  return {std::vector<double>(num_classes, 1.0)};
}

ClassWeights class_weights_from_counts(std::span<const std::int64_t> counts, WeightScheme scheme,
                                       std::span<const double> manual) {
  if (counts.empty()) throw Error("class weights: no classes");
  for (const auto c : counts)
    if (c < 1) throw Error("class weights: every class needs a positive count");
  const auto classes = counts.size();
  ClassWeights out;
  switch (scheme) {
    case WeightScheme::none:
      out = unit_weights(classes);
      break;
    case WeightScheme::inv_freq: {
      const double total =
          static_cast<double>(std::accumulate(counts.begin(), counts.end(), std::int64_t{0}));
      for (const auto c : counts)
        out.w.push_back(total / (static_cast<double>(classes) * static_cast<double>(c)));
      break;
    }
    case WeightScheme::manual:
      if (manual.size() != classes)
        throw Error("class weights: manual list has " + std::to_string(manual.size()) +
                    " entries for " + std::to_string(classes) + " classes");
      out.w.assign(manual.begin(), manual.end());
      break;
  }
  out.validate();
  return out;
}

Tensor weighted_ce(const Tensor& logits, std::span<const std::int64_t> labels,
                   const ClassWeights& weights) {
  return weighted_nll(log_softmax(logits), labels, weights.w);
}

Permutation pair_permutation(std::size_t batch_size, nn::Rng& rng) {
  if (batch_size < 1) throw Error("pair_permutation: empty batch");
  Permutation perm(batch_size);
  std::iota(perm.begin(), perm.end(), std::int64_t{0});
  for (std::size_t i = batch_size - 1; i > 0; --i) {
    std::uniform_int_distribution<std::size_t> pick(0, i);
    std::swap(perm[i], perm[pick(rng)]);
  }
  return perm;
}

MixedBatch mix_features(const model::FeatureBundle& bundle, const Permutation& perm,
                        std::span<const std::int64_t> labels) {
  const auto& mu = bundle.mu;
  const auto& sigma = bundle.sigma;
  if (mu.ndim() != 2 || mu.shape() != sigma.shape())
    throw ShapeError("mix_features: mu " + shape_str(mu.shape()) + " vs sigma " +
                     shape_str(sigma.shape()));
  const auto n = static_cast<std::size_t>(mu.dim(0));
  if (perm.size() != n || labels.size() != n)
    throw ShapeError("mix_features: permutation and labels must cover the batch");
  std::vector<bool> hit(n, false);
  for (const auto j : perm) {
    if (j < 0 || static_cast<std::size_t>(j) >= n || hit[j])
      throw Error("mix_features: pairing is not a permutation");
    hit[j] = true;
  }
  for (const double s : sigma.to_vector())
    if (!(s > 0)) throw NumericError("mix_features: sigma must be strictly positive");

  MixedBatch out;
  out.perm = perm;
  const Tensor mu_j = index_rows(mu, perm);
  const Tensor sigma_j = index_rows(sigma, perm);
  const Tensor num = add(mul(sigma, mu), mul(sigma_j, mu_j));
  const Tensor den = add_scalar(add(sigma, sigma_j), kMixEpsilon);
  out.mu_tilde = div(num, den);
  out.labels_i.assign(labels.begin(), labels.end());
  for (const auto j : perm) out.labels_j.push_back(labels[j]);
  return out;
}

Tensor addup_loss(const Tensor& logits_mixed, std::span<const std::int64_t> labels_i,
                  std::span<const std::int64_t> labels_j, const ClassWeights& weights) {
  const Tensor log_probs = log_softmax(logits_mixed);
  return add(weighted_nll(log_probs, labels_i, weights.w),
             weighted_nll(log_probs, labels_j, weights.w));
}

LossMode parse_loss_mode(std::string_view s) {
  if (s == "ce") return LossMode::ce;
  if (s == "wce") return LossMode::wce;
  if (s == "mix") return LossMode::mix;
  if (s == "cucn") return LossMode::cucn;
  throw Error("unknown loss mode '" + std::string(s) + "'");
}

std::string to_string(LossMode mode) {
  switch (mode) {
    case LossMode::ce: return "ce";
    case LossMode::wce: return "wce";
    case LossMode::mix: return "mix";
    case LossMode::cucn: return "cucn";
  }
  return "?";
}

Tensor training_loss(const model::FeatureBundle& bundle, const model::ClassifierHead& head,
                     std::span<const std::int64_t> labels, const ClassWeights& weights,
                     LossMode mode, const Permutation& perm) {
  const auto unit = unit_weights(head.weight.dim(0));
  switch (mode) {
    case LossMode::ce: return weighted_ce(model::classify(bundle.mu, head), labels, unit);
    case LossMode::wce: return weighted_ce(model::classify(bundle.mu, head), labels, weights);
    case LossMode::mix:
    case LossMode::cucn: {
      const MixedBatch mixed = mix_features(bundle, perm, labels);
      return addup_loss(model::classify(mixed.mu_tilde, head), mixed.labels_i, mixed.labels_j,
                        mode == LossMode::mix ? unit : weights);
    }
  }
  throw Error("training_loss: invalid mode");
}

Tensor training_loss(const model::FeatureBundle& bundle, const model::ClassifierHead& head,
                     std::span<const std::int64_t> labels, const ClassWeights& weights,
                     LossMode mode, nn::Rng& rng) {
  Permutation perm;
  if (mode == LossMode::mix || mode == LossMode::cucn)
    perm = pair_permutation(static_cast<std::size_t>(bundle.mu.dim(0)), rng);
  return training_loss(bundle, head, labels, weights, mode, perm);
}

}  // namespace cucn::loss
