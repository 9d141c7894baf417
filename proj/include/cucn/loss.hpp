// Copyright 2026 The CUCN Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cucn/backbone.hpp"

namespace cucn::loss {

enum class WeightScheme { none, inv_freq, manual };

/// Parses "none", "inv-freq" (or "inv_freq") and "manual".
WeightScheme parse_weight_scheme(std::string_view s);
std::string to_string(WeightScheme scheme);

/// Per-class multipliers applied to each sample's cross-entropy term.
struct ClassWeights {
  std::vector<double> w;

  std::size_t size() const { return w.size(); }
  /// Throws unless every weight is finite and positive.
  void validate() const;
};

ClassWeights unit_weights(std::size_t num_classes);

/// none -> 1; inv_freq -> total / (C * counts[c]); manual -> `manual` verbatim.
ClassWeights class_weights_from_counts(std::span<const std::int64_t> counts, WeightScheme scheme,
                                       std::span<const double> manual = {});

/// -(1/N) sum_n w[y_n] log softmax(logits)[n, y_n]
Tensor weighted_ce(const Tensor& logits, std::span<const std::int64_t> labels,
                   const ClassWeights& weights);

using Permutation = std::vector<std::int64_t>;

/// Uniform random permutation (Fisher-Yates); fixed points are allowed.
Permutation pair_permutation(std::size_t batch_size, nn::Rng& rng);

inline constexpr double kMixEpsilon = 1e-8;

struct MixedBatch {
  Permutation perm;
  Tensor mu_tilde;  // [N x feature_dim]
  std::vector<std::int64_t> labels_i;
  std::vector<std::int64_t> labels_j;
};

/// mu~ = (sigma_i * mu_i + sigma_j * mu_j) / (sigma_i + sigma_j + eps), j = perm[i].
/// The more uncertain sample of a pair owns the larger share of the mixture.
MixedBatch mix_features(const model::FeatureBundle& bundle, const Permutation& perm,
                        std::span<const std::int64_t> labels);

/// Cross-entropy of the mixed logits against both constituent labels, summed.
Tensor addup_loss(const Tensor& logits_mixed, std::span<const std::int64_t> labels_i,
                  std::span<const std::int64_t> labels_j, const ClassWeights& weights);

enum class LossMode { ce, wce, mix, cucn };

LossMode parse_loss_mode(std::string_view s);
std::string to_string(LossMode mode);

/// ce: unit-weighted CE on mu. wce: weighted CE on mu. mix: unit-weighted
/// add-up loss on mu~. cucn: weighted add-up loss on mu~.
Tensor training_loss(const model::FeatureBundle& bundle, const model::ClassifierHead& head,
                     std::span<const std::int64_t> labels, const ClassWeights& weights,
                     LossMode mode, nn::Rng& rng);

/// Same, with the pairing given explicitly for the mixing modes.
Tensor training_loss(const model::FeatureBundle& bundle, const model::ClassifierHead& head,
                     std::span<const std::int64_t> labels, const ClassWeights& weights,
                     LossMode mode, const Permutation& perm);

}  // namespace cucn::loss
