// Copyright 2026 The CUCN Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "cucn/nn.hpp"

namespace cucn::data {

struct Dataset {
  Tensor images;  // [N x ch x H x W], f32, values in [0, 1]
  std::vector<std::int64_t> labels;
  std::vector<std::int64_t> class_counts;

  std::int64_t size() const { return static_cast<std::int64_t>(labels.size()); }
  std::int64_t num_classes() const { return static_cast<std::int64_t>(class_counts.size()); }
  /// Throws unless labels, counts and image batch agree.
  void validate() const;
};

std::vector<std::int64_t> count_classes(std::span<const std::int64_t> labels,
                                        std::int64_t num_classes);

/// Reads a `path,label` CSV manifest (header required, paths relative to the
/// manifest). Each path is a CUTN ch x H x W tensor stored as u8 (scaled by
/// 1/255) or f32. The class count defaults to max(label) + 1.
Dataset load_dataset(const std::filesystem::path& manifest,
                     std::optional<std::int64_t> num_classes = std::nullopt);

/// Writes `manifest.csv` and `images/NNNNNN.cutn` (f32) under `dir`.
void save_dataset(const Dataset& dataset, const std::filesystem::path& dir);

struct SynthSpec {
  std::vector<std::int64_t> class_counts;
  std::int64_t image_size = 16;
  std::int64_t channels = 1;
  double noise_std = 0.3;
  std::uint64_t seed = 1;

  void validate() const;
};

// Template intensities: background level and the extra brightness of the
// class band. Chosen so that at noise_std 0.3 the classes overlap slightly.
inline constexpr double kTemplateBackground = 0.44;
inline constexpr double kTemplateContrast = 0.12;

/// Class `label` lights up its own horizontal band of rows
/// [label*H/C, (label+1)*H/C). Bands are disjoint and mirror-symmetric, so a
/// horizontal flip never changes the class. Returns [ch x H x W].
Tensor class_template(std::int64_t label, std::int64_t num_classes, std::int64_t size,
                      std::int64_t channels = 1);

/// Samples are template + N(0, noise_std^2) i.i.d. per pixel, clipped to
/// [0, 1], emitted class by class. Pure function of the spec.
Dataset synth_generate(const SynthSpec& spec);

/// Mirrors each row of every channel of a ch x H x W image in place.
void hflip(std::span<float> image, std::int64_t channels, std::int64_t height, std::int64_t width);

/// Horizontal flip with probability flip_prob; returns a new [ch x H x W] tensor.
Tensor augment(const Tensor& image, nn::Rng& rng, double flip_prob);

/// Stacks the selected samples into [B x ch x H x W].
Tensor gather_images(const Dataset& dataset, std::span<const std::int64_t> indices);

}  // namespace cucn::data
