// Copyright 2026 The CUCN Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include "cucn/backbone.hpp"
#include "cucn/data.hpp"
#include "cucn/train.hpp"

namespace cucn::cli {

/// Everything a config file can set.
struct RunConfig {
  data::SynthSpec synth;
  train::TrainConfig train;
  model::BackboneConfig arch;

  RunConfig();
  /// Applies one `key = value` setting. Keys mirror the field names of
  /// TrainConfig, BackboneConfig and SynthSpec; `seed` sets both seeds and
  /// `preset` (desk or affectnet) resets the training hyperparameters.
  void apply(std::string_view key, std::string_view value);
  void apply_file(const std::filesystem::path& path);
  /// Effective settings as `key = value` lines accepted by apply().
  std::string describe() const;
};

/// Parses `none`, `inv-freq` or `manual:<w1,w2,...>` into the config.
void apply_weights_scheme(train::TrainConfig& config, std::string_view text);

/// Accepts a manifest path or a directory holding manifest.csv.
std::filesystem::path resolve_manifest(const std::filesystem::path& path);

/// Exit codes: 0 success, 1 runtime failure, 2 usage error.
int cli_main(int argc, const char* const* argv, std::ostream& out, std::ostream& err);
int cli_main(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace cucn::cli
