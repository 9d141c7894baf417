// Copyright 2026 The CUCN Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace cucn::verify {

/// Outcome of one gradient case, worst over all seeds.
struct GradCase {
  std::string name;
  double tolerance = 0;
  double max_relative_error = 0;
  std::int64_t coordinates = 0;
  bool passed = false;
};

inline constexpr double kOpTolerance = 1e-5;
inline constexpr double kModelTolerance = 1e-4;
inline constexpr double kStep = 1e-6;

/// Central-difference checks in f64 of every differentiable op, the layers
/// built from them, and the full composed model (two 8x8 samples through a
/// tiny CBAM network and the mixing loss). Each op case runs on `seeds`
/// random draws; the full-model case runs once.
std::vector<GradCase> run_gradient_suite(int seeds = 10);

}  // namespace cucn::verify
