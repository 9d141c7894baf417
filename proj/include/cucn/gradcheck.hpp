// Copyright 2026 The CUCN Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <functional>
#include <span>

#include "cucn/tensor.hpp"

namespace cucn {

struct GradCheckResult {
  /// max over coordinates of |analytic - numeric| / max(1, |numeric|)
  double max_relative_error = 0;
  std::size_t worst_input = 0;
  std::int64_t worst_index = -1;
  std::int64_t coordinates = 0;
  bool passed = false;
};

/// Central-difference check of a scalar function of one f64 tensor.
GradCheckResult gradient_check(const std::function<Tensor(const Tensor&)>& fn, const Tensor& point,
                               double h = 1e-6, double tol = 1e-5);

/// Checks d fn() / d inputs for leaf f64 tensors that fn reads. The inputs are
/// perturbed in place and restored; their gradients are overwritten.
GradCheckResult gradient_check(const std::function<Tensor()>& fn, std::span<Tensor> inputs,
                               double h = 1e-6, double tol = 1e-5);

}  // namespace cucn
