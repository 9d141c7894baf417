// Copyright 2026 The CUCN Authors
// SPDX-License-Identifier: Apache-2.0

#include "cucn/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace cucn {

namespace {

double evaluate(const std::function<Tensor()>& fn) {
  NoGradGuard guard;
  const double v = fn().item();
  if (!std::isfinite(v)) throw NumericError("gradient_check: non-finite function value");
  return v;
}

}  // namespace

GradCheckResult gradient_check(const std::function<Tensor()>& fn, std::span<Tensor> inputs,
                               double h, double tol) {
  for (auto& in : inputs) {
    if (in.dtype() != DType::f64) throw Error("gradient_check requires f64 inputs");
    in.zero_grad();
    in.set_requires_grad(true);
  }
  const Tensor loss = fn();
  if (loss.numel() != 1) throw ShapeError("gradient_check: function must be scalar-valued");
  if (!std::isfinite(loss.item())) throw NumericError("gradient_check: non-finite loss");
  backward(loss);

  GradCheckResult result;
  for (std::size_t t = 0; t < inputs.size(); ++t) {
    auto& in = inputs[t];
    const std::vector<double> analytic =
        in.has_grad() ? in.grad().to_vector() : std::vector<double>(in.numel(), 0.0);
    auto values = in.mutable_data<double>();
    for (std::int64_t i = 0; i < in.numel(); ++i) {
      const double original = values[i];
      values[i] = original + h;
      const double up = evaluate(fn);
      values[i] = original - h;
      const double down = evaluate(fn);
      values[i] = original;
      const double numeric = (up - down) / (2 * h);
      const double err = std::abs(analytic[i] - numeric) / std::max(1.0, std::abs(numeric));
      if (!std::isfinite(err)) throw NumericError("gradient_check: non-finite gradient");
      if (err > result.max_relative_error || result.worst_index < 0) {
        result.max_relative_error = err;
        result.worst_input = t;
        result.worst_index = i;
      }
      ++result.coordinates;
    }
  }
  result.passed = result.max_relative_error < tol;
  return result;
}

GradCheckResult gradient_check(const std::function<Tensor(const Tensor&)>& fn, const Tensor& point,
                               double h, double tol) {
  std::vector<Tensor> inputs{point.clone()};
  const Tensor x = inputs[0];
  return gradient_check([&] { return fn(x); }, inputs, h, tol);
}

}  // namespace cucn
