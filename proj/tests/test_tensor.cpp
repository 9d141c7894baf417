// Copyright 2026 The CUCN Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>

#include "cucn/gradcheck.hpp"
#include "cucn/ops.hpp"
#include "oracles.hpp"

using namespace cucn;

TEST_CASE("tensor construction keeps shape and values") {
  const auto t = Tensor::from_values({2, 3}, {1, 2, 3, 4, 5, 6}, DType::f64);
  CHECK(t.numel() == 6);
  CHECK(t.shape() == Shape{2, 3});
  CHECK(t.dtype() == DType::f64);
  CHECK(t.at(4) == 5.0);
  CHECK(t.to_vector() == oracle::Vec{1, 2, 3, 4, 5, 6});
  CHECK_THROWS_AS(Tensor::from_values({2, 2}, {1, 2, 3}), ShapeError);
  CHECK_THROWS_AS(Tensor::zeros({2, 0}), ShapeError);
  CHECK_THROWS_AS((void)t.data<float>(), ShapeError);
}

TEST_CASE("f32 conversion rounds and clone is independent") {
  const auto t = Tensor::from_values({3}, {0.1, 0.2, 0.3}, DType::f64);
  const auto f = t.to(DType::f32);
  CHECK(f.dtype() == DType::f32);
  CHECK(f.at(0) == static_cast<double>(0.1f));
  auto c = t.clone();
  c.mutable_data<double>()[0] = 7;
  CHECK(t.at(0) == 0.1);
}

TEST_CASE("requires_grad is only settable on leaves") {
  auto x = Tensor::scalar(3, DType::f64);
  x.set_requires_grad();
  const auto y = mul(x, x);
  CHECK_FALSE(y.is_leaf());
  auto y2 = y;
  CHECK_THROWS_AS(y2.set_requires_grad(), Error);
}

TEST_CASE("backward of x squared at 3 is 6") {
  auto x = Tensor::scalar(3, DType::f64);
  x.set_requires_grad();
  backward(mul(x, x));
  CHECK(x.grad().item() == doctest::Approx(6.0).epsilon(1e-15));
}

TEST_CASE("backward of sigmoid at 0 is one quarter") {
  auto x = Tensor::scalar(0, DType::f64);
  x.set_requires_grad();
  backward(sigmoid(x));
  CHECK(x.grad().item() == 0.25);
}

TEST_CASE("gradients accumulate across backward calls until zeroed") {
  auto x = Tensor::scalar(2, DType::f64);
  x.set_requires_grad();
  backward(scale(x, 3));
  backward(scale(x, 3));
  CHECK(x.grad().item() == 6.0);
  x.zero_grad();
  CHECK_FALSE(x.has_grad());
}

TEST_CASE("a shared subexpression is visited once per replay") {
  // y = (x + x) * (x + x), dy/dx = 8x.
  auto x = Tensor::scalar(1.5, DType::f64);
  x.set_requires_grad();
  const auto s = add(x, x);
  const auto y = mul(s, s);
  const auto tape = Tape::record(y);
  CHECK(tape.size() == 3);
  auto names = tape.op_names();
  CHECK(names.size() == 2);
  CHECK(names.front() == "add");
  CHECK(names.back() == "mul");
  backward(y);
  CHECK(x.grad().item() == doctest::Approx(12.0).epsilon(1e-15));
}

TEST_CASE("backward needs a scalar loss that depends on a gradient leaf") {
  auto x = Tensor::from_values({2}, {1, 2}, DType::f64);
  x.set_requires_grad();
  CHECK_THROWS_AS(backward(scale(x, 2)), ShapeError);
  const auto c = Tensor::scalar(1, DType::f64);
  CHECK_THROWS_AS(backward(c), Error);
}

TEST_CASE("no-grad guard suppresses graph recording") {
  auto x = Tensor::scalar(1, DType::f64);
  x.set_requires_grad();
  {
    NoGradGuard guard;
    CHECK_FALSE(grad_enabled());
    CHECK_FALSE(mul(x, x).requires_grad());
  }
  CHECK(grad_enabled());
  CHECK(mul(x, x).requires_grad());
}

TEST_CASE("non-finite outputs are an error, never silent") {
  const auto big = Tensor::scalar(1000, DType::f64);
  CHECK_THROWS_AS(cucn::exp(big), NumericError);
  const auto z = Tensor::scalar(0, DType::f64);
  CHECK_THROWS_AS(div(Tensor::scalar(1, DType::f64), z), NumericError);
}

TEST_CASE("gradient_check on a linear map is essentially exact") {
  std::mt19937_64 rng(3);
  const auto w = oracle::random_tensor({4}, rng);
  const auto point = oracle::random_tensor({4}, rng);
  const auto r = gradient_check([&](const Tensor& x) { return sum(mul(x, w)); }, point);
  CHECK(r.max_relative_error < 1e-10);
  CHECK(r.passed);
  CHECK(r.coordinates == 4);
}

TEST_CASE("gradient_check reports a wrong gradient") {
  // relu evaluated exactly at its kink: analytic 0, numeric 0.5.
  const auto point = Tensor::from_values({1}, {0.0}, DType::f64);
  const auto r = gradient_check([](const Tensor& x) { return sum(relu(x)); }, point);
  CHECK_FALSE(r.passed);
  CHECK(r.max_relative_error == doctest::Approx(0.5));
}

TEST_CASE("gradient_check rejects f32 inputs and non-finite evaluations") {
  const auto p32 = Tensor::from_values({1}, {1.0}, DType::f32);
  CHECK_THROWS_AS(gradient_check([](const Tensor& x) { return sum(x); }, p32), Error);
  const auto p = Tensor::from_values({1}, {710.0}, DType::f64);
  CHECK_THROWS_AS((void)gradient_check([](const Tensor& x) { return sum(cucn::exp(x)); }, p),
                  NumericError);
}

TEST_CASE("conv2d into relu into sum matches central differences") {
  std::mt19937_64 rng(11);
  std::vector<Tensor> in{oracle::random_tensor({2, 2, 4, 4}, rng),
                         oracle::random_tensor({3, 2, 3, 3}, rng)};
  const auto r = gradient_check([&] { return sum(relu(conv2d(in[0], in[1], 1, 1))); }, in);
  CHECK(r.max_relative_error < 1e-5);
}

TEST_CASE("forward results are bitwise deterministic") {
  std::mt19937_64 rng(5);
  const auto x = oracle::random_tensor({2, 3, 6, 6}, rng, DType::f32);
  const auto w = oracle::random_tensor({4, 3, 3, 3}, rng, DType::f32);
  const auto a = conv2d(x, w, 1, 1);
  const auto b = conv2d(x, w, 1, 1);
  CHECK(std::equal(a.data<float>().begin(), a.data<float>().end(), b.data<float>().begin()));
}
