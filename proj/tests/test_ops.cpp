// Copyright 2026 The CUCN Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>
#include <limits>

#include "cucn/gradcheck.hpp"
#include "cucn/ops.hpp"
#include "oracles.hpp"

using namespace cucn;

TEST_CASE("matmul identity and scalar products") {
  const auto eye = Tensor::from_values({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1}, DType::f64);
  const auto x = Tensor::from_values({3, 2}, {1, 2, 3, 4, 5, 6}, DType::f64);
  CHECK(matmul(eye, x).to_vector() == x.to_vector());
  const auto six = matmul(Tensor::from_values({1, 1}, {2}), Tensor::from_values({1, 1}, {3}));
  CHECK(six.shape() == Shape{1, 1});
  CHECK(six.item() == 6.0);
  CHECK_THROWS_AS(matmul(x, x), ShapeError);
}

TEST_CASE("matmul matches the triple-loop oracle") {
  std::mt19937_64 rng(7);
  const auto a = oracle::random_tensor({4, 3}, rng);
  const auto b = oracle::random_tensor({3, 5}, rng);
  const auto expect = oracle::matmul(a.to_vector(), b.to_vector(), 4, 3, 5);
  CHECK(oracle::max_abs_diff(matmul(a, b).to_vector(), expect) < 1e-14);
}

TEST_CASE("matmul on blocked sizes matches the oracle in both precisions") {
  std::mt19937_64 rng(8);
  for (const auto dtype : {DType::f64, DType::f32}) {
    const auto a = oracle::random_tensor({9, 70}, rng, dtype);
    const auto b = oracle::random_tensor({70, 133}, rng, dtype);
    const auto expect = oracle::matmul(a.to_vector(), b.to_vector(), 9, 70, 133);
    const double tol = dtype == DType::f64 ? 1e-12 : 1e-4;
    CHECK(oracle::max_abs_diff(matmul(a, b).to_vector(), expect) < tol);
    const auto bt = Tensor::from_values({133, 70}, [&] {
      oracle::Vec v(133 * 70);
      const auto bv = b.to_vector();
      for (int p = 0; p < 70; ++p)
        for (int j = 0; j < 133; ++j) v[j * 70 + p] = bv[p * 133 + j];
      return v;
    }(), dtype);
    CHECK(oracle::max_abs_diff(matmul_nt(a, bt).to_vector(), expect) < tol);
  }
}

TEST_CASE("conv2d closed-form cases") {
  SUBCASE("1x1 unit kernel is the identity") {
    std::mt19937_64 rng(1);
    const auto x = oracle::random_tensor({2, 1, 4, 4}, rng);
    const auto w = Tensor::full({1, 1, 1, 1}, 1.0, DType::f64);
    CHECK(conv2d(x, w, 1, 0).to_vector() == x.to_vector());
  }
  SUBCASE("all-ones 5x5 with all-ones 3x3 gives nines") {
    const auto x = Tensor::full({1, 1, 5, 5}, 1.0, DType::f64);
    const auto w = Tensor::full({1, 1, 3, 3}, 1.0, DType::f64);
    const auto y = conv2d(x, w, 1, 0);
    CHECK(y.shape() == Shape{1, 1, 3, 3});
    for (const double v : y.to_vector()) CHECK(v == 9.0);
  }
}

TEST_CASE("conv2d matches the six-loop oracle across geometries") {
  std::mt19937_64 rng(21);
  struct Geo {
    std::int64_t n, c, h, f, k, stride, pad;
  };
  for (const Geo g : {Geo{2, 3, 5, 4, 3, 1, 1}, Geo{1, 2, 5, 3, 3, 2, 0}, Geo{3, 1, 8, 2, 7, 1, 3},
                      Geo{2, 4, 6, 5, 1, 1, 0}, Geo{1, 2, 7, 2, 3, 2, 1}}) {
    const auto x = oracle::random_tensor({g.n, g.c, g.h, g.h}, rng);
    const auto w = oracle::random_tensor({g.f, g.c, g.k, g.k}, rng);
    std::int64_t oh = 0, ow = 0;
    const auto expect = oracle::conv2d(x.to_vector(), w.to_vector(), g.n, g.c, g.h, g.h, g.f, g.k,
                                       g.stride, g.pad, oh, ow);
    const auto y = conv2d(x, w, static_cast<int>(g.stride), static_cast<int>(g.pad));
    CHECK(y.shape() == Shape{g.n, g.f, oh, ow});
    CHECK(oracle::max_abs_diff(y.to_vector(), expect) < 1e-13);
  }
}

TEST_CASE("conv2d rejects inexact tiling and channel mismatch") {
  const auto x = Tensor::zeros({1, 2, 4, 4}, DType::f64);
  CHECK_THROWS_AS(conv2d(x, Tensor::zeros({1, 2, 3, 3}, DType::f64), 2, 1), ShapeError);
  CHECK_THROWS_AS(conv2d(x, Tensor::zeros({1, 3, 3, 3}, DType::f64), 1, 1), ShapeError);
  CHECK_THROWS_AS(conv2d(x, Tensor::zeros({1, 2, 7, 7}, DType::f64), 1, 0), ShapeError);
}

TEST_CASE("window output size follows the closed form for every valid geometry") {
  for (std::int64_t h = 1; h <= 12; ++h)
    for (int k = 1; k <= 7; ++k)
      for (int s = 1; s <= 3; ++s)
        for (int p = 0; p <= 3; ++p) {
          const auto span = h + 2 * p;
          if (k > span || (span - k) % s != 0) {
            CHECK_THROWS_AS(window_output_size(h, k, s, p), ShapeError);
          } else {
            CHECK(window_output_size(h, k, s, p) == (span - k) / s + 1);
          }
        }
}

TEST_CASE("pooling on a 2x2 window") {
  const auto x = Tensor::from_values({1, 1, 2, 2}, {1, 2, 3, 4}, DType::f64);
  CHECK(max_pool2d(x, 2, 2).item() == 4.0);
  CHECK(avg_pool2d(x, 2, 2).item() == 2.5);
  const auto c = Tensor::full({2, 3, 4, 4}, -1.25, DType::f64);
  for (const double v : max_pool2d(c, 2, 2).to_vector()) CHECK(v == -1.25);
  for (const double v : avg_pool2d(c, 2, 2).to_vector()) CHECK(v == -1.25);
  CHECK_THROWS_AS(max_pool2d(Tensor::zeros({1, 1, 3, 3}), 2, 2), ShapeError);
}

TEST_CASE("global pools against a loop oracle") {
  const auto q = Tensor::from_values({1, 1, 2, 2}, {1, 3, 5, 7}, DType::f64);
  CHECK(global_avg_pool(q).item() == 4.0);
  CHECK(global_max_pool(q).item() == 7.0);
  const auto c = Tensor::full({2, 2, 3, 3}, 0.7, DType::f64);
  for (const double v : global_avg_pool(c).to_vector()) CHECK(v == doctest::Approx(0.7));
  for (const double v : global_max_pool(c).to_vector()) CHECK(v == 0.7);

  std::mt19937_64 rng(4);
  const auto x = oracle::random_tensor({3, 4, 5, 5}, rng);
  const auto xv = x.to_vector();
  const auto avg = global_avg_pool(x).to_vector();
  const auto mx = global_max_pool(x).to_vector();
  for (int n = 0; n < 3; ++n)
    for (int ch = 0; ch < 4; ++ch) {
      double s = 0, m = -INFINITY;
      for (int i = 0; i < 25; ++i) {
        s += xv[(n * 4 + ch) * 25 + i];
        m = std::max(m, xv[(n * 4 + ch) * 25 + i]);
      }
      CHECK(avg[n * 4 + ch] == doctest::Approx(s / 25).epsilon(1e-14));
      CHECK(mx[n * 4 + ch] == m);
    }
}

TEST_CASE("channel mean and max maps against a per-pixel loop") {
  std::mt19937_64 rng(9);
  const auto x = oracle::random_tensor({2, 3, 4, 4}, rng);
  const auto xv = x.to_vector();
  const auto mean_map = channel_mean(x);
  const auto max_map = channel_max(x);
  CHECK(mean_map.shape() == Shape{2, 1, 4, 4});
  for (int n = 0; n < 2; ++n)
    for (int p = 0; p < 16; ++p) {
      double s = 0, m = -INFINITY;
      for (int ch = 0; ch < 3; ++ch) {
        s += xv[(n * 3 + ch) * 16 + p];
        m = std::max(m, xv[(n * 3 + ch) * 16 + p]);
      }
      CHECK(mean_map.at(n * 16 + p) == doctest::Approx(s / 3).epsilon(1e-14));
      CHECK(max_map.at(n * 16 + p) == m);
    }
}

TEST_CASE("log_softmax closed forms") {
  const auto u = log_softmax(Tensor::from_values({1, 3}, {0, 0, 0}, DType::f64));
  for (const double v : u.to_vector()) CHECK(v == doctest::Approx(std::log(1.0 / 3)).epsilon(1e-15));

  const auto big = log_softmax(Tensor::from_values({1, 2}, {1000, 0}, DType::f64)).to_vector();
  CHECK(std::abs(big[0]) < 1e-300);
  CHECK(big[1] == doctest::Approx(-1000));

  CHECK_THROWS_AS(log_softmax(Tensor::zeros({2, 1}, DType::f64)), ShapeError);
}

TEST_CASE("log_softmax rows normalize and are shift invariant") {
  std::mt19937_64 rng(31);
  for (int trial = 0; trial < 20; ++trial) {
    const auto z = oracle::random_tensor({4, 6}, rng, DType::f64, -5, 5);
    const auto out = log_softmax(z).to_vector();
    const auto shifted = log_softmax(add_scalar(z, 17.5)).to_vector();
    for (int r = 0; r < 4; ++r) {
      double s = 0;
      for (int c = 0; c < 6; ++c) s += std::exp(out[r * 6 + c]);
      CHECK(std::abs(s - 1) < 1e-6);
    }
    CHECK(oracle::max_abs_diff(out, shifted) < 1e-12);
  }
}

TEST_CASE("log_softmax refuses non-finite logits") {
  const auto z = Tensor::from_values({1, 2}, {std::numeric_limits<double>::infinity(), 0},
                                     DType::f64);
  CHECK_THROWS_AS(log_softmax(z), NumericError);
}

TEST_CASE("weighted_nll validates labels and weights") {
  const auto lp = log_softmax(Tensor::zeros({2, 3}, DType::f64));
  const std::vector<std::int64_t> bad{0, 3};
  const std::vector<double> w{1, 1, 1};
  CHECK_THROWS(weighted_nll(lp, bad, w));
  const std::vector<std::int64_t> ok{0, 2};
  CHECK_THROWS(weighted_nll(lp, ok, std::vector<double>{1, 1}));
}

TEST_CASE("batch_norm_train standardizes every channel") {
  std::mt19937_64 rng(13);
  const auto x = oracle::random_tensor({4, 3, 5, 5}, rng, DType::f64, -3, 7);
  const auto gamma = Tensor::full({3}, 1.0, DType::f64);
  const auto beta = Tensor::zeros({3}, DType::f64);
  std::vector<double> bm, bv;
  const auto y = batch_norm_train(x, gamma, beta, 1e-5, &bm, &bv).to_vector();
  const auto xv = x.to_vector();
  for (int c = 0; c < 3; ++c) {
    double s = 0, s2 = 0, xs = 0;
    for (int n = 0; n < 4; ++n)
      for (int p = 0; p < 25; ++p) {
        s += y[(n * 3 + c) * 25 + p];
        xs += xv[(n * 3 + c) * 25 + p];
      }
    const double mean = s / 100, xmean = xs / 100;
    double xvar = 0;
    for (int n = 0; n < 4; ++n)
      for (int p = 0; p < 25; ++p) {
        s2 += std::pow(y[(n * 3 + c) * 25 + p] - mean, 2);
        xvar += std::pow(xv[(n * 3 + c) * 25 + p] - xmean, 2);
      }
    CHECK(std::abs(mean) < 1e-5);
    CHECK(std::abs(s2 / 100 - 1) < 1e-5);
    CHECK(bm[c] == doctest::Approx(xmean).epsilon(1e-12));
    CHECK(bv[c] == doctest::Approx(xvar / 100).epsilon(1e-12));
  }
}

TEST_CASE("batch_norm_train needs two samples per channel") {
  CHECK_THROWS(batch_norm_train(Tensor::zeros({1, 2, 1, 1}, DType::f64),
                                Tensor::full({2}, 1.0, DType::f64), Tensor::zeros({2}, DType::f64),
                                1e-5));
}

TEST_CASE("elementwise ops reject shape mismatches") {
  const auto a = Tensor::zeros({2, 3});
  const auto b = Tensor::zeros({3, 2});
  CHECK_THROWS_AS(add(a, b), ShapeError);
  CHECK_THROWS_AS(mul(a, b), ShapeError);
  CHECK_THROWS_AS(add(a, Tensor::zeros({2, 3}, DType::f64)), ShapeError);
  CHECK_THROWS_AS(reshape(a, {4}), ShapeError);
}

TEST_CASE("relu subgradient at zero is zero") {
  auto x = Tensor::from_values({3}, {-1, 0, 2}, DType::f64);
  x.set_requires_grad();
  backward(sum(relu(x)));
  CHECK(x.grad().to_vector() == oracle::Vec{0, 0, 1});
}

TEST_CASE("clamp passes gradient only inside the interval") {
  auto x = Tensor::from_values({3}, {-2, 0.5, 3}, DType::f64);
  x.set_requires_grad();
  const auto y = clamp(x, -1, 1);
  CHECK(y.to_vector() == oracle::Vec{-1, 0.5, 1});
  backward(sum(y));
  CHECK(x.grad().to_vector() == oracle::Vec{0, 1, 0});
}

TEST_CASE("index_rows gathers and scatters back") {
  auto x = Tensor::from_values({3, 2}, {1, 2, 3, 4, 5, 6}, DType::f64);
  x.set_requires_grad();
  const std::vector<std::int64_t> idx{2, 2, 0};
  const auto y = index_rows(x, idx);
  CHECK(y.to_vector() == oracle::Vec{5, 6, 5, 6, 1, 2});
  backward(sum(y));
  CHECK(x.grad().to_vector() == oracle::Vec{1, 1, 0, 0, 2, 2});
  const std::vector<std::int64_t> bad{3};
  CHECK_THROWS(index_rows(x, bad));
}

TEST_CASE("every op passes a central-difference check on ten seeds") {
  // A compact sweep here; the full suite with layers and the composed model
  // lives in the acceptance binary and the gradcheck subcommand.
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    std::mt19937_64 rng(seed);
    std::vector<Tensor> in{oracle::random_tensor({2, 2, 4, 4}, rng),
                           oracle::random_tensor({2, 2, 3, 3}, rng),
                           oracle::random_tensor({2, 2}, rng, DType::f64, 0.5, 1.5)};
    const auto fn = [&] {
      const auto c = conv2d(in[0], in[1], 1, 1);
      const auto att = sigmoid(global_avg_pool(c));
      const auto scaled = scale_channels(avg_pool2d(c, 2, 2), mul(att, in[2]));
      const auto logits = reshape(global_max_pool(scaled), {2, 2});
      const std::vector<std::int64_t> labels{1, 0};
      const std::vector<double> w{0.7, 1.9};
      return weighted_nll(log_softmax(logits), labels, w);
    };
    CHECK(gradient_check(fn, in).max_relative_error < 1e-5);
  }
}
