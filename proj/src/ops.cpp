// Copyright 2026 The CUCN Authors
// SPDX-License-Identifier: Apache-2.0

#include "cucn/ops.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <initializer_list>
#include <limits>
#include <string>

#include "kernels.hpp"

namespace cucn {

namespace {

using detail::Node;
using detail::TensorImpl;
using BackwardFn = std::function<void(TensorImpl&)>;

template <typename T>
const std::vector<T>& values(const Tensor& t) {
  return std::get<std::vector<T>>(t.impl()->data);
}

template <typename T>
std::span<const T> out_grad(TensorImpl& out) {
  return std::get<std::vector<T>>(*out.grad);
}

// Lazily allocated, zero-initialized gradient buffer of an input.
template <typename T>
std::span<T> grad_buffer(const Tensor& t) {
  auto& impl = *t.impl();
  if (!impl.grad)
    impl.grad = std::make_unique<Storage>(
        std::vector<T>(static_cast<std::size_t>(numel(impl.shape)), T(0)));
  return std::get<std::vector<T>>(*impl.grad);
}

// Exponent-bit test; a branch-free OR over the whole buffer vectorizes.
template <typename T>
bool all_finite(const std::vector<T>& data) {
  using Bits = std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint64_t>;
  constexpr Bits exponent = static_cast<Bits>(sizeof(T) == 4 ? 0x7f800000ull : 0x7ff0000000000000ull);
  Bits bad = 0;
  for (const T v : data) bad |= static_cast<Bits>((std::bit_cast<Bits>(v) & exponent) == exponent);
  return bad == 0;
}

template <typename T>
Tensor finish(const char* name, Shape shape, std::vector<T> data,
              std::initializer_list<Tensor> inputs, BackwardFn backward) {
  if (!all_finite(data)) throw NumericError(std::string(name) + ": non-finite output");
  Tensor out = Tensor::from_storage(std::move(shape), std::move(data));
  bool needs_grad = false;
  if (grad_enabled())
    for (const auto& in : inputs) needs_grad = needs_grad || in.requires_grad();
  if (needs_grad) {
    auto node = std::make_shared<Node>();
    node->name = name;
    for (const auto& in : inputs) node->inputs.push_back(in.impl());
    node->backward = std::move(backward);
    out.impl()->requires_grad = true;
    out.impl()->node = std::move(node);
  }
  return out;
}

void require_defined(const Tensor& t, const char* op) {
  if (!t.defined()) throw Error(std::string(op) + ": undefined input");
}

void require_same(const Tensor& a, const Tensor& b, const char* op) {
  require_defined(a, op);
  require_defined(b, op);
  if (a.shape() != b.shape())
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  if (a.dtype() != b.dtype())
    throw ShapeError(std::string(op) + ": dtype mismatch " + dtype_name(a.dtype()) + " vs " +
                     dtype_name(b.dtype()));
}

void require_same_dtype(const Tensor& a, const Tensor& b, const char* op) {
  if (a.dtype() != b.dtype())
    throw ShapeError(std::string(op) + ": dtype mismatch " + dtype_name(a.dtype()) + " vs " +
                     dtype_name(b.dtype()));
}

void require_rank(const Tensor& t, std::size_t rank, const char* op) {
  require_defined(t, op);
  if (t.ndim() != rank)
    throw ShapeError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
                     shape_str(t.shape()));
}

enum class BinaryKind { add, sub, mul, div };

Tensor binary(const Tensor& a, const Tensor& b, BinaryKind kind, const char* name) {
  require_same(a, b, name);
  return dispatch(a.dtype(), [&]<typename T>(T) {
    const auto& av = values<T>(a);
    const auto& bv = values<T>(b);
    std::vector<T> out(av.size());
    for (std::size_t i = 0; i < av.size(); ++i) {
      switch (kind) {
        case BinaryKind::add: out[i] = av[i] + bv[i]; break;
        case BinaryKind::sub: out[i] = av[i] - bv[i]; break;
        case BinaryKind::mul: out[i] = av[i] * bv[i]; break;
        case BinaryKind::div: out[i] = av[i] / bv[i]; break;
      }
    }
    return finish<T>(name, a.shape(), std::move(out), {a, b}, [a, b, kind](TensorImpl& o) {
      auto g = out_grad<T>(o);
      const auto& av = values<T>(a);
      const auto& bv = values<T>(b);
      if (a.requires_grad()) {
        auto ga = grad_buffer<T>(a);
        for (std::size_t i = 0; i < g.size(); ++i) {
          switch (kind) {
            case BinaryKind::add:
            case BinaryKind::sub: ga[i] += g[i]; break;
            case BinaryKind::mul: ga[i] += g[i] * bv[i]; break;
            case BinaryKind::div: ga[i] += g[i] / bv[i]; break;
          }
        }
      }
      if (b.requires_grad()) {
        auto gb = grad_buffer<T>(b);
        for (std::size_t i = 0; i < g.size(); ++i) {
          switch (kind) {
            case BinaryKind::add: gb[i] += g[i]; break;
            case BinaryKind::sub: gb[i] -= g[i]; break;
            case BinaryKind::mul: gb[i] += g[i] * av[i]; break;
            case BinaryKind::div: gb[i] -= g[i] * av[i] / (bv[i] * bv[i]); break;
          }
        }
      }
    });
  });
}

// Elementwise unary op with derivative expressed through input x and output y.
template <typename Fwd, typename Deriv>
Tensor unary(const Tensor& x, const char* name, Fwd fwd, Deriv deriv) {
  require_defined(x, name);
  return dispatch(x.dtype(), [&]<typename T>(T) {
    const auto& xv = values<T>(x);
    auto out = std::make_shared<std::vector<T>>(xv.size());
    for (std::size_t i = 0; i < xv.size(); ++i) (*out)[i] = static_cast<T>(fwd(xv[i]));
    // The output values are needed by several derivatives; keep a copy.
    auto saved = out;
    return finish<T>(name, x.shape(), *out, {x}, [x, saved, deriv](TensorImpl& o) {
      if (!x.requires_grad()) return;
      auto g = out_grad<T>(o);
      auto gx = grad_buffer<T>(x);
      const auto& xv = values<T>(x);
      for (std::size_t i = 0; i < g.size(); ++i)
        gx[i] += g[i] * static_cast<T>(deriv(xv[i], (*saved)[i]));
    });
  });
}

}  // namespace

std::int64_t window_output_size(std::int64_t in, int kernel, int stride, int pad) {
  if (kernel < 1 || stride < 1 || pad < 0)
    throw ShapeError("window: kernel and stride must be >= 1 and pad >= 0");
  const std::int64_t span = in + 2 * static_cast<std::int64_t>(pad);
  if (kernel > span)
    throw ShapeError("window: kernel " + std::to_string(kernel) + " exceeds padded extent " +
                     std::to_string(span));
  if ((span - kernel) % stride != 0)
    throw ShapeError("window: extent " + std::to_string(in) + " with kernel " +
                     std::to_string(kernel) + ", stride " + std::to_string(stride) + ", pad " +
                     std::to_string(pad) + " does not tile exactly");
  return (span - kernel) / stride + 1;
}

Tensor add(const Tensor& a, const Tensor& b) { return binary(a, b, BinaryKind::add, "add"); }
Tensor sub(const Tensor& a, const Tensor& b) { return binary(a, b, BinaryKind::sub, "sub"); }
Tensor mul(const Tensor& a, const Tensor& b) { return binary(a, b, BinaryKind::mul, "mul"); }
Tensor div(const Tensor& a, const Tensor& b) { return binary(a, b, BinaryKind::div, "div"); }

Tensor scale(const Tensor& x, double factor) {
  return unary(
      x, "scale", [factor](auto v) { return v * factor; },
      [factor](auto, auto) { return factor; });
}

Tensor add_scalar(const Tensor& x, double value) {
  return unary(
      x, "add_scalar", [value](auto v) { return v + value; }, [](auto, auto) { return 1.0; });
}

Tensor relu(const Tensor& x) {
  // Subgradient at 0 is 0.
  return unary(
      x, "relu", [](auto v) { return v > 0 ? v : decltype(v)(0); },
      [](auto v, auto) { return v > 0 ? 1.0 : 0.0; });
}

Tensor sigmoid(const Tensor& x) {
  return unary(
      x, "sigmoid",
      [](auto v) {
        using T = decltype(v);
        // Saturated tails are pinned to the nearest representable interior
        // values so the result stays strictly inside (0, 1).
        constexpr T lo = std::numeric_limits<T>::min();
        constexpr T hi = T(1) - std::numeric_limits<T>::epsilon() / 2;
        if (v >= 0) return std::min(T(1) / (T(1) + std::exp(-v)), hi);
        const T e = std::exp(v);
        return std::max(e / (T(1) + e), lo);
      },
      [](auto, auto y) { return y * (1 - y); });
}

Tensor exp(const Tensor& x) {
  return unary(
      x, "exp", [](auto v) { return std::exp(v); }, [](auto, auto y) { return y; });
}

Tensor clamp(const Tensor& x, double lo, double hi) {
  if (!(lo <= hi)) throw Error("clamp: lo must not exceed hi");
  return unary(
      x, "clamp",
      [lo, hi](auto v) {
        using T = decltype(v);
        return std::min(std::max(v, static_cast<T>(lo)), static_cast<T>(hi));
      },
      [lo, hi](auto v, auto) { return (v >= lo && v <= hi) ? 1.0 : 0.0; });
}

Tensor sum(const Tensor& x) {
  require_defined(x, "sum");
  return dispatch(x.dtype(), [&]<typename T>(T) {
    T total = 0;
    for (const T v : values<T>(x)) total += v;
    return finish<T>("sum", {1}, {total}, {x}, [x](TensorImpl& o) {
      if (!x.requires_grad()) return;
      const T g = out_grad<T>(o)[0];
      for (auto& v : grad_buffer<T>(x)) v += g;
    });
  });
}

Tensor mean(const Tensor& x) {
  require_defined(x, "mean");
  return scale(sum(x), 1.0 / static_cast<double>(x.numel()));
}

Tensor reshape(const Tensor& x, Shape shape) {
  require_defined(x, "reshape");
  if (numel(shape) != x.numel())
    throw ShapeError("reshape: cannot view " + shape_str(x.shape()) + " as " + shape_str(shape));
  return dispatch(x.dtype(), [&]<typename T>(T) {
    return finish<T>("reshape", std::move(shape), values<T>(x), {x}, [x](TensorImpl& o) {
      if (!x.requires_grad()) return;
      auto g = out_grad<T>(o);
      auto gx = grad_buffer<T>(x);
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
    });
  });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank(a, 2, "matmul");
  require_rank(b, 2, "matmul");
  require_same_dtype(a, b, "matmul");
  const std::int64_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k)
    throw ShapeError("matmul: inner dimensions differ " + shape_str(a.shape()) + " . " +
                     shape_str(b.shape()));
  return dispatch(a.dtype(), [&]<typename T>(T) {
    std::vector<T> out(static_cast<std::size_t>(m * n), T(0));
    kernels::gemm_acc(m, n, k, values<T>(a).data(), values<T>(b).data(), out.data());
    return finish<T>("matmul", {m, n}, std::move(out), {a, b}, [a, b, m, n, k](TensorImpl& o) {
      auto g = out_grad<T>(o);
      if (a.requires_grad()) {
        // dA[m x k] = G[m x n] . B^T
        kernels::gemm_nt_acc(m, k, n, g.data(), values<T>(b).data(), grad_buffer<T>(a).data());
      }
      if (b.requires_grad()) {
        // dB[k x n] = A^T[k x m] . G
        const auto at = kernels::transpose(values<T>(a).data(), m, k);
        kernels::gemm_acc(k, n, m, at.data(), g.data(), grad_buffer<T>(b).data());
      }
    });
  });
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  require_rank(a, 2, "matmul_nt");
  require_rank(b, 2, "matmul_nt");
  require_same_dtype(a, b, "matmul_nt");
  const std::int64_t m = a.dim(0), k = a.dim(1), n = b.dim(0);
  if (b.dim(1) != k)
    throw ShapeError("matmul_nt: inner dimensions differ " + shape_str(a.shape()) + " . " +
                     shape_str(b.shape()) + "^T");
  return dispatch(a.dtype(), [&]<typename T>(T) {
    std::vector<T> out(static_cast<std::size_t>(m * n), T(0));
    kernels::gemm_nt_acc(m, n, k, values<T>(a).data(), values<T>(b).data(), out.data());
    return finish<T>("matmul_nt", {m, n}, std::move(out), {a, b},
                     [a, b, m, n, k](TensorImpl& o) {
                       auto g = out_grad<T>(o);
                       if (a.requires_grad()) {
                         // dA[m x k] = G[m x n] . B[n x k]
                         kernels::gemm_acc(m, k, n, g.data(), values<T>(b).data(),
                                           grad_buffer<T>(a).data());
                       }
                       if (b.requires_grad()) {
                         // dB[n x k] = G^T[n x m] . A[m x k]
                         const auto gt = kernels::transpose(g.data(), m, n);
                         kernels::gemm_acc(n, k, m, gt.data(), values<T>(a).data(),
                                           grad_buffer<T>(b).data());
                       }
                     });
  });
}

Tensor add_bias(const Tensor& x, const Tensor& bias) {
  require_defined(x, "add_bias");
  require_rank(bias, 1, "add_bias");
  require_same_dtype(x, bias, "add_bias");
  if (x.ndim() != 2 && x.ndim() != 4)
    throw ShapeError("add_bias: expected rank 2 or 4, got " + shape_str(x.shape()));
  const std::int64_t batch = x.dim(0), channels = x.dim(1);
  if (bias.dim(0) != channels)
    throw ShapeError("add_bias: bias " + shape_str(bias.shape()) + " vs input " +
                     shape_str(x.shape()));
  const std::int64_t inner = x.numel() / (batch * channels);
  return dispatch(x.dtype(), [&]<typename T>(T) {
    const auto& xv = values<T>(x);
    const auto& bv = values<T>(bias);
    std::vector<T> out(xv.size());
    for (std::int64_t n = 0; n < batch; ++n)
      for (std::int64_t c = 0; c < channels; ++c) {
        const std::int64_t base = (n * channels + c) * inner;
        for (std::int64_t s = 0; s < inner; ++s) out[base + s] = xv[base + s] + bv[c];
      }
    return finish<T>("add_bias", x.shape(), std::move(out), {x, bias},
                     [x, bias, batch, channels, inner](TensorImpl& o) {
                       auto g = out_grad<T>(o);
                       if (x.requires_grad()) {
                         auto gx = grad_buffer<T>(x);
                         for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
                       }
                       if (bias.requires_grad()) {
                         auto gb = grad_buffer<T>(bias);
                         for (std::int64_t n = 0; n < batch; ++n)
                           for (std::int64_t c = 0; c < channels; ++c) {
                             const std::int64_t base = (n * channels + c) * inner;
                             for (std::int64_t s = 0; s < inner; ++s) gb[c] += g[base + s];
                           }
                       }
                     });
  });
}

Tensor conv2d(const Tensor& input, const Tensor& kernel, int stride, int pad) {
  require_rank(input, 4, "conv2d");
  require_rank(kernel, 4, "conv2d");
  require_same_dtype(input, kernel, "conv2d");
  if (kernel.dim(2) != kernel.dim(3)) throw ShapeError("conv2d: kernel must be square");
  if (kernel.dim(1) != input.dim(1))
    throw ShapeError("conv2d: input has " + std::to_string(input.dim(1)) +
                     " channels, kernel expects " + std::to_string(kernel.dim(1)));
  kernels::ConvGeometry g{};
  g.batch = input.dim(0);
  g.channels = input.dim(1);
  g.height = input.dim(2);
  g.width = input.dim(3);
  g.kernel = kernel.dim(2);
  g.stride = stride;
  g.pad = pad;
  g.out_h = window_output_size(g.height, static_cast<int>(g.kernel), stride, pad);
  g.out_w = window_output_size(g.width, static_cast<int>(g.kernel), stride, pad);
  const std::int64_t filters = kernel.dim(0);

  return dispatch(input.dtype(), [&]<typename T>(T) {
    const std::int64_t patch = g.patch(), positions = g.positions();
    const std::int64_t plane = g.out_h * g.out_w;
    auto col = std::make_shared<std::vector<T>>(static_cast<std::size_t>(patch * positions));
    kernels::im2col(g, values<T>(input).data(), col->data());
    std::vector<T> mat(static_cast<std::size_t>(filters * positions), T(0));
    kernels::gemm_acc(filters, positions, patch, values<T>(kernel).data(), col->data(),
                      mat.data());
    std::vector<T> out(mat.size());
    for (std::int64_t f = 0; f < filters; ++f)
      for (std::int64_t n = 0; n < g.batch; ++n)
        std::copy_n(mat.begin() + f * positions + n * plane, plane,
                    out.begin() + (n * filters + f) * plane);

    return finish<T>(
        "conv2d", {g.batch, filters, g.out_h, g.out_w}, std::move(out), {input, kernel},
        [input, kernel, g, filters, col](TensorImpl& o) {
          const std::int64_t patch = g.patch(), positions = g.positions();
          const std::int64_t plane = g.out_h * g.out_w;
          auto go = out_grad<T>(o);
          std::vector<T> gmat(static_cast<std::size_t>(filters * positions));
          for (std::int64_t f = 0; f < filters; ++f)
            for (std::int64_t n = 0; n < g.batch; ++n)
              std::copy_n(go.begin() + (n * filters + f) * plane, plane,
                          gmat.begin() + f * positions + n * plane);
          if (kernel.requires_grad()) {
            kernels::gemm_nt_acc(filters, patch, positions, gmat.data(), col->data(),
                                 grad_buffer<T>(kernel).data());
          }
          if (input.requires_grad()) {
            const auto w_t = kernels::transpose(values<T>(kernel).data(), filters, patch);
            std::vector<T> gcol(static_cast<std::size_t>(patch * positions), T(0));
            kernels::gemm_acc(patch, positions, filters, w_t.data(), gmat.data(), gcol.data());
            kernels::col2im_acc(g, gcol.data(), grad_buffer<T>(input).data());
          }
        });
  });
}

namespace {

Tensor pool2d(const Tensor& input, int kernel, int stride, bool use_max) {
  const char* name = use_max ? "max_pool2d" : "avg_pool2d";
  require_rank(input, 4, name);
  const std::int64_t batch = input.dim(0), channels = input.dim(1);
  const std::int64_t h = input.dim(2), w = input.dim(3);
  const std::int64_t oh = window_output_size(h, kernel, stride, 0);
  const std::int64_t ow = window_output_size(w, kernel, stride, 0);
  const std::int64_t planes = batch * channels;
  return dispatch(input.dtype(), [&]<typename T>(T) {
    const auto& xv = values<T>(input);
    std::vector<T> out(static_cast<std::size_t>(planes * oh * ow));
    auto argmax = std::make_shared<std::vector<std::int64_t>>(use_max ? out.size() : 0);
    const T inv_area = T(1) / static_cast<T>(kernel * kernel);
    for (std::int64_t p = 0; p < planes; ++p)
      for (std::int64_t i = 0; i < oh; ++i)
        for (std::int64_t j = 0; j < ow; ++j) {
          const std::int64_t o = (p * oh + i) * ow + j;
          T acc = use_max ? -std::numeric_limits<T>::infinity() : T(0);
          std::int64_t best = -1;
          for (std::int64_t a = 0; a < kernel; ++a)
            for (std::int64_t b = 0; b < kernel; ++b) {
              const std::int64_t idx = (p * h + i * stride + a) * w + j * stride + b;
              if (use_max) {
                if (xv[idx] > acc || best < 0) {
                  acc = xv[idx];
                  best = idx;
                }
              } else {
                acc += xv[idx];
              }
            }
          if (use_max) {
            out[o] = acc;
            (*argmax)[o] = best;
          } else {
            out[o] = acc * inv_area;
          }
        }
    return finish<T>(name, {batch, channels, oh, ow}, std::move(out), {input},
                     [=](TensorImpl& o) {
                       if (!input.requires_grad()) return;
                       auto g = out_grad<T>(o);
                       auto gx = grad_buffer<T>(input);
                       if (use_max) {
                         for (std::size_t k = 0; k < g.size(); ++k) gx[(*argmax)[k]] += g[k];
                         return;
                       }
                       for (std::int64_t p = 0; p < planes; ++p)
                         for (std::int64_t i = 0; i < oh; ++i)
                           for (std::int64_t j = 0; j < ow; ++j) {
                             const T gv = g[(p * oh + i) * ow + j] * inv_area;
                             for (std::int64_t a = 0; a < kernel; ++a)
                               for (std::int64_t b = 0; b < kernel; ++b)
                                 gx[(p * h + i * stride + a) * w + j * stride + b] += gv;
                           }
                     });
  });
}

Tensor global_pool(const Tensor& x, bool use_max) {
  const char* name = use_max ? "global_max_pool" : "global_avg_pool";
  require_rank(x, 4, name);
  const std::int64_t batch = x.dim(0), channels = x.dim(1);
  const std::int64_t area = x.dim(2) * x.dim(3);
  const std::int64_t planes = batch * channels;
  return dispatch(x.dtype(), [&]<typename T>(T) {
    const auto& xv = values<T>(x);
    std::vector<T> out(static_cast<std::size_t>(planes));
    auto argmax = std::make_shared<std::vector<std::int64_t>>(use_max ? planes : 0);
    for (std::int64_t p = 0; p < planes; ++p) {
      const T* src = xv.data() + p * area;
      if (use_max) {
        std::int64_t best = 0;
        for (std::int64_t s = 1; s < area; ++s)
          if (src[s] > src[best]) best = s;
        out[p] = src[best];
        (*argmax)[p] = p * area + best;
      } else {
        T acc = 0;
        for (std::int64_t s = 0; s < area; ++s) acc += src[s];
        out[p] = acc / static_cast<T>(area);
      }
    }
    return finish<T>(name, {batch, channels}, std::move(out), {x}, [=](TensorImpl& o) {
      if (!x.requires_grad()) return;
      auto g = out_grad<T>(o);
      auto gx = grad_buffer<T>(x);
      for (std::int64_t p = 0; p < planes; ++p) {
        if (use_max) {
          gx[(*argmax)[p]] += g[p];
        } else {
          const T gv = g[p] / static_cast<T>(area);
          for (std::int64_t s = 0; s < area; ++s) gx[p * area + s] += gv;
        }
      }
    });
  });
}

Tensor channel_reduce(const Tensor& x, bool use_max) {
  const char* name = use_max ? "channel_max" : "channel_mean";
  require_rank(x, 4, name);
  const std::int64_t batch = x.dim(0), channels = x.dim(1);
  const std::int64_t area = x.dim(2) * x.dim(3);
  return dispatch(x.dtype(), [&]<typename T>(T) {
    const auto& xv = values<T>(x);
    std::vector<T> out(static_cast<std::size_t>(batch * area));
    auto argmax = std::make_shared<std::vector<std::int64_t>>(use_max ? out.size() : 0);
    for (std::int64_t n = 0; n < batch; ++n)
      for (std::int64_t s = 0; s < area; ++s) {
        const std::int64_t first = n * channels * area + s;
        T acc = xv[first];
        std::int64_t best = first;
        for (std::int64_t c = 1; c < channels; ++c) {
          const std::int64_t idx = first + c * area;
          if (use_max) {
            if (xv[idx] > acc) {
              acc = xv[idx];
              best = idx;
            }
          } else {
            acc += xv[idx];
          }
        }
        out[n * area + s] = use_max ? acc : acc / static_cast<T>(channels);
        if (use_max) (*argmax)[n * area + s] = best;
      }
    return finish<T>(name, {batch, 1, x.dim(2), x.dim(3)}, std::move(out), {x},
                     [=](TensorImpl& o) {
                       if (!x.requires_grad()) return;
                       auto g = out_grad<T>(o);
                       auto gx = grad_buffer<T>(x);
                       for (std::int64_t n = 0; n < batch; ++n)
                         for (std::int64_t s = 0; s < area; ++s) {
                           const T gv = g[n * area + s];
                           if (use_max) {
                             gx[(*argmax)[n * area + s]] += gv;
                             continue;
                           }
                           const T share = gv / static_cast<T>(channels);
                           for (std::int64_t c = 0; c < channels; ++c)
                             gx[(n * channels + c) * area + s] += share;
                         }
                     });
  });
}

}  // namespace

Tensor max_pool2d(const Tensor& input, int kernel, int stride) {
  return pool2d(input, kernel, stride, true);
}
Tensor avg_pool2d(const Tensor& input, int kernel, int stride) {
  return pool2d(input, kernel, stride, false);
}
Tensor global_avg_pool(const Tensor& x) { return global_pool(x, false); }
Tensor global_max_pool(const Tensor& x) { return global_pool(x, true); }
Tensor channel_mean(const Tensor& x) { return channel_reduce(x, false); }
Tensor channel_max(const Tensor& x) { return channel_reduce(x, true); }

Tensor concat_channels(const Tensor& a, const Tensor& b) {
  require_rank(a, 4, "concat_channels");
  require_rank(b, 4, "concat_channels");
  require_same_dtype(a, b, "concat_channels");
  if (a.dim(0) != b.dim(0) || a.dim(2) != b.dim(2) || a.dim(3) != b.dim(3))
    throw ShapeError("concat_channels: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  const std::int64_t batch = a.dim(0), ca = a.dim(1), cb = b.dim(1);
  const std::int64_t area = a.dim(2) * a.dim(3);
  return dispatch(a.dtype(), [&]<typename T>(T) {
    const auto& av = values<T>(a);
    const auto& bv = values<T>(b);
    std::vector<T> out(static_cast<std::size_t>(batch * (ca + cb) * area));
    for (std::int64_t n = 0; n < batch; ++n) {
      std::copy_n(av.begin() + n * ca * area, ca * area, out.begin() + n * (ca + cb) * area);
      std::copy_n(bv.begin() + n * cb * area, cb * area,
                  out.begin() + (n * (ca + cb) + ca) * area);
    }
    return finish<T>("concat_channels", {batch, ca + cb, a.dim(2), a.dim(3)}, std::move(out),
                     {a, b}, [=](TensorImpl& o) {
                       auto g = out_grad<T>(o);
                       for (std::int64_t n = 0; n < batch; ++n) {
                         const T* src = g.data() + n * (ca + cb) * area;
                         if (a.requires_grad()) {
                           T* dst = grad_buffer<T>(a).data() + n * ca * area;
                           for (std::int64_t i = 0; i < ca * area; ++i) dst[i] += src[i];
                         }
                         if (b.requires_grad()) {
                           T* dst = grad_buffer<T>(b).data() + n * cb * area;
                           for (std::int64_t i = 0; i < cb * area; ++i)
                             dst[i] += src[ca * area + i];
                         }
                       }
                     });
  });
}

Tensor scale_channels(const Tensor& x, const Tensor& m) {
  require_rank(x, 4, "scale_channels");
  require_rank(m, 2, "scale_channels");
  require_same_dtype(x, m, "scale_channels");
  if (m.dim(0) != x.dim(0) || m.dim(1) != x.dim(1))
    throw ShapeError("scale_channels: map " + shape_str(m.shape()) + " vs input " +
                     shape_str(x.shape()));
  const std::int64_t planes = x.dim(0) * x.dim(1);
  const std::int64_t area = x.dim(2) * x.dim(3);
  return dispatch(x.dtype(), [&]<typename T>(T) {
    const auto& xv = values<T>(x);
    const auto& mv = values<T>(m);
    std::vector<T> out(xv.size());
    for (std::int64_t p = 0; p < planes; ++p)
      for (std::int64_t s = 0; s < area; ++s) out[p * area + s] = xv[p * area + s] * mv[p];
    return finish<T>("scale_channels", x.shape(), std::move(out), {x, m}, [=](TensorImpl& o) {
      auto g = out_grad<T>(o);
      const auto& xv = values<T>(x);
      const auto& mv = values<T>(m);
      if (x.requires_grad()) {
        auto gx = grad_buffer<T>(x);
        for (std::int64_t p = 0; p < planes; ++p)
          for (std::int64_t s = 0; s < area; ++s) gx[p * area + s] += g[p * area + s] * mv[p];
      }
      if (m.requires_grad()) {
        auto gm = grad_buffer<T>(m);
        for (std::int64_t p = 0; p < planes; ++p) {
          T acc = 0;
          for (std::int64_t s = 0; s < area; ++s) acc += g[p * area + s] * xv[p * area + s];
          gm[p] += acc;
        }
      }
    });
  });
}

Tensor scale_spatial(const Tensor& x, const Tensor& m) {
  require_rank(x, 4, "scale_spatial");
  require_rank(m, 4, "scale_spatial");
  require_same_dtype(x, m, "scale_spatial");
  if (m.dim(0) != x.dim(0) || m.dim(1) != 1 || m.dim(2) != x.dim(2) || m.dim(3) != x.dim(3))
    throw ShapeError("scale_spatial: map " + shape_str(m.shape()) + " vs input " +
                     shape_str(x.shape()));
  const std::int64_t batch = x.dim(0), channels = x.dim(1);
  const std::int64_t area = x.dim(2) * x.dim(3);
  return dispatch(x.dtype(), [&]<typename T>(T) {
    const auto& xv = values<T>(x);
    const auto& mv = values<T>(m);
    std::vector<T> out(xv.size());
    for (std::int64_t n = 0; n < batch; ++n)
      for (std::int64_t c = 0; c < channels; ++c)
        for (std::int64_t s = 0; s < area; ++s) {
          const std::int64_t idx = (n * channels + c) * area + s;
          out[idx] = xv[idx] * mv[n * area + s];
        }
    return finish<T>("scale_spatial", x.shape(), std::move(out), {x, m}, [=](TensorImpl& o) {
      auto g = out_grad<T>(o);
      const auto& xv = values<T>(x);
      const auto& mv = values<T>(m);
      if (x.requires_grad()) {
        auto gx = grad_buffer<T>(x);
        for (std::int64_t n = 0; n < batch; ++n)
          for (std::int64_t c = 0; c < channels; ++c)
            for (std::int64_t s = 0; s < area; ++s) {
              const std::int64_t idx = (n * channels + c) * area + s;
              gx[idx] += g[idx] * mv[n * area + s];
            }
      }
      if (m.requires_grad()) {
        auto gm = grad_buffer<T>(m);
        for (std::int64_t n = 0; n < batch; ++n)
          for (std::int64_t c = 0; c < channels; ++c)
            for (std::int64_t s = 0; s < area; ++s) {
              const std::int64_t idx = (n * channels + c) * area + s;
              gm[n * area + s] += g[idx] * xv[idx];
            }
      }
    });
  });
}

Tensor index_rows(const Tensor& x, std::span<const std::int64_t> index) {
  require_defined(x, "index_rows");
  if (x.ndim() < 1 || index.empty()) throw ShapeError("index_rows: empty selection");
  const std::int64_t rows = x.dim(0);
  const std::int64_t width = x.numel() / rows;
  for (const auto i : index)
    if (i < 0 || i >= rows)
      throw ShapeError("index_rows: row " + std::to_string(i) + " out of range");
  Shape shape = x.shape();
  shape[0] = static_cast<std::int64_t>(index.size());
  std::vector<std::int64_t> idx(index.begin(), index.end());
  return dispatch(x.dtype(), [&]<typename T>(T) {
    const auto& xv = values<T>(x);
    std::vector<T> out(static_cast<std::size_t>(numel(shape)));
    for (std::size_t r = 0; r < idx.size(); ++r)
      std::copy_n(xv.begin() + idx[r] * width, width, out.begin() + r * width);
    return finish<T>("index_rows", std::move(shape), std::move(out), {x},
                     [x, idx, width](TensorImpl& o) {
                       if (!x.requires_grad()) return;
                       auto g = out_grad<T>(o);
                       auto gx = grad_buffer<T>(x);
                       for (std::size_t r = 0; r < idx.size(); ++r)
                         for (std::int64_t k = 0; k < width; ++k)
                           gx[idx[r] * width + k] += g[r * width + k];
                     });
  });
}

Tensor log_softmax(const Tensor& logits) {
  require_rank(logits, 2, "log_softmax");
  const std::int64_t rows = logits.dim(0), classes = logits.dim(1);
  if (classes < 2) throw ShapeError("log_softmax: need at least 2 classes");
  return dispatch(logits.dtype(), [&]<typename T>(T) {
    const auto& xv = values<T>(logits);
    for (const T v : xv)
      if (!std::isfinite(v)) throw NumericError("log_softmax: non-finite logits");
    std::vector<T> out(xv.size());
    for (std::int64_t r = 0; r < rows; ++r) {
      const T* row = xv.data() + r * classes;
      const T peak = *std::max_element(row, row + classes);
      T total = 0;
      for (std::int64_t c = 0; c < classes; ++c) total += std::exp(row[c] - peak);
      const T lse = peak + std::log(total);
      for (std::int64_t c = 0; c < classes; ++c) out[r * classes + c] = row[c] - lse;
    }
    auto saved = std::make_shared<std::vector<T>>(out);
    return finish<T>("log_softmax", logits.shape(), std::move(out), {logits},
                     [logits, saved, rows, classes](TensorImpl& o) {
                       if (!logits.requires_grad()) return;
                       auto g = out_grad<T>(o);
                       auto gx = grad_buffer<T>(logits);
                       for (std::int64_t r = 0; r < rows; ++r) {
                         T total = 0;
                         for (std::int64_t c = 0; c < classes; ++c) total += g[r * classes + c];
                         for (std::int64_t c = 0; c < classes; ++c) {
                           const std::int64_t i = r * classes + c;
                           gx[i] += g[i] - std::exp((*saved)[i]) * total;
                         }
                       }
                     });
  });
}

Tensor weighted_nll(const Tensor& log_probs, std::span<const std::int64_t> labels,
                    std::span<const double> weights) {
  require_rank(log_probs, 2, "weighted_nll");
  const std::int64_t rows = log_probs.dim(0), classes = log_probs.dim(1);
  if (static_cast<std::int64_t>(labels.size()) != rows)
    throw ShapeError("weighted_nll: " + std::to_string(labels.size()) + " labels for " +
                     std::to_string(rows) + " rows");
  if (static_cast<std::int64_t>(weights.size()) != classes)
    throw ShapeError("weighted_nll: " + std::to_string(weights.size()) + " weights for " +
                     std::to_string(classes) + " classes");
  for (const auto y : labels)
    if (y < 0 || y >= classes)
      throw Error("weighted_nll: label " + std::to_string(y) + " out of range [0, " +
                  std::to_string(classes) + ")");
  std::vector<std::int64_t> ys(labels.begin(), labels.end());
  std::vector<double> ws(weights.begin(), weights.end());
  return dispatch(log_probs.dtype(), [&]<typename T>(T) {
    const auto& lp = values<T>(log_probs);
    T total = 0;
    for (std::int64_t n = 0; n < rows; ++n)
      total += static_cast<T>(ws[ys[n]]) * lp[n * classes + ys[n]];
    const T loss = -total / static_cast<T>(rows);
    return finish<T>("weighted_nll", {1}, {loss}, {log_probs},
                     [log_probs, ys, ws, rows, classes](TensorImpl& o) {
                       if (!log_probs.requires_grad()) return;
                       const T g = out_grad<T>(o)[0];
                       auto gx = grad_buffer<T>(log_probs);
                       for (std::int64_t n = 0; n < rows; ++n)
                         gx[n * classes + ys[n]] -= g * static_cast<T>(ws[ys[n]]) /
                                                    static_cast<T>(rows);
                     });
  });
}

namespace {

struct BnLayout {
  std::int64_t batch, channels, area;
  std::int64_t count() const { return batch * area; }
  std::int64_t index(std::int64_t n, std::int64_t c, std::int64_t s) const {
    return (n * channels + c) * area + s;
  }
};

BnLayout bn_layout(const Tensor& x, const Tensor& gamma, const Tensor& beta, const char* name) {
  require_rank(x, 4, name);
  require_rank(gamma, 1, name);
  require_rank(beta, 1, name);
  require_same_dtype(x, gamma, name);
  require_same_dtype(x, beta, name);
  if (gamma.dim(0) != x.dim(1) || beta.dim(0) != x.dim(1))
    throw ShapeError(std::string(name) + ": affine params do not match channels of " +
                     shape_str(x.shape()));
  return {x.dim(0), x.dim(1), x.dim(2) * x.dim(3)};
}

}  // namespace

Tensor batch_norm_train(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps,
                        std::vector<double>* batch_mean, std::vector<double>* batch_var) {
  const BnLayout l = bn_layout(x, gamma, beta, "batch_norm_train");
  if (l.count() < 2) throw ShapeError("batch_norm_train: needs at least 2 values per channel");
  return dispatch(x.dtype(), [&]<typename T>(T) {
    const auto& xv = values<T>(x);
    const auto& gv = values<T>(gamma);
    const auto& bv = values<T>(beta);
    auto xhat = std::make_shared<std::vector<T>>(xv.size());
    auto inv_std = std::make_shared<std::vector<T>>(l.channels);
    std::vector<T> out(xv.size());
    if (batch_mean) batch_mean->assign(l.channels, 0.0);
    if (batch_var) batch_var->assign(l.channels, 0.0);
    const double count = static_cast<double>(l.count());
    for (std::int64_t c = 0; c < l.channels; ++c) {
      double acc = 0;
      for (std::int64_t n = 0; n < l.batch; ++n)
        for (std::int64_t s = 0; s < l.area; ++s) acc += xv[l.index(n, c, s)];
      const double mu = acc / count;
      double sq = 0;
      for (std::int64_t n = 0; n < l.batch; ++n)
        for (std::int64_t s = 0; s < l.area; ++s) {
          const double d = xv[l.index(n, c, s)] - mu;
          sq += d * d;
        }
      const double var = sq / count;
      const double istd = 1.0 / std::sqrt(var + eps);
      (*inv_std)[c] = static_cast<T>(istd);
      for (std::int64_t n = 0; n < l.batch; ++n)
        for (std::int64_t s = 0; s < l.area; ++s) {
          const auto i = l.index(n, c, s);
          (*xhat)[i] = static_cast<T>((xv[i] - mu) * istd);
          out[i] = gv[c] * (*xhat)[i] + bv[c];
        }
      if (batch_mean) (*batch_mean)[c] = mu;
      if (batch_var) (*batch_var)[c] = var;
    }
    return finish<T>("batch_norm_train", x.shape(), std::move(out), {x, gamma, beta},
                     [x, gamma, beta, xhat, inv_std, l](TensorImpl& o) {
                       auto g = out_grad<T>(o);
                       const auto& gv = values<T>(gamma);
                       const T count = static_cast<T>(l.count());
                       for (std::int64_t c = 0; c < l.channels; ++c) {
                         T dbeta = 0, dgamma = 0;
                         for (std::int64_t n = 0; n < l.batch; ++n)
                           for (std::int64_t s = 0; s < l.area; ++s) {
                             const auto i = l.index(n, c, s);
                             dbeta += g[i];
                             dgamma += g[i] * (*xhat)[i];
                           }
                         if (gamma.requires_grad()) grad_buffer<T>(gamma)[c] += dgamma;
                         if (beta.requires_grad()) grad_buffer<T>(beta)[c] += dbeta;
                         if (!x.requires_grad()) continue;
                         auto gx = grad_buffer<T>(x);
                         const T k = gv[c] * (*inv_std)[c] / count;
                         for (std::int64_t n = 0; n < l.batch; ++n)
                           for (std::int64_t s = 0; s < l.area; ++s) {
                             const auto i = l.index(n, c, s);
                             gx[i] += k * (count * g[i] - dbeta - (*xhat)[i] * dgamma);
                           }
                       }
                     });
  });
}

Tensor batch_norm_eval(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                       const Tensor& running_mean, const Tensor& running_var, double eps) {
  const BnLayout l = bn_layout(x, gamma, beta, "batch_norm_eval");
  require_same(running_mean, gamma, "batch_norm_eval");
  require_same(running_var, gamma, "batch_norm_eval");
  return dispatch(x.dtype(), [&]<typename T>(T) {
    const auto& xv = values<T>(x);
    const auto& gv = values<T>(gamma);
    const auto& bv = values<T>(beta);
    const auto& rm = values<T>(running_mean);
    const auto& rv = values<T>(running_var);
    auto inv_std = std::make_shared<std::vector<T>>(l.channels);
    std::vector<T> out(xv.size());
    for (std::int64_t c = 0; c < l.channels; ++c) {
      if (!(rv[c] > 0)) throw NumericError("batch_norm_eval: running variance must be positive");
      (*inv_std)[c] = static_cast<T>(1.0 / std::sqrt(static_cast<double>(rv[c]) + eps));
      for (std::int64_t n = 0; n < l.batch; ++n)
        for (std::int64_t s = 0; s < l.area; ++s) {
          const auto i = l.index(n, c, s);
          out[i] = gv[c] * ((xv[i] - rm[c]) * (*inv_std)[c]) + bv[c];
        }
    }
    return finish<T>("batch_norm_eval", x.shape(), std::move(out), {x, gamma, beta},
                     [x, gamma, beta, running_mean, inv_std, l](TensorImpl& o) {
                       auto g = out_grad<T>(o);
                       const auto& xv = values<T>(x);
                       const auto& gv = values<T>(gamma);
                       const auto& rm = values<T>(running_mean);
                       for (std::int64_t c = 0; c < l.channels; ++c) {
                         T dbeta = 0, dgamma = 0;
                         for (std::int64_t n = 0; n < l.batch; ++n)
                           for (std::int64_t s = 0; s < l.area; ++s) {
                             const auto i = l.index(n, c, s);
                             dbeta += g[i];
                             dgamma += g[i] * (xv[i] - rm[c]) * (*inv_std)[c];
                           }
                         if (gamma.requires_grad()) grad_buffer<T>(gamma)[c] += dgamma;
                         if (beta.requires_grad()) grad_buffer<T>(beta)[c] += dbeta;
                         if (!x.requires_grad()) continue;
                         auto gx = grad_buffer<T>(x);
                         for (std::int64_t n = 0; n < l.batch; ++n)
                           for (std::int64_t s = 0; s < l.area; ++s) {
                             const auto i = l.index(n, c, s);
                             gx[i] += g[i] * gv[c] * (*inv_std)[c];
                           }
                       }
                     });
  });
}

}  // namespace cucn
