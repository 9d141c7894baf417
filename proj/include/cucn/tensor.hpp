// Copyright 2026 The CUCN Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

namespace cucn {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Shape or dtype disagreement between operands.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// NaN/Inf produced or consumed where finite values are required.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Malformed file or byte stream.
class FormatError : public Error {
 public:
  using Error::Error;
};

enum class DType : std::uint8_t { f32 = 0, f64 = 1 };

const char* dtype_name(DType dtype);

using Shape = std::vector<std::int64_t>;

std::int64_t numel(const Shape& shape);
std::string shape_str(const Shape& shape);

using Storage = std::variant<std::vector<float>, std::vector<double>>;

namespace detail {

struct TensorImpl;

struct Node {
  const char* name = "";
  std::vector<std::shared_ptr<TensorImpl>> inputs;
  // Reads out.grad and accumulates into the inputs that require grad.
  std::function<void(TensorImpl& out)> backward;
};

struct TensorImpl {
  Shape shape;
  DType dtype = DType::f32;
  Storage data;
  bool requires_grad = false;
  std::unique_ptr<Storage> grad;
  std::shared_ptr<Node> node;
};

}  // namespace detail

/// Reference-counted handle to a dense row-major array. Copies share storage;
/// use clone() for a deep copy.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, DType dtype = DType::f32);
  static Tensor full(Shape shape, double value, DType dtype = DType::f32);
  static Tensor from_values(Shape shape, const std::vector<double>& values,
                            DType dtype = DType::f32);
  static Tensor from_storage(Shape shape, Storage data);
  static Tensor scalar(double value, DType dtype = DType::f32);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const;
  std::int64_t dim(std::size_t axis) const;
  std::size_t ndim() const { return shape().size(); }
  std::int64_t numel() const;
  DType dtype() const;

  template <typename T>
  std::span<const T> data() const;
  template <typename T>
  std::span<T> mutable_data();

  double item() const;
  double at(std::int64_t flat_index) const;
  std::vector<double> to_vector() const;

  bool requires_grad() const;
  Tensor& set_requires_grad(bool on = true);
  bool is_leaf() const;
  bool has_grad() const;
  /// Gradient as a detached tensor sharing nothing with this one.
  Tensor grad() const;
  void zero_grad();

  Tensor detach() const;
  Tensor clone() const;
  Tensor to(DType dtype) const;

  /// Overwrites values in place; shape and dtype must agree.
  void copy_from(const Tensor& other);

  bool same_storage(const Tensor& other) const { return impl_ == other.impl_; }

  const std::shared_ptr<detail::TensorImpl>& impl() const { return impl_; }
  explicit Tensor(std::shared_ptr<detail::TensorImpl> impl) : impl_(std::move(impl)) {}

 private:
  std::shared_ptr<detail::TensorImpl> impl_;
};

/// Disables graph recording on the current thread while alive.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_enabled();

/// Topologically ordered record of the differentiable ops reachable from a
/// scalar loss. Replaying it in reverse visits every node exactly once.
class Tape {
 public:
  static Tape record(const Tensor& loss);

  void backward();
  std::size_t size() const { return order_.size(); }
  std::vector<std::string> op_names() const;

 private:
  std::shared_ptr<detail::TensorImpl> root_;
  std::vector<std::shared_ptr<detail::TensorImpl>> order_;
};

/// Seeds d(loss)/d(loss) = 1 and accumulates gradients into every leaf that
/// requires grad.
void backward(const Tensor& loss);

/// Calls fn with a value of the scalar type matching dtype.
template <typename F>
decltype(auto) dispatch(DType dtype, F&& fn) {
  if (dtype == DType::f64) return fn(double{});
  return fn(float{});
}

template <typename T>
constexpr DType dtype_of() {
  static_assert(std::is_same_v<T, float> || std::is_same_v<T, double>);
  return std::is_same_v<T, float> ? DType::f32 : DType::f64;
}

}  // namespace cucn
