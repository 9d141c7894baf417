// Copyright 2026 The CUCN Authors
// SPDX-License-Identifier: Apache-2.0

#include "cucn/tensor.hpp"

#include <algorithm>
#include <unordered_set>

namespace cucn {

namespace {

thread_local bool t_grad_enabled = true;

Storage make_storage(DType dtype, std::size_t n) {
  if (dtype == DType::f64) return std::vector<double>(n, 0.0);
  return std::vector<float>(n, 0.0f);
}

}  // namespace

const char* dtype_name(DType dtype) { return dtype == DType::f64 ? "f64" : "f32"; }

std::int64_t numel(const Shape& shape) {
  std::int64_t n = 1;
  for (auto e : shape) n *= e;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += "x";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

Tensor Tensor::zeros(Shape shape, DType dtype) {
  for (auto e : shape)
    if (e <= 0) throw ShapeError("tensor extents must be positive, got " + shape_str(shape));
  auto impl = std::make_shared<detail::TensorImpl>();
  impl->data = make_storage(dtype, static_cast<std::size_t>(cucn::numel(shape)));
  impl->shape = std::move(shape);
  impl->dtype = dtype;
  return Tensor(std::move(impl));
}

Tensor Tensor::full(Shape shape, double value, DType dtype) {
  Tensor t = zeros(std::move(shape), dtype);
  std::visit([&](auto& v) { std::fill(v.begin(), v.end(), value); }, t.impl_->data);
  return t;
}

Tensor Tensor::from_values(Shape shape, const std::vector<double>& values, DType dtype) {
  Tensor t = zeros(std::move(shape), dtype);
  if (static_cast<std::int64_t>(values.size()) != t.numel())
    throw ShapeError("value count " + std::to_string(values.size()) + " does not match shape " +
                     shape_str(t.shape()));
  std::visit(
      [&](auto& v) {
        using T = typename std::decay_t<decltype(v)>::value_type;
        for (std::size_t i = 0; i < values.size(); ++i) v[i] = static_cast<T>(values[i]);
      },
      t.impl_->data);
  return t;
}

Tensor Tensor::from_storage(Shape shape, Storage data) {
  for (auto e : shape)
    if (e <= 0) throw ShapeError("tensor extents must be positive, got " + shape_str(shape));
  const auto n = std::visit([](const auto& v) { return v.size(); }, data);
  if (static_cast<std::int64_t>(n) != cucn::numel(shape))
    throw ShapeError("storage size " + std::to_string(n) + " does not match shape " +
                     shape_str(shape));
  auto impl = std::make_shared<detail::TensorImpl>();
  impl->dtype = std::holds_alternative<std::vector<double>>(data) ? DType::f64 : DType::f32;
  impl->shape = std::move(shape);
  impl->data = std::move(data);
  return Tensor(std::move(impl));
}

Tensor Tensor::scalar(double value, DType dtype) { return full({1}, value, dtype); }

const Shape& Tensor::shape() const {
  if (!impl_) throw Error("use of undefined tensor");
  return impl_->shape;
}

std::int64_t Tensor::dim(std::size_t axis) const {
  const auto& s = shape();
  if (axis >= s.size())
    throw ShapeError("axis " + std::to_string(axis) + " out of range for " + shape_str(s));
  return s[axis];
}

std::int64_t Tensor::numel() const { return cucn::numel(shape()); }

DType Tensor::dtype() const {
  if (!impl_) throw Error("use of undefined tensor");
  return impl_->dtype;
}

template <typename T>
std::span<const T> Tensor::data() const {
  if (dtype() != dtype_of<T>())
    throw ShapeError(std::string("tensor holds ") + dtype_name(dtype()) + ", requested " +
                     dtype_name(dtype_of<T>()));
  return std::get<std::vector<T>>(impl_->data);
}

template <typename T>
std::span<T> Tensor::mutable_data() {
  if (dtype() != dtype_of<T>())
    throw ShapeError(std::string("tensor holds ") + dtype_name(dtype()) + ", requested " +
                     dtype_name(dtype_of<T>()));
  return std::get<std::vector<T>>(impl_->data);
}

template std::span<const float> Tensor::data<float>() const;
template std::span<const double> Tensor::data<double>() const;
template std::span<float> Tensor::mutable_data<float>();
template std::span<double> Tensor::mutable_data<double>();

double Tensor::item() const {
  if (numel() != 1) throw ShapeError("item() on tensor of shape " + shape_str(shape()));
  return at(0);
}

double Tensor::at(std::int64_t flat_index) const {
  if (flat_index < 0 || flat_index >= numel()) throw ShapeError("flat index out of range");
  return std::visit([&](const auto& v) { return static_cast<double>(v[flat_index]); },
                    impl_->data);
}

std::vector<double> Tensor::to_vector() const {
  return std::visit([](const auto& v) { return std::vector<double>(v.begin(), v.end()); },
                    impl_->data);
}

bool Tensor::requires_grad() const { return impl_ && impl_->requires_grad; }

Tensor& Tensor::set_requires_grad(bool on) {
  if (!impl_) throw Error("use of undefined tensor");
  if (!is_leaf()) throw Error("requires_grad can only be set on leaf tensors");
  impl_->requires_grad = on;
  return *this;
}

bool Tensor::is_leaf() const { return impl_ && !impl_->node; }

bool Tensor::has_grad() const { return impl_ && impl_->grad != nullptr; }

Tensor Tensor::grad() const {
  if (!has_grad()) throw Error("tensor has no gradient");
  return from_storage(impl_->shape, *impl_->grad);
}

void Tensor::zero_grad() {
  if (impl_) impl_->grad.reset();
}

Tensor Tensor::detach() const { return from_storage(shape(), impl_->data); }

Tensor Tensor::clone() const {
  Tensor t = detach();
  t.impl_->requires_grad = impl_->requires_grad && is_leaf();
  return t;
}

Tensor Tensor::to(DType target) const {
  if (target == dtype()) return detach();
  Tensor t = zeros(shape(), target);
  std::visit(
      [&](auto& dst) {
        using T = typename std::decay_t<decltype(dst)>::value_type;
        std::visit(
            [&](const auto& src) {
              for (std::size_t i = 0; i < src.size(); ++i) dst[i] = static_cast<T>(src[i]);
            },
            impl_->data);
      },
      t.impl_->data);
  return t;
}

void Tensor::copy_from(const Tensor& other) {
  if (shape() != other.shape() || dtype() != other.dtype())
    throw ShapeError("copy_from: " + shape_str(other.shape()) + " " + dtype_name(other.dtype()) +
                     " into " + shape_str(shape()) + " " + dtype_name(dtype()));
  impl_->data = other.impl_->data;
}

NoGradGuard::NoGradGuard() : previous_(t_grad_enabled) { t_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { t_grad_enabled = previous_; }

bool grad_enabled() { return t_grad_enabled; }

Tape Tape::record(const Tensor& loss) {
  if (!loss.defined()) throw Error("backward on undefined tensor");
  if (loss.numel() != 1) throw ShapeError("backward requires a scalar loss, got " +
                                          shape_str(loss.shape()));
  Tape tape;
  tape.root_ = loss.impl();
  // Iterative post-order DFS; the graph is acyclic because nodes only ever
  // reference tensors that existed before them.
  std::unordered_set<const detail::TensorImpl*> visited;
  std::vector<std::pair<std::shared_ptr<detail::TensorImpl>, std::size_t>> stack;
  stack.emplace_back(loss.impl(), 0);
  visited.insert(loss.impl().get());
  while (!stack.empty()) {
    auto& [impl, next] = stack.back();
    const auto* node = impl->node.get();
    if (node && next < node->inputs.size()) {
      const auto& child = node->inputs[next++];
      if (child->requires_grad && visited.insert(child.get()).second) stack.emplace_back(child, 0);
      continue;
    }
    tape.order_.push_back(impl);
    stack.pop_back();
  }
  return tape;
}

std::vector<std::string> Tape::op_names() const {
  std::vector<std::string> names;
  for (const auto& impl : order_)
    if (impl->node) names.emplace_back(impl->node->name);
  return names;
}

void Tape::backward() {
  if (!root_) return;
  if (!root_->requires_grad) throw Error("loss does not depend on any tensor requiring grad");
  root_->grad = std::make_unique<Storage>(make_storage(root_->dtype, 1));
  std::visit([](auto& g) { g[0] = 1; }, *root_->grad);
  for (auto it = order_.rbegin(); it != order_.rend(); ++it) {
    auto& impl = **it;
    if (!impl.node) continue;
    if (impl.grad) impl.node->backward(impl);
    // Interior gradients are consumed exactly once.
    impl.grad.reset();
  }
}

void backward(const Tensor& loss) { Tape::record(loss).backward(); }

}  // namespace cucn
