#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "gwc/error.hpp"

namespace gwc {

using Shape = std::vector<std::int64_t>;

std::int64_t numel_of(const Shape& shape);
std::string shape_str(const Shape& shape);

template <typename T>
struct TensorImpl;

/// A recorded backward step. `backward` reads `self.grad` (the gradient of the
/// tensor this node produced) and accumulates into the grads of `inputs`.
template <typename T>
struct Node {
  std::vector<std::shared_ptr<TensorImpl<T>>> inputs;
  std::function<void(TensorImpl<T>& self)> backward;
  const char* name = "";
};

template <typename T>
struct TensorImpl {
  Shape shape;
  std::vector<T> data;
  std::vector<T> grad;  // empty until a gradient has been accumulated
  bool requires_grad = false;
  std::shared_ptr<Node<T>> grad_fn;

  // Allocates a zero grad buffer on first use and returns it.
  std::vector<T>& grad_buffer() {
    if (grad.empty()) grad.assign(data.size(), T(0));
    return grad;
  }
};

/// Whether ops record a graph. Thread-local so eval-mode forwards on other
/// threads are unaffected.
bool grad_enabled();

class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

/// Dense row-major N-d array with optional reverse-mode gradient tracking.
///
/// Tensor is a shared handle: copies alias the same storage and graph node,
/// which is what lets a parameter registry, an optimizer and a layer all refer
/// to one weight. Use clone() for an independent copy.
template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor();
  explicit Tensor(Shape shape, T fill = T(0));
  Tensor(Shape shape, std::vector<T> values);

  static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }
  static Tensor full(Shape shape, T value) { return Tensor(std::move(shape), value); }
  static Tensor scalar(T value) { return Tensor(Shape{}, value); }

  const Shape& shape() const { return impl_->shape; }
  std::int64_t dim(int axis) const;
  int rank() const { return static_cast<int>(impl_->shape.size()); }
  std::size_t numel() const { return impl_->data.size(); }
  bool defined() const { return impl_ != nullptr; }

  std::span<T> data() { return impl_->data; }
  std::span<const T> data() const { return impl_->data; }
  T* ptr() { return impl_->data.data(); }
  const T* ptr() const { return impl_->data.data(); }

  bool has_grad() const { return !impl_->grad.empty(); }
  std::span<const T> grad() const { return impl_->grad; }
  std::span<T> mutable_grad() { return impl_->grad_buffer(); }
  void zero_grad() { impl_->grad.clear(); }

  bool requires_grad() const { return impl_->requires_grad; }
  Tensor& set_requires_grad(bool on);

  /// Value of a single-element tensor.
  T item() const;

  /// Runs reverse-mode differentiation from this scalar. Gradients accumulate
  /// into every reachable leaf that requires grad; intermediate nodes are
  /// released afterwards.
  void backward() const;

  /// Same values, no graph, no grad.
  Tensor detach() const;
  Tensor clone() const { return detach(); }

  std::shared_ptr<TensorImpl<T>> impl() const { return impl_; }
  static Tensor wrap(std::shared_ptr<TensorImpl<T>> impl) {
    Tensor t;
    t.impl_ = std::move(impl);
    return t;
  }

 private:
  std::shared_ptr<TensorImpl<T>> impl_;
};

/// Builds the result tensor of an op and, when any input tracks gradients,
/// attaches a backward node.
template <typename T>
Tensor<T> make_result(Shape shape, std::vector<T> values,
                      std::vector<std::shared_ptr<TensorImpl<T>>> inputs,
                      std::function<void(TensorImpl<T>&)> backward, const char* name);

/// Element offset of a row-major multi-index.
inline std::int64_t flat_index(const Shape& shape, std::initializer_list<std::int64_t> idx) {
  std::int64_t off = 0;
  std::size_t axis = 0;
  for (auto i : idx) off = off * shape[axis++] + i;
  return off;
}

extern template class Tensor<float>;
extern template class Tensor<double>;

}  // namespace gwc
