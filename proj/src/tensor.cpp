#include "gwc/tensor.hpp"

#include <sstream>
#include <unordered_set>

namespace gwc {

namespace {
thread_local bool g_grad_enabled = true;
}  // namespace

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

std::int64_t numel_of(const Shape& shape) {
  std::int64_t n = 1;
  for (auto e : shape) {
    if (e < 0) throw ShapeError("negative extent in shape " + shape_str(shape));
    n *= e;
  }
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

template <typename T>
Tensor<T>::Tensor() : impl_(std::make_shared<TensorImpl<T>>()) {
  impl_->shape = {0};
}

template <typename T>
Tensor<T>::Tensor(Shape shape, T fill) : impl_(std::make_shared<TensorImpl<T>>()) {
  const auto n = numel_of(shape);
  impl_->shape = std::move(shape);
  impl_->data.assign(static_cast<std::size_t>(n), fill);
}

template <typename T>
Tensor<T>::Tensor(Shape shape, std::vector<T> values) : impl_(std::make_shared<TensorImpl<T>>()) {
  const auto n = numel_of(shape);
  if (static_cast<std::size_t>(n) != values.size()) {
    throw ShapeError("shape " + shape_str(shape) + " needs " + std::to_string(n) +
                     " values, got " + std::to_string(values.size()));
  }
  impl_->shape = std::move(shape);
  impl_->data = std::move(values);
}

template <typename T>
std::int64_t Tensor<T>::dim(int axis) const {
  const int r = rank();
  if (axis < 0) axis += r;
  if (axis < 0 || axis >= r) {
    throw ShapeError("axis " + std::to_string(axis) + " out of range for rank " + std::to_string(r));
  }
  return impl_->shape[static_cast<std::size_t>(axis)];
}

template <typename T>
Tensor<T>& Tensor<T>::set_requires_grad(bool on) {
  impl_->requires_grad = on;
  return *this;
}

template <typename T>
T Tensor<T>::item() const {
  if (impl_->data.size() != 1) {
    throw ShapeError("item() on tensor of shape " + shape_str(impl_->shape));
  }
  return impl_->data[0];
}

template <typename T>
Tensor<T> Tensor<T>::detach() const {
  return Tensor(impl_->shape, impl_->data);
}

template <typename T>
void Tensor<T>::backward() const {
  if (impl_->data.size() != 1) {
    throw ShapeError("backward() needs a scalar loss, got shape " + shape_str(impl_->shape));
  }
  if (!impl_->requires_grad) return;

  // Iterative post-order DFS gives a topological order (inputs before users).
  std::vector<TensorImpl<T>*> order;
  std::unordered_set<TensorImpl<T>*> visited;
  std::vector<std::pair<TensorImpl<T>*, std::size_t>> stack;
  stack.emplace_back(impl_.get(), 0);
  visited.insert(impl_.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (node->grad_fn && next < node->grad_fn->inputs.size()) {
      TensorImpl<T>* child = node->grad_fn->inputs[next++].get();
      if (child->grad_fn && visited.insert(child).second) stack.emplace_back(child, 0);
      continue;
    }
    order.push_back(node);
    stack.pop_back();
  }

  impl_->grad_buffer()[0] += T(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    TensorImpl<T>* node = *it;
    if (node->grad_fn && !node->grad.empty()) node->grad_fn->backward(*node);
  }
  // Release the graph; intermediate gradients are not retained.
  for (TensorImpl<T>* node : order) {
    if (node != impl_.get()) node->grad.clear();
    node->grad_fn.reset();
  }
}

template <typename T>
Tensor<T> make_result(Shape shape, std::vector<T> values,
                      std::vector<std::shared_ptr<TensorImpl<T>>> inputs,
                      std::function<void(TensorImpl<T>&)> backward, const char* name) {
  Tensor<T> out(std::move(shape), std::move(values));
  if (!grad_enabled()) return out;
  bool any = false;
  for (const auto& in : inputs) any = any || in->requires_grad;
  if (!any) return out;
  auto node = std::make_shared<Node<T>>();
  node->inputs = std::move(inputs);
  node->backward = std::move(backward);
  node->name = name;
  out.impl()->requires_grad = true;
  out.impl()->grad_fn = std::move(node);
  return out;
}

template class Tensor<float>;
template class Tensor<double>;

template Tensor<float> make_result(Shape, std::vector<float>,
                                   std::vector<std::shared_ptr<TensorImpl<float>>>,
                                   std::function<void(TensorImpl<float>&)>, const char*);
template Tensor<double> make_result(Shape, std::vector<double>,
                                    std::vector<std::shared_ptr<TensorImpl<double>>>,
                                    std::function<void(TensorImpl<double>&)>, const char*);

}  // namespace gwc
