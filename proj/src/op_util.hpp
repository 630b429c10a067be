#pragma once

#include <vector>

#include "gwc/tensor.hpp"

namespace gwc {

// Gradient buffer of an op input, or nullptr when the input does not track
// gradients.
template <typename T>
std::vector<T>* grad_target(TensorImpl<T>* in) {
  return in->requires_grad ? &in->grad_buffer() : nullptr;
}

}  // namespace gwc
